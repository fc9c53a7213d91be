//! Registry of sources, services, materialised rows and type models.
//!
//! The catalog also owns the current source-graph snapshot so that learned
//! edge costs persist with everything else. Every mutation re-derives the
//! graph, keeping learned costs for edges that survive.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::extractor::DocumentFormat;
use crate::sourcegraph::{GraphConfig, SourceGraph};
use crate::typist::TypeModel;
use crate::{RowId, SemanticTypeId, SourceId, Value};

pub const CATALOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("source `{0}` is already registered")]
    DuplicateId(SourceId),
    #[error("source `{0}` has an empty schema")]
    EmptySchema(SourceId),
    #[error("schema of `{source_id}` is invalid: {reason}")]
    InvalidSchema { source_id: SourceId, reason: String },
    #[error("row {row} of `{source_id}` has {got} cells, schema has {expected}")]
    ArityMismatch {
        source_id: SourceId,
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("service signature of `{0}` is invalid: {1}")]
    InvalidSignature(SourceId, String),
    #[error("unknown source `{0}`")]
    UnknownSource(SourceId),
    #[error("unknown semantic type `{0}`")]
    UnknownType(SemanticTypeId),
    #[error("`{0}` has no attribute `{1}`")]
    UnknownAttribute(SourceId, String),
    #[error("malformed catalog file: {0}")]
    Malformed(String),
    #[error("catalog schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(default)]
    pub semantic_type: Option<SemanticTypeId>,
    pub position: usize,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, semantic_type: Option<&str>, position: usize) -> Self {
        AttributeSpec {
            name: name.into(),
            semantic_type: semantic_type.map(SemanticTypeId::from),
            position,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Document,
    Table,
    Service,
}

/// How a source entered the catalog.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Origin {
    File { path: String },
    Paste { session: String },
    Declared,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub id: SourceId,
    pub kind: SourceKind,
    pub schema: Vec<AttributeSpec>,
    #[serde(default)]
    pub extractor_id: Option<String>,
    pub origin: Origin,
    /// Bumped whenever the schema is refined after registration.
    #[serde(default)]
    pub version: u32,
}

impl SourceDescriptor {
    pub fn new(id: impl Into<SourceId>, kind: SourceKind, schema: Vec<AttributeSpec>, origin: Origin) -> Self {
        SourceDescriptor {
            id: id.into(),
            kind,
            schema,
            extractor_id: None,
            origin,
            version: 0,
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.schema.iter().find(|a| a.name == name)
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FanOut {
    AtMostOne,
    Many,
}

/// Binding pattern of a callable service: bound inputs, free outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceSignature {
    pub inputs: Vec<AttributeSpec>,
    pub outputs: Vec<AttributeSpec>,
    pub fan_out: FanOut,
}

impl ServiceSignature {
    fn validate(&self, id: &SourceId) -> Result<(), CatalogError> {
        let bad = |r: &str| Err(CatalogError::InvalidSignature(id.clone(), r.to_string()));
        if self.inputs.is_empty() {
            return bad("at least one input attribute is required");
        }
        if self.outputs.is_empty() {
            return bad("at least one output attribute is required");
        }
        let inputs: BTreeSet<&str> = self.inputs.iter().map(|a| a.name.as_str()).collect();
        if inputs.len() != self.inputs.len() {
            return bad("duplicate input attribute");
        }
        let mut outputs = BTreeSet::new();
        for o in &self.outputs {
            if inputs.contains(o.name.as_str()) {
                return bad("inputs and outputs must be disjoint");
            }
            if !outputs.insert(o.name.as_str()) {
                return bad("duplicate output attribute");
            }
        }
        Ok(())
    }

    /// Full schema of the service relation: inputs followed by outputs.
    pub fn schema(&self) -> Vec<AttributeSpec> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .enumerate()
            .map(|(i, a)| AttributeSpec {
                position: i,
                ..a.clone()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedTable {
    pub source_id: SourceId,
    pub rows: Vec<Vec<Value>>,
    #[serde(default)]
    pub row_ids: Vec<RowId>,
}

impl MaterializedTable {
    /// Rows without identities yet; the catalog assigns them on registration.
    pub fn new(source_id: impl Into<SourceId>, rows: Vec<Vec<Value>>) -> Self {
        MaterializedTable {
            source_id: source_id.into(),
            rows,
            row_ids: Vec::new(),
        }
    }

    pub fn row(&self, id: RowId) -> Option<&[Value]> {
        self.row_ids
            .iter()
            .position(|r| *r == id)
            .map(|i| self.rows[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (RowId, &[Value])> {
        self.row_ids
            .iter()
            .copied()
            .zip(self.rows.iter().map(|r| r.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Raw bytes of a document a source was extracted from, kept so that later
/// pastes from the same origin can be generalised against it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub format: DocumentFormat,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttrRef {
    pub source: SourceId,
    pub attribute: String,
}

impl AttrRef {
    pub fn new(source: impl Into<SourceId>, attribute: impl Into<String>) -> Self {
        AttrRef {
            source: source.into(),
            attribute: attribute.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub sources: BTreeMap<SourceId, SourceDescriptor>,
    pub services: BTreeMap<SourceId, ServiceSignature>,
    pub tables: BTreeMap<SourceId, MaterializedTable>,
    pub types: BTreeMap<SemanticTypeId, TypeModel>,
    #[serde(default)]
    pub declared_links: Vec<(AttrRef, AttrRef)>,
    #[serde(default)]
    pub documents: BTreeMap<SourceId, StoredDocument>,
    pub graph: SourceGraph,
    next_row_id: u64,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::new(GraphConfig::default())
    }
}

impl Catalog {
    pub fn new(config: GraphConfig) -> Self {
        Catalog {
            sources: BTreeMap::new(),
            services: BTreeMap::new(),
            tables: BTreeMap::new(),
            types: BTreeMap::new(),
            declared_links: Vec::new(),
            documents: BTreeMap::new(),
            graph: SourceGraph::empty(config),
            next_row_id: 0,
        }
    }

    pub fn register_type(&mut self, model: TypeModel) {
        self.types.insert(model.type_id.clone(), model);
    }

    pub fn type_model(&self, id: &SemanticTypeId) -> Option<&TypeModel> {
        self.types.get(id)
    }

    fn check_schema(&self, id: &SourceId, schema: &[AttributeSpec]) -> Result<(), CatalogError> {
        if schema.is_empty() {
            return Err(CatalogError::EmptySchema(id.clone()));
        }
        let invalid = |reason: String| CatalogError::InvalidSchema {
            source_id: id.clone(),
            reason,
        };
        let mut names = BTreeSet::new();
        let mut positions = BTreeSet::new();
        for a in schema {
            if !names.insert(a.name.as_str()) {
                return Err(invalid(format!("duplicate attribute `{}`", a.name)));
            }
            if !positions.insert(a.position) {
                return Err(invalid(format!("duplicate position {}", a.position)));
            }
            if let Some(t) = &a.semantic_type {
                if !self.types.contains_key(t) {
                    return Err(CatalogError::UnknownType(t.clone()));
                }
            }
        }
        Ok(())
    }

    fn check_new_id(&self, id: &SourceId) -> Result<(), CatalogError> {
        if self.sources.contains_key(id) {
            Err(CatalogError::DuplicateId(id.clone()))
        } else {
            Ok(())
        }
    }

    /// Registers a document or table source together with its rows. Row ids
    /// supplied in `data` are discarded; fresh sequence numbers are assigned.
    pub fn register_source(
        &mut self,
        mut descriptor: SourceDescriptor,
        data: MaterializedTable,
    ) -> Result<SourceId, CatalogError> {
        let id = descriptor.id.clone();
        self.check_new_id(&id)?;
        if descriptor.kind == SourceKind::Service {
            return Err(CatalogError::InvalidSchema {
                source_id: id,
                reason: "services are registered with register_service".into(),
            });
        }
        descriptor.schema.sort_by_key(|a| a.position);
        self.check_schema(&id, &descriptor.schema)?;
        let arity = descriptor.schema.len();
        for (i, r) in data.rows.iter().enumerate() {
            if r.len() != arity {
                return Err(CatalogError::ArityMismatch {
                    source_id: id,
                    row: i,
                    expected: arity,
                    got: r.len(),
                });
            }
        }
        let row_ids = (0..data.rows.len())
            .map(|_| {
                let r = RowId(self.next_row_id);
                self.next_row_id += 1;
                r
            })
            .collect();
        self.tables.insert(
            id.clone(),
            MaterializedTable {
                source_id: id.clone(),
                rows: data.rows,
                row_ids,
            },
        );
        self.sources.insert(id.clone(), descriptor);
        self.refresh_graph();
        Ok(id)
    }

    /// Registers a callable service. The descriptor's schema is replaced by
    /// the signature's inputs followed by its outputs.
    pub fn register_service(
        &mut self,
        signature: ServiceSignature,
        mut descriptor: SourceDescriptor,
    ) -> Result<SourceId, CatalogError> {
        let id = descriptor.id.clone();
        self.check_new_id(&id)?;
        signature.validate(&id)?;
        descriptor.kind = SourceKind::Service;
        descriptor.schema = signature.schema();
        self.check_schema(&id, &descriptor.schema)?;
        self.sources.insert(id.clone(), descriptor);
        self.services.insert(id.clone(), signature);
        self.refresh_graph();
        Ok(id)
    }

    pub fn store_document(&mut self, source: &SourceId, document: StoredDocument) -> Result<(), CatalogError> {
        if !self.sources.contains_key(source) {
            return Err(CatalogError::UnknownSource(source.clone()));
        }
        self.documents.insert(source.clone(), document);
        Ok(())
    }

    fn check_attr(&self, r: &AttrRef) -> Result<(), CatalogError> {
        let d = self
            .sources
            .get(&r.source)
            .ok_or_else(|| CatalogError::UnknownSource(r.source.clone()))?;
        d.attribute(&r.attribute)
            .map(|_| ())
            .ok_or_else(|| CatalogError::UnknownAttribute(r.source.clone(), r.attribute.clone()))
    }

    /// Declares a known foreign-key style link between two attributes.
    pub fn declare_link(&mut self, a: AttrRef, b: AttrRef) -> Result<(), CatalogError> {
        self.check_attr(&a)?;
        self.check_attr(&b)?;
        if a.source == b.source {
            return Err(CatalogError::InvalidSchema {
                source_id: a.source,
                reason: "links must connect distinct sources".into(),
            });
        }
        self.declared_links.push((a, b));
        self.refresh_graph();
        Ok(())
    }

    /// Replaces the schema of a source after its extractor was refined.
    pub fn refine_schema(&mut self, id: &SourceId, schema: Vec<AttributeSpec>) -> Result<u32, CatalogError> {
        let arity = self
            .sources
            .get(id)
            .ok_or_else(|| CatalogError::UnknownSource(id.clone()))?
            .schema
            .len();
        self.check_schema(id, &schema)?;
        if schema.len() != arity {
            return Err(CatalogError::InvalidSchema {
                source_id: id.clone(),
                reason: "refinement must keep the arity".into(),
            });
        }
        let d = self.sources.get_mut(id).expect("checked above");
        d.schema = schema;
        d.version += 1;
        let v = d.version;
        self.refresh_graph();
        Ok(v)
    }

    /// Adds rows to a materialised source under fresh ids.
    pub fn append_rows(&mut self, id: &SourceId, rows: Vec<Vec<Value>>) -> Result<Vec<RowId>, CatalogError> {
        let arity = self
            .sources
            .get(id)
            .ok_or_else(|| CatalogError::UnknownSource(id.clone()))?
            .schema
            .len();
        let t = self
            .tables
            .get_mut(id)
            .ok_or_else(|| CatalogError::UnknownSource(id.clone()))?;
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != arity) {
            return Err(CatalogError::ArityMismatch {
                source_id: id.clone(),
                row: t.rows.len() + i,
                expected: arity,
                got: r.len(),
            });
        }
        let mut ids = Vec::with_capacity(rows.len());
        for r in rows {
            let rid = RowId(self.next_row_id);
            self.next_row_id += 1;
            t.rows.push(r);
            t.row_ids.push(rid);
            ids.push(rid);
        }
        Ok(ids)
    }

    /// Drops rows; their ids are never reused.
    pub fn delete_rows(&mut self, id: &SourceId, rows: &[RowId]) -> Result<usize, CatalogError> {
        let t = self
            .tables
            .get_mut(id)
            .ok_or_else(|| CatalogError::UnknownSource(id.clone()))?;
        let before = t.rows.len();
        let mut keep_rows = Vec::new();
        let mut keep_ids = Vec::new();
        for (rid, row) in t.row_ids.iter().zip(t.rows.drain(..)) {
            if !rows.contains(rid) {
                keep_ids.push(*rid);
                keep_rows.push(row);
            }
        }
        t.rows = keep_rows;
        t.row_ids = keep_ids;
        Ok(before - t.rows.len())
    }

    pub fn source(&self, id: &SourceId) -> Option<&SourceDescriptor> {
        self.sources.get(id)
    }

    pub fn table(&self, id: &SourceId) -> Option<&MaterializedTable> {
        self.tables.get(id)
    }

    pub fn service(&self, id: &SourceId) -> Option<&ServiceSignature> {
        self.services.get(id)
    }

    pub fn is_service(&self, id: &SourceId) -> bool {
        self.services.contains_key(id)
    }

    /// Every attribute carrying `type_id`, ordered by source id then position.
    pub fn find_attributes_by_type(
        &self,
        type_id: &SemanticTypeId,
    ) -> Result<Vec<(SourceId, AttributeSpec)>, CatalogError> {
        if !self.types.contains_key(type_id) {
            return Err(CatalogError::UnknownType(type_id.clone()));
        }
        Ok(self
            .sources
            .values()
            .flat_map(|d| {
                d.schema
                    .iter()
                    .filter(|a| a.semantic_type.as_ref() == Some(type_id))
                    .map(|a| (d.id.clone(), a.clone()))
            })
            .collect())
    }

    /// Re-derives association edges; edges that already existed keep their
    /// learned cost and origin.
    pub fn refresh_graph(&mut self) {
        let fresh = crate::sourcegraph::derive_edges(self);
        let config = self.graph.config.clone();
        let mut graph = SourceGraph::from_catalog_nodes(self, config);
        for mut e in fresh {
            if let Some(old) = self.graph.edges.get(&e.id) {
                if old.endpoints == e.endpoints && old.kind == e.kind {
                    e.cost = old.cost;
                    e.origin = old.origin;
                }
            }
            graph.edges.insert(e.id.clone(), e);
        }
        self.graph = graph;
    }

    /// Installs a graph snapshot produced by a weight update.
    pub fn install_graph(&mut self, graph: SourceGraph) {
        self.graph = graph;
    }

    /// Checks that every cross-reference resolves.
    pub fn validate(&self) -> Result<(), CatalogError> {
        for (id, d) in &self.sources {
            if &d.id != id {
                return Err(CatalogError::Malformed(format!("descriptor key `{id}` mismatch")));
            }
            self.check_schema(id, &d.schema)?;
            match d.kind {
                SourceKind::Service => {
                    if !self.services.contains_key(id) {
                        return Err(CatalogError::Malformed(format!("service `{id}` has no signature")));
                    }
                }
                _ => {
                    let t = self
                        .tables
                        .get(id)
                        .ok_or_else(|| CatalogError::Malformed(format!("source `{id}` has no table")))?;
                    if t.row_ids.len() != t.rows.len() {
                        return Err(CatalogError::Malformed(format!("row ids of `{id}` do not match rows")));
                    }
                    let unique: BTreeSet<_> = t.row_ids.iter().collect();
                    if unique.len() != t.row_ids.len() {
                        return Err(CatalogError::Malformed(format!("duplicate row id in `{id}`")));
                    }
                    if let Some((i, r)) = t.rows.iter().enumerate().find(|(_, r)| r.len() != d.schema.len()) {
                        return Err(CatalogError::ArityMismatch {
                            source_id: id.clone(),
                            row: i,
                            expected: d.schema.len(),
                            got: r.len(),
                        });
                    }
                }
            }
        }
        for id in self.services.keys().chain(self.tables.keys()).chain(self.documents.keys()) {
            if !self.sources.contains_key(id) {
                return Err(CatalogError::UnknownSource(id.clone()));
            }
        }
        for (a, b) in &self.declared_links {
            self.check_attr(a)?;
            self.check_attr(b)?;
        }
        for e in self.graph.edges.values() {
            let (a, b) = e.endpoints.nodes();
            for n in [a, b] {
                if !self.graph.nodes.contains(n) || !self.sources.contains_key(n) {
                    return Err(CatalogError::UnknownSource(n.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Versioned<'a> {
            schema_version: u32,
            #[serde(flatten)]
            catalog: &'a Catalog,
        }
        serde_json::to_string_pretty(&Versioned {
            schema_version: CATALOG_SCHEMA_VERSION,
            catalog: self,
        })
        .expect("catalog serializes")
    }

    pub fn from_json(text: &str) -> Result<Catalog, CatalogError> {
        let mut doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CatalogError::Malformed(e.to_string()))?;
        let obj = doc
            .as_object_mut()
            .ok_or_else(|| CatalogError::Malformed("top level is not an object".into()))?;
        let version = obj
            .remove("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CatalogError::Malformed("missing integer schema_version".into()))?;
        if version != CATALOG_SCHEMA_VERSION as u64 {
            return Err(CatalogError::VersionMismatch {
                found: version,
                expected: CATALOG_SCHEMA_VERSION,
            });
        }
        let catalog: Catalog =
            serde_json::from_value(doc).map_err(|e| CatalogError::Malformed(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }
}

pub fn save_catalog(catalog: &Catalog, path: &Path) -> Result<(), CatalogError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(catalog.to_json().as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let text = fs::read_to_string(path)?;
    Catalog::from_json(&text)
}
