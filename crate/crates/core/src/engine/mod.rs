//! Query evaluation with provenance. Every result tuple records how it was
//! derived, so it can be explained, replayed and traced back to its query.

mod prov;
pub mod similarity;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::services::{ServiceClient, ServiceError, ServiceRegistry};
use crate::sourcegraph::{EdgeKind, Endpoints, QueryTree, SourceGraph};
use crate::{EdgeId, RowId, SemanticTypeId, SourceId, Value};

pub use prov::{replay, responsible_queries, CallFingerprint, ProvExpr, ProvGraph, ProvNode};
use similarity::link_similarity;

/// Record-link similarity a pair must reach to be joined.
pub const DEFAULT_LINK_THRESHOLD: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown source `{0}`")]
    UnknownSource(SourceId),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("no column `{attribute}` of `{source_id}` in the intermediate result")]
    MissingColumn { source_id: SourceId, attribute: String },
    #[error("input `{input}` of service `{service}` is not bound")]
    UnboundInput { service: SourceId, input: String },
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("column `{name}` has conflicting types `{left}` and `{right}`")]
    TypeConflict { name: String, left: String, right: String },
    #[error("nothing to union")]
    EmptyUnion,
    #[error("row {row} of `{source_id}` no longer exists")]
    DanglingLeaf { source_id: SourceId, row: RowId },
    #[error("cached answer of `{service}` for {inputs:?} is gone")]
    EvictedCache { service: SourceId, inputs: Vec<Value> },
    #[error("alternative derivations replay to different tuples")]
    AltMismatch,
    #[error("row {0} carries no query lineage")]
    ProvenanceMissing(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultColumn {
    pub name: String,
    pub source: SourceId,
    pub attribute: String,
    pub semantic_type: Option<SemanticTypeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cells: Vec<Value>,
    pub prov: ProvExpr,
    /// Cost of the query that produced the row.
    pub score: f64,
    pub queries: BTreeSet<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, source: &SourceId, attribute: &str) -> Result<usize, EngineError> {
        self.columns
            .iter()
            .position(|c| &c.source == source && c.attribute.eq_ignore_ascii_case(attribute))
            .ok_or_else(|| EngineError::MissingColumn {
                source_id: source.clone(),
                attribute: attribute.to_string(),
            })
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn cells(&self) -> Vec<Vec<Value>> {
        self.rows.iter().map(|r| r.cells.clone()).collect()
    }
}

/// Every row of a materialised source, in row-id order.
pub fn scan(catalog: &Catalog, source: &SourceId) -> Result<ResultTable, EngineError> {
    let desc = catalog.source(source).ok_or_else(|| EngineError::UnknownSource(source.clone()))?;
    let table = catalog.table(source).ok_or_else(|| EngineError::UnknownSource(source.clone()))?;
    let columns = desc
        .schema
        .iter()
        .map(|a| ResultColumn {
            name: a.name.clone(),
            source: source.clone(),
            attribute: a.name.clone(),
            semantic_type: a.semantic_type.clone(),
        })
        .collect();
    let rows = table
        .iter()
        .map(|(id, cells)| ResultRow {
            cells: cells.to_vec(),
            prov: ProvExpr::Leaf {
                source: source.clone(),
                row: id,
            },
            score: 0.0,
            queries: BTreeSet::new(),
        })
        .collect();
    Ok(ResultTable { columns, rows })
}

fn joined(left: &ResultRow, right: &ResultRow, edge: &EdgeId) -> ResultRow {
    let mut cells = left.cells.clone();
    cells.extend(right.cells.iter().cloned());
    ResultRow {
        cells,
        prov: ProvExpr::Join {
            edge: edge.clone(),
            left: Box::new(left.prov.clone()),
            right: Box::new(right.prov.clone()),
        },
        score: left.score.max(right.score),
        queries: left.queries.union(&right.queries).cloned().collect(),
    }
}

fn concat_columns(left: &ResultTable, right: &ResultTable) -> Vec<ResultColumn> {
    left.columns.iter().chain(&right.columns).cloned().collect()
}

/// Inner equality join on the column pairs `(left index, right index)`.
/// Nulls never match. Output follows left order, then right order.
pub fn equijoin(left: &ResultTable, right: &ResultTable, pairs: &[(usize, usize)], edge: &EdgeId) -> ResultTable {
    let mut index: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
    for (j, r) in right.rows.iter().enumerate() {
        let key: Option<Vec<&str>> = pairs.iter().map(|&(_, c)| r.cells[c].as_deref()).collect();
        if let Some(key) = key {
            index.entry(key).or_default().push(j);
        }
    }
    let mut rows = Vec::new();
    for l in &left.rows {
        let key: Option<Vec<&str>> = pairs.iter().map(|&(c, _)| l.cells[c].as_deref()).collect();
        if let Some(matches) = key.and_then(|k| index.get(&k)) {
            rows.extend(matches.iter().map(|&j| joined(l, &right.rows[j], edge)));
        }
    }
    ResultTable {
        columns: concat_columns(left, right),
        rows,
    }
}

/// Joins each left row with the single most similar right row, if that row
/// reaches `threshold`. Earlier right rows win ties; unmatched left rows are
/// dropped.
pub fn record_link_join(
    left: &ResultTable,
    right: &ResultTable,
    pairs: &[(usize, usize)],
    threshold: f64,
    edge: &EdgeId,
) -> ResultTable {
    let mut rows = Vec::new();
    for l in &left.rows {
        let lk: Vec<Value> = pairs.iter().map(|&(c, _)| l.cells[c].clone()).collect();
        let mut best: Option<(f64, usize)> = None;
        for (j, r) in right.rows.iter().enumerate() {
            let rk: Vec<Value> = pairs.iter().map(|&(_, c)| r.cells[c].clone()).collect();
            let s = link_similarity(&lk, &rk);
            if s >= threshold && best.is_none_or(|(b, _)| s > b) {
                best = Some((s, j));
            }
        }
        if let Some((_, j)) = best {
            rows.push(joined(l, &right.rows[j], edge));
        }
    }
    ResultTable {
        columns: concat_columns(left, right),
        rows,
    }
}

/// Calls the service once per input row with the bound columns. Every
/// candidate answer becomes its own output row; a row with no answer, or
/// with a null input, keeps null outputs.
pub fn dependent_join(
    input: &ResultTable,
    client: &ServiceClient,
    bindings: &[usize],
    edge: &EdgeId,
) -> Result<ResultTable, EngineError> {
    let outputs = &client.signature.outputs;
    let mut columns = input.columns.clone();
    columns.extend(outputs.iter().map(|a| ResultColumn {
        name: a.name.clone(),
        source: client.id.clone(),
        attribute: a.name.clone(),
        semantic_type: a.semantic_type.clone(),
    }));
    let mut rows = Vec::with_capacity(input.rows.len());
    for row in &input.rows {
        let args: Vec<Value> = bindings.iter().map(|&c| row.cells[c].clone()).collect();
        let answers = if args.iter().any(Option::is_none) {
            Vec::new()
        } else {
            client.call(&args)?
        };
        let emit = |out: Vec<Value>, candidate: Option<usize>| {
            let mut cells = row.cells.clone();
            cells.extend(out);
            ResultRow {
                cells,
                prov: ProvExpr::ServiceCall {
                    edge: edge.clone(),
                    input: Box::new(row.prov.clone()),
                    call: CallFingerprint {
                        service: client.id.clone(),
                        inputs: args.clone(),
                        candidate,
                    },
                },
                score: row.score,
                queries: row.queries.clone(),
            }
        };
        if answers.is_empty() {
            rows.push(emit(vec![None; outputs.len()], None));
        } else {
            rows.extend(answers.into_iter().enumerate().map(|(i, a)| emit(a, Some(i))));
        }
    }
    Ok(ResultTable { columns, rows })
}

/// Merges rows with equal cells, keeping the first position, combining
/// derivations into an alternative and keeping the lowest score.
pub fn merge_duplicates(table: &mut ResultTable) {
    let mut first: HashMap<Vec<Value>, usize> = HashMap::new();
    let mut merged: Vec<(ResultRow, Vec<ProvExpr>)> = Vec::new();
    for row in std::mem::take(&mut table.rows) {
        match first.get(&row.cells) {
            Some(&i) => {
                let (kept, provs) = &mut merged[i];
                provs.push(row.prov);
                kept.score = kept.score.min(row.score);
                kept.queries.extend(row.queries);
            }
            None => {
                first.insert(row.cells.clone(), merged.len());
                let prov = row.prov.clone();
                merged.push((row, vec![prov]));
            }
        }
    }
    table.rows = merged
        .into_iter()
        .map(|(mut row, provs)| {
            if provs.len() > 1 {
                row.prov = ProvExpr::alt(provs);
            }
            row
        })
        .collect();
}

/// Ordered union of the branch schemas, matching columns by name and
/// padding absent ones with nulls. Each row is wrapped in its branch.
pub fn union_pad(branches: &[(String, ResultTable)]) -> Result<ResultTable, EngineError> {
    if branches.is_empty() {
        return Err(EngineError::EmptyUnion);
    }
    let mut columns: Vec<ResultColumn> = Vec::new();
    for (_, t) in branches {
        for c in &t.columns {
            match columns.iter_mut().find(|u| u.name == c.name) {
                Some(u) => match (&u.semantic_type, &c.semantic_type) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(EngineError::TypeConflict {
                            name: c.name.clone(),
                            left: a.to_string(),
                            right: b.to_string(),
                        })
                    }
                    (None, Some(b)) => u.semantic_type = Some(b.clone()),
                    _ => {}
                },
                None => columns.push(c.clone()),
            }
        }
    }
    let mut rows = Vec::new();
    for (query, t) in branches {
        let layout: Vec<Option<usize>> = columns
            .iter()
            .map(|u| t.columns.iter().position(|c| c.name == u.name))
            .collect();
        for r in &t.rows {
            let mut queries = r.queries.clone();
            queries.insert(query.clone());
            rows.push(ResultRow {
                cells: layout.iter().map(|i| i.and_then(|i| r.cells[i].clone())).collect(),
                prov: ProvExpr::UnionBranch {
                    query: query.clone(),
                    layout: layout.clone(),
                    child: Box::new(r.prov.clone()),
                },
                score: r.score,
                queries,
            });
        }
    }
    let mut out = ResultTable { columns, rows };
    merge_duplicates(&mut out);
    Ok(out)
}

fn link_pairs(
    current: &ResultTable,
    other: &ResultTable,
    endpoints: &Endpoints,
) -> Result<Vec<(usize, usize)>, EngineError> {
    let Endpoints::Link { left, right, pairs } = endpoints else {
        return Err(EngineError::InvalidQuery("binding edge used as a join".into()));
    };
    let current_is_left = current.columns.iter().any(|c| &c.source == left);
    pairs
        .iter()
        .map(|(la, ra)| {
            if current_is_left {
                Ok((current.column(left, la)?, other.column(right, ra)?))
            } else {
                Ok((current.column(right, ra)?, other.column(left, la)?))
            }
        })
        .collect()
}

struct Evaluator<'a> {
    graph: &'a SourceGraph,
    catalog: &'a Catalog,
    services: &'a ServiceRegistry,
    query: &'a QueryTree,
    link_threshold: f64,
}

impl Evaluator<'_> {
    fn subtree(&self, node: &SourceId, via: Option<&EdgeId>) -> Result<ResultTable, EngineError> {
        let mut current = scan(self.catalog, node)?;
        for id in &self.query.edges {
            if Some(id) == via {
                continue;
            }
            let edge = self.graph.edges.get(id).ok_or_else(|| EngineError::InvalidQuery(format!("unknown edge `{id}`")))?;
            let Some(other) = edge.endpoints.other(node) else { continue };
            current = match &edge.endpoints {
                Endpoints::Binding { source, service, bindings } => {
                    if other != service {
                        return Err(EngineError::InvalidQuery(format!("service `{node}` is not a leaf")));
                    }
                    let client = self.services.get(service)?;
                    let cols = client
                        .signature
                        .inputs
                        .iter()
                        .map(|input| {
                            let (attr, _) = bindings.iter().find(|(_, i)| i == &input.name).ok_or_else(|| {
                                EngineError::UnboundInput {
                                    service: service.clone(),
                                    input: input.name.clone(),
                                }
                            })?;
                            current.column(source, attr)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    dependent_join(&current, client, &cols, id)?
                }
                Endpoints::Link { .. } => {
                    let sub = self.subtree(other, Some(id))?;
                    let pairs = link_pairs(&current, &sub, &edge.endpoints)?;
                    match edge.kind {
                        EdgeKind::RecordLink => record_link_join(&current, &sub, &pairs, self.link_threshold, id),
                        _ => equijoin(&current, &sub, &pairs, id),
                    }
                }
            };
        }
        Ok(current)
    }
}

/// Gives every column a unique display name, qualifying clashing names
/// with their source.
fn disambiguate(columns: &mut [ResultColumn]) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in columns.iter() {
        *counts.entry(c.name.to_lowercase()).or_default() += 1;
    }
    for c in columns.iter_mut() {
        if counts[&c.name.to_lowercase()] > 1 {
            c.name = format!("{}.{}", c.source, c.attribute);
        }
    }
}

/// Runs a query tree depth-first from its lowest-id materialised source,
/// visiting tree edges in edge-id order.
pub fn evaluate(
    query: &QueryTree,
    graph: &SourceGraph,
    catalog: &Catalog,
    services: &ServiceRegistry,
    link_threshold: f64,
) -> Result<ResultTable, EngineError> {
    graph
        .validate_tree(query)
        .map_err(|e| EngineError::InvalidQuery(e.to_string()))?;
    let root = query
        .nodes
        .iter()
        .find(|n| !graph.is_service(n))
        .ok_or_else(|| EngineError::InvalidQuery("no materialised source".into()))?;
    let ev = Evaluator {
        graph,
        catalog,
        services,
        query,
        link_threshold,
    };
    let mut table = ev.subtree(root, None)?;
    disambiguate(&mut table.columns);
    let qid = query.id();
    for r in &mut table.rows {
        r.score = query.cost;
        r.queries = BTreeSet::from([qid.clone()]);
    }
    merge_duplicates(&mut table);
    Ok(table)
}
