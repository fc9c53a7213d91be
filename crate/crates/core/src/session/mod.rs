//! Workspace sessions: interpreting pastes, offering ranked completions and
//! routing accept/reject feedback to the learners.
//!
//! A session owns a private copy of the catalog, so learned edge costs and
//! refined extractions stay local to it. Every successful event is appended
//! to the session log; replaying the log on the starting catalog rebuilds
//! the same state.

mod export;
mod log;
mod types;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use export::{export_grid, ExportFormat};
pub use log::{parse_ndjson, to_ndjson, SessionEvent, LOG_SCHEMA_VERSION};
pub use types::*;

use crate::catalog::{AttrRef, AttributeSpec, Catalog, CatalogError, MaterializedTable, Origin, SourceDescriptor, SourceKind};
use crate::engine::{evaluate, EngineError, ProvExpr, ResultTable, DEFAULT_LINK_THRESHOLD};
use crate::extractor::html::collapse;
use crate::extractor::{
    apply_rule, induce_rule, infer_document_model, refine_rule, DocumentFormat, DocumentModel, ExampleSelection,
    ExtractError, ExtractionRule, RuleForm,
};
use crate::ingest::{ingest_document, source_id_for, IngestError};
use crate::services::ServiceRegistry;
use crate::sourcegraph::{
    explain_pasted_tuples, mira_update, resolve_attribution, AttributedCell, GraphError, QueryTree, RankingConstraint,
};
use crate::typist::{learn_type, recognize_column, update_type, TypistError, DEFAULT_TYPE_THRESHOLD};
use crate::{RowId, SemanticTypeId, SourceId, Value};

/// Most rows shown in a suggestion preview.
pub const PREVIEW_ROWS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("the paste contains no cells")]
    EmptyPaste,
    #[error("paste origin cannot be read: {0}")]
    OriginUnreadable(String),
    #[error("unsupported paste: {0}")]
    UnsupportedPaste(String),
    #[error("editing cells is not supported: {0}")]
    Cleaning(String),
    #[error("unknown suggestion `{0}`")]
    UnknownSuggestion(String),
    #[error("unknown column {0}")]
    UnknownColumn(usize),
    #[error("unknown row {0}")]
    UnknownRow(usize),
    #[error("a column named `{0}` already exists")]
    DuplicateColumnName(String),
    #[error("contradictory feedback: {0}")]
    Contradictory(String),
    #[error("invalid feedback: {0}")]
    BadFeedback(String),
    #[error("the output grid is empty")]
    EmptyGrid,
    #[error("the grid has no latitude and longitude columns")]
    NoGeoColumns,
    #[error("unsupported export format `{0}`")]
    BadFormat(String),
    #[error("bad session log: {0}")]
    Log(String),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Typist(#[from] TypistError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// τ: record-link and value-matching threshold.
    pub link_threshold: f64,
    /// Recognition score a type needs to be suggested.
    pub type_threshold: f64,
    pub preview_rows: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            link_threshold: DEFAULT_LINK_THRESHOLD,
            type_threshold: DEFAULT_TYPE_THRESHOLD,
            preview_rows: PREVIEW_ROWS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Session {
    pub config: SessionConfig,
    pub catalog: Catalog,
    pub state: WorkspaceState,
    initial: Arc<Catalog>,
}

fn digest(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn norm_row(row: &[String]) -> Vec<Value> {
    row.iter().map(|v| Some(collapse(v)).filter(|v| !v.is_empty())).collect()
}

fn unique_label(columns: &[GridColumn], attr: &AttrRef) -> String {
    if columns.iter().any(|c| c.label.eq_ignore_ascii_case(&attr.attribute)) {
        format!("{}.{}", attr.source, attr.attribute)
    } else {
        attr.attribute.clone()
    }
}

/// Projects result rows onto grid bindings, merging rows that become equal.
/// Each projected row's provenance replays to exactly its projected cells.
fn project(
    table: &ResultTable,
    bindings: &[Option<AttrRef>],
    query_id: &str,
) -> Result<Vec<(Vec<Value>, ProvExpr)>, SessionError> {
    let layout: Vec<Option<usize>> = bindings
        .iter()
        .map(|b| b.as_ref().map(|b| table.column(&b.source, &b.attribute)).transpose())
        .collect::<Result<_, _>>()?;
    let mut index: HashMap<Vec<Value>, usize> = HashMap::new();
    let mut out: Vec<(Vec<Value>, Vec<ProvExpr>)> = Vec::new();
    for r in &table.rows {
        let cells: Vec<Value> = layout.iter().map(|i| i.and_then(|i| r.cells[i].clone())).collect();
        let prov = ProvExpr::UnionBranch {
            query: query_id.to_string(),
            layout: layout.clone(),
            child: Box::new(r.prov.clone()),
        };
        match index.get(&cells) {
            Some(&k) => out[k].1.push(prov),
            None => {
                index.insert(cells.clone(), out.len());
                out.push((cells, vec![prov]));
            }
        }
    }
    Ok(out.into_iter().map(|(c, p)| (c, ProvExpr::alt(p))).collect())
}

impl Session {
    pub fn new(catalog: Catalog, config: SessionConfig) -> Self {
        Session {
            config,
            initial: Arc::new(catalog.clone()),
            catalog,
            state: WorkspaceState::default(),
        }
    }

    /// The catalog the session started from; the log replays against it.
    pub fn initial_catalog(&self) -> &Catalog {
        &self.initial
    }

    /// Applies `f` to a copy and keeps the result only if it succeeds, so a
    /// failed event leaves neither state nor log changed.
    fn transact<T>(
        &mut self,
        event: SessionEvent,
        f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let mut next = self.clone();
        next.state.diagnostics.clear();
        let out = f(&mut next)?;
        next.state.log.push(event);
        *self = next;
        Ok(out)
    }

    // ---- pastes -------------------------------------------------------

    /// Interprets a paste. Cells from the grid's own source are extraction
    /// examples; cells from another source pasted right of the grid switch
    /// the workspace to integration and are explained by candidate queries.
    pub fn handle_paste(&mut self, services: &ServiceRegistry, event: PasteEvent) -> Result<PasteOutcome, SessionError> {
        self.transact(SessionEvent::Paste { event: event.clone() }, |s| {
            let before = s.state.mode;
            s.paste(services, &event)?;
            s.refresh(services)?;
            Ok(PasteOutcome {
                mode: s.state.mode,
                mode_changed: s.state.mode != before,
                suggestions: s.state.suggestions.clone(),
                diagnostics: s.state.diagnostics.clone(),
            })
        })
    }

    fn resolve_origin(&mut self, event: &PasteEvent) -> Result<SourceId, SessionError> {
        match &event.origin {
            PasteOrigin::Source { source } => {
                if self.catalog.sources.contains_key(source) {
                    Ok(source.clone())
                } else {
                    Err(SessionError::OriginUnreadable(format!("unknown source `{source}`")))
                }
            }
            PasteOrigin::Document { name, format, content } => {
                let id = source_id_for(name);
                if !self.catalog.sources.contains_key(&id) {
                    ingest_document(
                        &mut self.catalog,
                        id.clone(),
                        *format,
                        content.as_bytes(),
                        Origin::Paste {
                            session: name.clone(),
                        },
                        self.config.type_threshold,
                    )
                    .map_err(|e| SessionError::OriginUnreadable(e.to_string()))?;
                }
                Ok(id)
            }
            PasteOrigin::Unattributed => {
                let cell = AttributedCell::bare(event.cells[0].value.clone());
                resolve_attribution(&cell, &self.catalog, self.config.link_threshold)
                    .map(|(s, _)| s)
                    .map_err(|e| SessionError::OriginUnreadable(e.to_string()))
            }
        }
    }

    fn paste(&mut self, services: &ServiceRegistry, event: &PasteEvent) -> Result<(), SessionError> {
        if event.cells.is_empty() {
            return Err(SessionError::EmptyPaste);
        }
        let mut grid: BTreeMap<usize, BTreeMap<usize, String>> = BTreeMap::new();
        for c in &event.cells {
            grid.entry(c.row).or_default().insert(c.column, c.value.clone());
        }
        let columns: Vec<usize> = grid.values().next().expect("non-empty").keys().copied().collect();
        let contiguous = |keys: &[usize]| keys.windows(2).all(|w| w[1] == w[0] + 1);
        let row_ids: Vec<usize> = grid.keys().copied().collect();
        if !contiguous(&columns)
            || !contiguous(&row_ids)
            || grid.values().any(|r| r.keys().copied().collect::<Vec<_>>() != columns)
        {
            return Err(SessionError::UnsupportedPaste("pasted cells must form a rectangle".into()));
        }
        let first_col = columns[0];
        let rows: Vec<(usize, Vec<String>)> =
            grid.into_iter().map(|(r, cs)| (r, cs.into_values().collect())).collect();

        let pasted: Vec<Vec<Value>> = rows.iter().map(|(_, r)| norm_row(r)).collect();
        for s in &self.state.suggestions {
            if s.kind == SuggestionKind::RowCompletion && pasted.iter().all(|r| s.preview.rows.contains(r)) {
                self.state.confirmable.insert(s.id.clone());
                return Ok(());
            }
        }

        let out = &self.state.output;
        let mut inside = 0;
        for (r, vals) in &rows {
            for (k, v) in vals.iter().enumerate() {
                let c = first_col + k;
                if *r < out.rows.len() && c < out.columns.len() {
                    inside += 1;
                    if out.rows[*r].cells[c] != Some(collapse(v)) {
                        return Err(SessionError::Cleaning(format!("cell ({r}, {c}) already holds a value")));
                    }
                }
            }
        }
        if inside > 0 {
            if inside == event.cells.len() {
                return Ok(());
            }
            return Err(SessionError::UnsupportedPaste("the paste partly overlaps the grid".into()));
        }

        let origin = self.resolve_origin(event)?;
        if self.state.primary.as_ref().is_none_or(|p| *p == origin) {
            self.paste_examples(origin, first_col, rows)
        } else {
            self.paste_join(services, origin, first_col, rows)
        }
    }

    fn document_model(&self, source: &SourceId) -> Result<DocumentModel, SessionError> {
        let doc = self
            .catalog
            .documents
            .get(source)
            .ok_or_else(|| SessionError::OriginUnreadable(format!("`{source}` has no stored document")))?;
        Ok(infer_document_model(doc.content.as_bytes(), doc.format)?)
    }

    fn example_columns(&self, source: &SourceId, rule: Option<&ExtractionRule>, width: usize) -> Vec<GridColumn> {
        let schema = self.catalog.source(source).map(|d| d.schema.as_slice()).unwrap_or(&[]);
        (0..width)
            .map(|i| {
                let attr = match rule.map(|r| &r.form) {
                    Some(RuleForm::Projection { fields, .. }) => fields.get(i).and_then(|&f| schema.get(f)),
                    _ => None,
                };
                match attr {
                    Some(a) => GridColumn {
                        label: a.name.clone(),
                        semantic_type: None,
                        binding: Some(AttrRef::new(source.clone(), a.name.clone())),
                    },
                    None => GridColumn {
                        label: format!("Column {}", i + 1),
                        semantic_type: None,
                        binding: None,
                    },
                }
            })
            .collect()
    }

    fn paste_examples(
        &mut self,
        origin: SourceId,
        first_col: usize,
        rows: Vec<(usize, Vec<String>)>,
    ) -> Result<(), SessionError> {
        if first_col != 0 {
            return Err(SessionError::UnsupportedPaste("examples must start in the first column".into()));
        }
        if rows[0].0 != self.state.output.rows.len() {
            return Err(SessionError::UnsupportedPaste("examples must be pasted directly below the grid".into()));
        }
        let model = self.document_model(&origin)?;
        let mut examples = match (self.state.pending.get(&origin), self.state.imports.get(&origin)) {
            (Some(p), _) => p.examples.clone(),
            (None, Some(a)) => a.examples.clone(),
            _ => Vec::new(),
        };
        let width = rows[0].1.len();
        if examples.first().is_some_and(|e| e.len() != width) {
            return Err(SessionError::UnsupportedPaste(format!(
                "examples are {} cells wide, this paste is {width}",
                examples[0].len()
            )));
        }
        examples.extend(rows.into_iter().map(|(_, r)| r.iter().map(|v| collapse(v)).collect::<Vec<_>>()));
        let rules = match induce_rule(&model, &ExampleSelection { rows: examples.clone() }) {
            Ok(r) => r,
            Err(e) => {
                self.state.diagnostics.push(format!("no extraction rule fits the examples: {e}"));
                Vec::new()
            }
        };
        if self.state.active_query.is_none() {
            let mut cols = self.example_columns(&origin, rules.first(), width);
            if cols.len() == self.state.columns.len() {
                for (new, old) in cols.iter_mut().zip(&self.state.columns) {
                    if old.binding.is_some() || new.binding.is_none() {
                        new.label = old.label.clone();
                    }
                    new.semantic_type = old.semantic_type.clone();
                }
            }
            self.state.columns = cols;
        }
        self.state.pending.insert(
            origin.clone(),
            PendingImport {
                examples,
                rules,
                hypothesis: 0,
            },
        );
        self.state.primary = Some(origin.clone());
        self.state.origins.insert(origin);
        Ok(())
    }

    fn paste_join(
        &mut self,
        services: &ServiceRegistry,
        origin: SourceId,
        first_col: usize,
        rows: Vec<(usize, Vec<String>)>,
    ) -> Result<(), SessionError> {
        let base = self.state.columns.len();
        let width = rows[0].1.len();
        let mut join = match self.state.pending_join.take() {
            Some(j) if j.origin != origin => {
                self.state.pending_join = Some(j);
                return Err(SessionError::UnsupportedPaste(
                    "cells from a third source must wait until the pending join is resolved".into(),
                ));
            }
            Some(j) if j.added.len() != width => {
                self.state.pending_join = Some(j);
                return Err(SessionError::UnsupportedPaste("the paste does not match the pending columns".into()));
            }
            other => other,
        };
        if first_col != base {
            return Err(SessionError::UnsupportedPaste(
                "cells from another source must be pasted right next to the grid".into(),
            ));
        }
        let height = self.state.output.rows.len();
        if rows.iter().any(|(r, _)| *r >= height) {
            return Err(SessionError::UnsupportedPaste(
                "cells from another source must sit beside existing rows".into(),
            ));
        }
        let tau = self.config.link_threshold;
        if join.is_none() {
            let added = rows[0]
                .1
                .iter()
                .map(|v| {
                    let cell = AttributedCell {
                        value: v.clone(),
                        source: Some(origin.clone()),
                        attribute: None,
                    };
                    resolve_attribution(&cell, &self.catalog, tau).map(|(s, a)| AttrRef::new(s, a))
                })
                .collect::<Result<Vec<_>, _>>()?;
            join = Some(PendingJoin {
                origin: origin.clone(),
                added,
                cells: BTreeMap::new(),
                explanations: Vec::new(),
            });
        }
        let mut join = join.expect("set above");
        for (r, vals) in rows {
            join.cells.insert(r, vals);
        }
        let tuples: Vec<_> = join
            .cells
            .iter()
            .map(|(r, vals)| {
                let row = &self.state.output.rows[*r];
                let mut cells: Vec<AttributedCell> = self
                    .state
                    .columns
                    .iter()
                    .zip(&row.cells)
                    .filter_map(|(col, v)| {
                        let v = v.clone()?;
                        Some(match &col.binding {
                            Some(b) => AttributedCell::new(v, b.source.clone(), b.attribute.clone()),
                            None => AttributedCell::bare(v),
                        })
                    })
                    .collect();
                cells.extend(
                    vals.iter()
                        .zip(&join.added)
                        .map(|(v, a)| AttributedCell::new(v.clone(), a.source.clone(), a.attribute.clone())),
                );
                crate::sourcegraph::PastedTuple { cells }
            })
            .collect();
        let k = self.catalog.graph.config.k;
        join.explanations = match explain_pasted_tuples(&tuples, &self.catalog.graph, &self.catalog, services, k, tau) {
            Ok(t) => t,
            Err(e) => {
                self.state.diagnostics.push(format!("no query explains the pasted cells: {e}"));
                Vec::new()
            }
        };
        self.state.pending_join = Some(join);
        self.state.mode = Mode::Integration;
        self.state.origins.insert(origin);
        Ok(())
    }

    // ---- grid and suggestions -----------------------------------------

    fn bindings(&self) -> Vec<Option<AttrRef>> {
        self.state.columns.iter().map(|c| c.binding.clone()).collect()
    }

    fn attr_type(&self, a: &AttrRef) -> Option<SemanticTypeId> {
        self.catalog
            .source(&a.source)
            .and_then(|d| d.attribute(&a.attribute))
            .and_then(|s| s.semantic_type.clone())
    }

    /// Recomputes the grids from the active query, pending examples and
    /// pending join cells, then regenerates the suggestions.
    fn refresh(&mut self, services: &ServiceRegistry) -> Result<(), SessionError> {
        let width = self.state.columns.len();
        let mut rows = Vec::new();
        if let Some(q) = &self.state.active_query {
            let q = self.catalog.graph.recost(q)?;
            let table = evaluate(&q, &self.catalog.graph, &self.catalog, services, self.config.link_threshold)?;
            for (cells, prov) in project(&table, &self.bindings(), &q.id())? {
                rows.push(GridRow {
                    cells,
                    state: CellState::Accepted,
                    prov: Some(prov),
                });
            }
            self.state.active_query = Some(q);
        }
        if let Some(p) = self.state.primary.as_ref().and_then(|p| self.state.pending.get(p)) {
            for ex in &p.examples {
                let mut cells = norm_row(ex);
                cells.resize(width, None);
                if !rows.iter().any(|r| r.cells == cells) {
                    rows.push(GridRow {
                        cells,
                        state: CellState::Pasted,
                        prov: None,
                    });
                }
            }
        }
        let mut columns = self.state.columns.clone();
        if let Some(j) = &self.state.pending_join {
            for a in &j.added {
                columns.push(GridColumn {
                    label: unique_label(&columns, a),
                    semantic_type: self.attr_type(a),
                    binding: Some(a.clone()),
                });
            }
            for (i, r) in rows.iter_mut().enumerate() {
                match j.cells.get(&i) {
                    Some(vals) => {
                        // the pasted cells are not derived until an explanation is accepted
                        r.cells.extend(norm_row(vals));
                        r.state = CellState::Pasted;
                    }
                    None => r.cells.extend(std::iter::repeat_n(None, j.added.len())),
                }
            }
        }
        self.state.output = Grid { columns, rows };

        let mut shown: BTreeSet<SourceId> = self.state.origins.clone();
        if let Some(q) = &self.state.active_query {
            shown.extend(q.nodes.iter().filter(|n| !self.catalog.is_service(n)).cloned());
        }
        self.state.tabs = shown
            .into_iter()
            .filter_map(|id| {
                let (d, t) = (self.catalog.source(&id)?, self.catalog.table(&id)?);
                let grid = Grid {
                    columns: d
                        .schema
                        .iter()
                        .map(|a| GridColumn {
                            label: a.name.clone(),
                            semantic_type: a.semantic_type.clone(),
                            binding: Some(AttrRef::new(id.clone(), a.name.clone())),
                        })
                        .collect(),
                    rows: t
                        .iter()
                        .map(|(rid, cells)| GridRow {
                            cells: cells.to_vec(),
                            state: CellState::Accepted,
                            prov: Some(ProvExpr::Leaf {
                                source: id.clone(),
                                row: rid,
                            }),
                        })
                        .collect(),
                };
                Some((id, grid))
            })
            .collect();
        let mut failed = Vec::new();
        self.state.suggestions = self.suggestions(services, &mut failed)?;
        self.state.diagnostics.extend(failed);
        Ok(())
    }

    /// Values of a grid column used for type recognition: the full pending
    /// extraction when there is one, the grid's cells otherwise.
    fn column_values(&self, column: usize) -> Result<Vec<String>, SessionError> {
        let pending = self.state.columns[column]
            .binding
            .as_ref()
            .and_then(|b| self.state.pending.get(&b.source).map(|p| (&b.source, p)));
        if let Some((source, p)) = pending {
            if let Some(rule) = p.rules.get(p.hypothesis) {
                let model = self.document_model(source)?;
                let ext = apply_rule(rule, &model)?;
                return Ok(ext.rows.iter().filter_map(|r| r.get(column).cloned().flatten()).collect());
            }
        }
        Ok(self
            .state
            .output
            .rows
            .iter()
            .filter_map(|r| r.cells.get(column).cloned().flatten())
            .collect())
    }

    fn query_suggestion(
        &self,
        services: &ServiceRegistry,
        query: QueryTree,
        added: Vec<AttrRef>,
        failed: &mut Vec<String>,
    ) -> Option<Suggestion> {
        let table = match evaluate(&query, &self.catalog.graph, &self.catalog, services, self.config.link_threshold) {
            Ok(t) => t,
            Err(e) => {
                ::log::warn!("candidate {} failed to evaluate: {e}", query.id());
                failed.push(format!("candidate {} not offered: {e}", query.id()));
                return None;
            }
        };
        let mut bindings = self.bindings();
        bindings.extend(added.iter().cloned().map(Some));
        let rows = project(&table, &bindings, &query.id()).ok()?;
        let mut columns: Vec<GridColumn> = self.state.columns.clone();
        for a in &added {
            columns.push(GridColumn {
                label: unique_label(&columns, a),
                semantic_type: None,
                binding: Some(a.clone()),
            });
        }
        let id = format!("query:{}", query.id());
        Some(Suggestion {
            confirmable: self.state.confirmable.contains(&id),
            id,
            kind: SuggestionKind::ColumnCompletion,
            preview: Preview {
                columns: columns.into_iter().map(|c| c.label).collect(),
                total_rows: rows.len(),
                rows: rows.into_iter().take(self.config.preview_rows).map(|(c, _)| c).collect(),
            },
            score: query.cost,
            backing: Backing::Query { query, added },
        })
    }

    /// The extraction hypothesis currently offered for the primary source.
    fn offered_rule(&self) -> Option<ExtractionRule> {
        let p = self.state.pending.get(self.state.primary.as_ref()?)?;
        p.rules.get(p.hypothesis).cloned()
    }

    /// The query column completions extend: the active query, or the
    /// primary source while its first extraction is still pending.
    fn base_query(&self) -> Option<QueryTree> {
        if let Some(q) = &self.state.active_query {
            return Some(q.clone());
        }
        let primary = self.state.primary.as_ref()?;
        let p = self.state.pending.get(primary)?;
        let bound = self.state.columns.iter().all(|c| c.binding.as_ref().is_some_and(|b| &b.source == primary));
        (bound && matches!(p.rules.get(p.hypothesis)?.form, RuleForm::Projection { .. }))
            .then(|| QueryTree::single(primary.clone()))
    }

    /// Ranked suggestions for the current state: type labels for untyped
    /// columns, the offered extraction hypothesis of each pending import,
    /// and either the queries explaining a pending join or the one-edge
    /// extensions of the base query. Sorted by score, then id.
    pub fn generate_suggestions(&self, services: &ServiceRegistry) -> Result<Vec<Suggestion>, SessionError> {
        self.suggestions(services, &mut Vec::new())
    }

    /// Candidates that fail to evaluate are left out and described in `failed`.
    fn suggestions(&self, services: &ServiceRegistry, failed: &mut Vec<String>) -> Result<Vec<Suggestion>, SessionError> {
        let mut out = Vec::new();
        for (i, col) in self.state.columns.iter().enumerate() {
            if col.semantic_type.is_some() {
                continue;
            }
            let values = self.column_values(i)?;
            if values.is_empty() {
                continue;
            }
            let rec = recognize_column(&values, self.catalog.types.values(), self.config.type_threshold)?;
            let Some(h) = rec.accepted_top() else { continue };
            let id = format!("label:{i}:{}", h.type_id);
            if self.state.dismissed.contains(&id) {
                continue;
            }
            out.push(Suggestion {
                confirmable: self.state.confirmable.contains(&id),
                id,
                kind: SuggestionKind::TypeLabel,
                preview: Preview {
                    columns: vec![col.label.clone()],
                    rows: vec![vec![Some(h.type_id.to_string())]],
                    total_rows: 1,
                },
                score: 1.0 - h.score,
                backing: Backing::Label {
                    column: i,
                    hypothesis: h.clone(),
                },
            });
        }
        for (source, p) in &self.state.pending {
            let Some(rule) = p.rules.get(p.hypothesis) else { continue };
            let model = self.document_model(source)?;
            let ext = apply_rule(rule, &model)?;
            let examples: Vec<Vec<Value>> = p.examples.iter().map(|e| norm_row(e)).collect();
            let (rows, records): (Vec<Vec<Value>>, Vec<Option<usize>>) = ext
                .rows
                .into_iter()
                .zip(ext.records)
                .filter(|(r, _)| !examples.contains(r))
                .unzip();
            let rule_json = serde_json::to_string(rule).expect("rules serialize");
            let id = format!("rows:{source}:{:016x}", digest(&rule_json));
            let columns = match &rule.form {
                RuleForm::Projection { fields, .. } => self.example_columns(source, Some(rule), fields.len()),
                RuleForm::Landmark { fields } => self.example_columns(source, None, fields.len()),
            };
            out.push(Suggestion {
                confirmable: self.state.confirmable.contains(&id),
                id,
                kind: SuggestionKind::RowCompletion,
                preview: Preview {
                    columns: columns.into_iter().map(|c| c.label).collect(),
                    total_rows: rows.len(),
                    rows: rows.into_iter().take(self.config.preview_rows).collect(),
                },
                score: rule.generality_rank as f64,
                backing: Backing::Rule {
                    source: source.clone(),
                    rule: rule.clone(),
                    records,
                },
            });
        }
        let ceiling = self.catalog.graph.config.query_ceiling;
        if let Some(j) = &self.state.pending_join {
            let rows = self.state.active_query.is_some() || self.offered_rule().is_some();
            for tree in j.explanations.iter().filter(|_| rows) {
                let q = self.catalog.graph.recost(tree)?;
                if q.cost > ceiling {
                    continue;
                }
                out.extend(self.query_suggestion(services, q, j.added.clone(), failed));
            }
        } else if let Some(active) = self.base_query() {
            let active = self.catalog.graph.recost(&active)?;
            for (_, ext) in self.catalog.graph.column_completions(&active) {
                let new: BTreeSet<&SourceId> = ext.nodes.difference(&active.nodes).collect();
                let Some(schema) = new.first().and_then(|n| self.catalog.source(n)) else { continue };
                let added: Vec<AttrRef> = match self.catalog.service(&schema.id) {
                    Some(sig) => sig.outputs.iter().map(|a| AttrRef::new(schema.id.clone(), a.name.clone())).collect(),
                    None => schema.schema.iter().map(|a| AttrRef::new(schema.id.clone(), a.name.clone())).collect(),
                };
                out.extend(self.query_suggestion(services, ext.clone(), added, failed));
            }
        }
        out.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
        out.dedup_by(|a, b| a.id == b.id);
        Ok(out)
    }

    // ---- feedback -----------------------------------------------------

    pub fn apply_feedback(
        &mut self,
        services: &ServiceRegistry,
        event: FeedbackEvent,
    ) -> Result<Vec<Suggestion>, SessionError> {
        self.apply_feedback_batch(services, vec![event])
    }

    /// Applies feedback given in one turn. Suggestion ids are resolved
    /// against the suggestions displayed before the batch.
    pub fn apply_feedback_batch(
        &mut self,
        services: &ServiceRegistry,
        events: Vec<FeedbackEvent>,
    ) -> Result<Vec<Suggestion>, SessionError> {
        self.transact(SessionEvent::Feedback { events: events.clone() }, |s| {
            check_contradictions(&events)?;
            let displayed = s.state.suggestions.clone();
            for e in &events {
                s.feedback(e, &displayed)?;
                s.refresh(services)?;
            }
            Ok(s.state.suggestions.clone())
        })
    }

    fn feedback(
        &mut self,
        e: &FeedbackEvent,
        displayed: &[Suggestion],
    ) -> Result<(), SessionError> {
        let Some(id) = &e.suggestion else {
            if e.rows.is_empty() {
                return Err(SessionError::BadFeedback("name a suggestion or some rows".into()));
            }
            if e.scope.is_some_and(|s| s != Scope::Rows) {
                return Err(SessionError::BadFeedback("grid feedback must have row scope".into()));
            }
            return self.grid_row_feedback(&e.rows, e.verdict);
        };
        let s = displayed
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| SessionError::UnknownSuggestion(id.clone()))?;
        let scope = e.scope.unwrap_or(match s.kind {
            SuggestionKind::RowCompletion => Scope::Rows,
            SuggestionKind::ColumnCompletion => Scope::Column,
            SuggestionKind::TypeLabel => Scope::Label,
        });
        match (&s.backing, scope) {
            (Backing::Rule { source, rule, records }, Scope::Rows) => {
                if e.rows.is_empty() {
                    match e.verdict {
                        Verdict::Accept => self.materialize(source, rule.clone()),
                        Verdict::Reject => {
                            let p = self.state.pending.get_mut(source).expect("suggested imports are pending");
                            p.hypothesis += 1;
                            if p.hypothesis >= p.rules.len() {
                                self.state
                                    .diagnostics
                                    .push(format!("no further extraction hypotheses for `{source}`"));
                            }
                            Ok(())
                        }
                    }
                } else {
                    let picked = e
                        .rows
                        .iter()
                        .map(|&r| match records.get(r) {
                            None => Err(SessionError::UnknownRow(r)),
                            Some(None) => Err(SessionError::BadFeedback("landmark rows cannot be refined".into())),
                            Some(Some(rec)) => Ok(*rec),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let (kept, removed) = match e.verdict {
                        Verdict::Accept => (picked, Vec::new()),
                        Verdict::Reject => (Vec::new(), picked),
                    };
                    let model = self.document_model(source)?;
                    let refined = refine_rule(&model, rule, &kept, &removed)?;
                    let p = self.state.pending.get_mut(source).expect("suggested imports are pending");
                    p.rules = vec![refined];
                    p.hypothesis = 0;
                    Ok(())
                }
            }
            (Backing::Query { query, added }, Scope::Column) => {
                if !e.rows.is_empty() {
                    return Err(SessionError::BadFeedback("query suggestions are judged as a whole".into()));
                }
                match e.verdict {
                    Verdict::Accept => self.accept_query(query, added, s, displayed),
                    Verdict::Reject => {
                        let q = self.catalog.graph.recost(query)?;
                        let (g, _) = mira_update(&self.catalog.graph, &[RankingConstraint::Suppress { query: q }])?;
                        self.catalog.install_graph(g);
                        Ok(())
                    }
                }
            }
            (Backing::Label { column, hypothesis }, Scope::Label) => match e.verdict {
                Verdict::Accept => self.assign_type(*column, hypothesis.type_id.as_str()),
                Verdict::Reject => {
                    self.state.dismissed.insert(s.id.clone());
                    Ok(())
                }
            },
            _ => Err(SessionError::BadFeedback(format!(
                "{scope:?} feedback does not apply to a {:?} suggestion",
                s.kind
            ))),
        }
    }

    /// Accepting a query asks for it to beat every other query shown in the
    /// same turn by the margin, and to stay under the query ceiling.
    fn accept_query(
        &mut self,
        query: &QueryTree,
        added: &[AttrRef],
        chosen: &Suggestion,
        displayed: &[Suggestion],
    ) -> Result<(), SessionError> {
        if self.state.active_query.is_none() {
            // extending the pending extraction accepts its rows as well
            let rule = self
                .offered_rule()
                .ok_or_else(|| SessionError::BadFeedback("no extraction is left for the query to extend".into()))?;
            let primary = self.state.primary.clone().expect("offered rules belong to the primary source");
            self.materialize(&primary, rule)?;
        }
        let graph = &self.catalog.graph;
        let q = graph.recost(query)?;
        let mut constraints = Vec::new();
        for other in displayed {
            if other.id == chosen.id {
                continue;
            }
            if let Backing::Query { query: b, .. } = &other.backing {
                let b = graph.recost(b)?;
                if b.edges != q.edges {
                    constraints.push(RankingConstraint::Prefer {
                        better: q.clone(),
                        worse: b,
                    });
                }
            }
        }
        constraints.push(RankingConstraint::Promote { query: q.clone() });
        let (g, outcomes) = mira_update(graph, &constraints)?;
        ::log::debug!("accepted {}: {outcomes:?}", q.id());
        self.catalog.install_graph(g);
        for a in added {
            if !self.state.columns.iter().any(|c| c.binding.as_ref() == Some(a)) {
                let col = GridColumn {
                    label: unique_label(&self.state.columns, a),
                    semantic_type: self.attr_type(a),
                    binding: Some(a.clone()),
                };
                self.state.columns.push(col);
            }
        }
        if q.nodes.len() > 1 {
            self.state.mode = Mode::Integration;
        }
        self.state.active_query = Some(self.catalog.graph.recost(&q)?);
        self.state.pending_join = None;
        Ok(())
    }

    fn initial_record_rows(&self, source: &SourceId, model: &DocumentModel) -> Result<BTreeMap<usize, RowId>, SessionError> {
        let t = self
            .catalog
            .table(source)
            .ok_or_else(|| SessionError::OriginUnreadable(format!("`{source}` has no rows")))?;
        if t.len() != model.records.len() {
            return Err(SessionError::OriginUnreadable(format!(
                "rows of `{source}` no longer match its document"
            )));
        }
        Ok(t.row_ids.iter().copied().enumerate().collect())
    }

    /// Makes the rule's output the content of the grid. Projection rules
    /// narrow or widen the source's rows to the extracted records; landmark
    /// rules become a new source of their own.
    fn materialize(&mut self, source: &SourceId, rule: ExtractionRule) -> Result<(), SessionError> {
        let model = self.document_model(source)?;
        let ext = apply_rule(&rule, &model)?;
        let examples = match (self.state.pending.remove(source), self.state.imports.get(source)) {
            (Some(p), _) => p.examples,
            (None, Some(a)) => a.examples.clone(),
            _ => Vec::new(),
        };
        let (target, columns, record_rows) = match &rule.form {
            RuleForm::Projection { fields, .. } => {
                let mut record_rows = match self.state.imports.get(source) {
                    Some(a) => a.record_rows.clone(),
                    None => self.initial_record_rows(source, &model)?,
                };
                let keep: BTreeSet<usize> = ext.records.iter().flatten().copied().collect();
                let drop: Vec<RowId> = record_rows
                    .iter()
                    .filter(|(r, _)| !keep.contains(r))
                    .map(|(_, id)| *id)
                    .collect();
                record_rows.retain(|r, _| keep.contains(r));
                self.catalog.delete_rows(source, &drop)?;
                let missing: Vec<usize> = keep.iter().filter(|r| !record_rows.contains_key(r)).copied().collect();
                if !missing.is_empty() {
                    let rows = missing.iter().map(|&r| model.records[r].fields.clone()).collect();
                    let ids = self.catalog.append_rows(source, rows)?;
                    record_rows.extend(missing.into_iter().zip(ids));
                }
                let mut columns = self.example_columns(source, Some(&rule), fields.len());
                for c in &mut columns {
                    c.semantic_type = c.binding.as_ref().and_then(|b| self.attr_type(b));
                }
                (source.clone(), columns, record_rows)
            }
            RuleForm::Landmark { fields } => {
                if self.state.active_query.is_some() {
                    return Err(SessionError::BadFeedback(
                        "a landmark extraction cannot extend an existing query".into(),
                    ));
                }
                let mut id = SourceId::new(format!("{source}-extract"));
                let mut n = 2;
                while self.catalog.sources.contains_key(&id) {
                    id = SourceId::new(format!("{source}-extract-{n}"));
                    n += 1;
                }
                let schema = (0..fields.len())
                    .map(|i| {
                        let values: Vec<&str> = ext.rows.iter().filter_map(|r| r[i].as_deref()).collect();
                        let t = recognize_column(&values, self.catalog.types.values(), self.config.type_threshold)
                            .ok()
                            .and_then(|r| r.accepted_top().map(|h| h.type_id.clone()));
                        AttributeSpec {
                            name: format!("Column {}", i + 1),
                            semantic_type: t,
                            position: i,
                        }
                    })
                    .collect::<Vec<_>>();
                let descriptor = SourceDescriptor::new(id.clone(), SourceKind::Document, schema.clone(), Origin::Declared);
                self.catalog
                    .register_source(descriptor, MaterializedTable::new(id.clone(), ext.rows.clone()))?;
                let columns = schema
                    .iter()
                    .map(|a| GridColumn {
                        label: a.name.clone(),
                        semantic_type: a.semantic_type.clone(),
                        binding: Some(AttrRef::new(id.clone(), a.name.clone())),
                    })
                    .collect();
                (id, columns, BTreeMap::new())
            }
        };
        match &self.state.active_query {
            None => {
                let mut columns: Vec<GridColumn> = columns;
                if columns.len() == self.state.columns.len() {
                    for (new, old) in columns.iter_mut().zip(&self.state.columns) {
                        new.label = old.label.clone();
                        if old.semantic_type.is_some() {
                            new.semantic_type = old.semantic_type.clone();
                        }
                    }
                }
                self.state.columns = columns;
                self.state.active_query = Some(QueryTree::single(target.clone()));
            }
            Some(q) if !q.nodes.contains(&target) => {
                return Err(SessionError::BadFeedback(format!("`{target}` is not part of the active query")));
            }
            Some(_) => {}
        }
        self.state.imports.insert(
            target,
            AcceptedImport {
                rule,
                examples,
                record_rows,
            },
        );
        Ok(())
    }

    /// Row feedback on the output grid of a single-source extraction refines
    /// the accepted rule.
    fn grid_row_feedback(&mut self, rows: &[usize], verdict: Verdict) -> Result<(), SessionError> {
        let source = match &self.state.active_query {
            Some(q) if q.nodes.len() == 1 => q.nodes.first().expect("one node").clone(),
            _ => {
                return Err(SessionError::BadFeedback(
                    "row feedback applies to single-source extractions".into(),
                ))
            }
        };
        let import = self
            .state
            .imports
            .get(&source)
            .ok_or_else(|| SessionError::BadFeedback(format!("`{source}` was not extracted in this session")))?;
        let by_row: BTreeMap<RowId, usize> = import.record_rows.iter().map(|(rec, id)| (*id, *rec)).collect();
        let mut picked = Vec::new();
        for &r in rows {
            let row = self.state.output.rows.get(r).ok_or(SessionError::UnknownRow(r))?;
            let mut leaves = BTreeSet::new();
            if let Some(p) = &row.prov {
                p.leaves(&mut leaves);
            }
            for (_, id) in leaves {
                picked.push(*by_row.get(&id).ok_or(SessionError::UnknownRow(r))?);
            }
        }
        let (kept, removed) = match verdict {
            Verdict::Accept => (picked, Vec::new()),
            Verdict::Reject => (Vec::new(), picked),
        };
        let model = self.document_model(&source)?;
        let refined = refine_rule(&model, &import.rule, &kept, &removed)?;
        self.materialize(&source, refined)
    }

    // ---- labels, mode, sources ------------------------------------------

    /// Names a grid column and, optionally, gives it a semantic type. A known
    /// type is retrained with the column's values; an unknown one is learned
    /// from them.
    pub fn set_column_label(
        &mut self,
        services: &ServiceRegistry,
        column: usize,
        name: &str,
        semantic_type: Option<&str>,
    ) -> Result<(), SessionError> {
        let event = SessionEvent::Label {
            column,
            name: name.to_string(),
            semantic_type: semantic_type.map(str::to_string),
        };
        self.transact(event, |s| {
            if column >= s.state.columns.len() {
                return Err(SessionError::UnknownColumn(column));
            }
            let name = name.trim();
            if name.is_empty() {
                return Err(SessionError::BadFeedback("column names cannot be empty".into()));
            }
            let clash = s
                .state
                .output
                .columns
                .iter()
                .enumerate()
                .any(|(i, c)| i != column && c.label.eq_ignore_ascii_case(name));
            if clash {
                return Err(SessionError::DuplicateColumnName(name.to_string()));
            }
            s.state.columns[column].label = name.to_string();
            if let Some(t) = semantic_type {
                s.assign_type(column, t)?;
            }
            s.refresh(services)
        })
    }

    fn assign_type(&mut self, column: usize, type_name: &str) -> Result<(), SessionError> {
        let values = self.column_values(column)?;
        let tid = SemanticTypeId::from(type_name);
        let model = match self.catalog.type_model(&tid) {
            Some(m) => update_type(m, &values),
            None => learn_type(tid.clone(), &values)?,
        };
        self.catalog.register_type(model);
        self.state.columns[column].semantic_type = Some(tid.clone());
        let Some(b) = self.state.columns[column].binding.clone() else {
            return Ok(());
        };
        if self.catalog.is_service(&b.source) {
            return Ok(());
        }
        if let Some(d) = self.catalog.source(&b.source) {
            let mut schema = d.schema.clone();
            if let Some(a) = schema.iter_mut().find(|a| a.name == b.attribute) {
                if a.semantic_type.as_ref() != Some(&tid) {
                    a.semantic_type = Some(tid);
                    self.catalog.refine_schema(&b.source, schema)?;
                }
            }
        }
        Ok(())
    }

    /// Explicit switch between import and integration mode.
    pub fn set_mode(&mut self, services: &ServiceRegistry, mode: Mode) -> Result<(), SessionError> {
        self.transact(SessionEvent::Mode { mode }, |s| {
            s.state.mode = mode;
            s.refresh(services)
        })
    }

    /// Adds a document source to this session's catalog, as if it had been
    /// ingested before the session started. Known ids are left alone.
    pub fn publish_source(
        &mut self,
        services: &ServiceRegistry,
        source: SourceId,
        format: DocumentFormat,
        content: &str,
    ) -> Result<(), SessionError> {
        let event = SessionEvent::Publish {
            source: source.clone(),
            format,
            content: content.to_string(),
        };
        self.transact(event, |s| {
            if !s.catalog.sources.contains_key(&source) {
                ingest_document(
                    &mut s.catalog,
                    source,
                    format,
                    content.as_bytes(),
                    Origin::Declared,
                    s.config.type_threshold,
                )?;
            }
            s.refresh(services)
        })
    }

    pub fn export(&self, format: ExportFormat) -> Result<Vec<u8>, SessionError> {
        export_grid(&self.state.output, format)
    }

    pub fn row_provenance(&self, row: usize) -> Result<&ProvExpr, SessionError> {
        self.state
            .output
            .rows
            .get(row)
            .ok_or(SessionError::UnknownRow(row))?
            .prov
            .as_ref()
            .ok_or_else(|| SessionError::BadFeedback(format!("row {row} was pasted and has no derivation yet")))
    }
}

/// Feedback in one turn contradicts itself when the same suggestion, or the
/// same row of it, is both accepted and rejected.
fn check_contradictions(events: &[FeedbackEvent]) -> Result<(), SessionError> {
    let mut whole: BTreeMap<Option<&str>, BTreeSet<bool>> = BTreeMap::new();
    let mut rows: BTreeMap<(Option<&str>, usize), BTreeSet<bool>> = BTreeMap::new();
    for e in events {
        let key = e.suggestion.as_deref();
        let accept = e.verdict == Verdict::Accept;
        if e.rows.is_empty() {
            whole.entry(key).or_default().insert(accept);
        }
        for &r in &e.rows {
            rows.entry((key, r)).or_default().insert(accept);
        }
    }
    let describe = |k: Option<&str>| k.map_or("the grid".to_string(), |k| format!("`{k}`"));
    for (k, v) in &whole {
        if v.len() > 1 {
            return Err(SessionError::Contradictory(format!("{} is both accepted and rejected", describe(*k))));
        }
        let verdict = *v.first().expect("non-empty");
        if let Some(((_, r), _)) = rows.iter().find(|((rk, _), rv)| rk == k && rv.contains(&!verdict)) {
            return Err(SessionError::Contradictory(format!(
                "row {r} of {} contradicts the verdict on the whole suggestion",
                describe(*k)
            )));
        }
    }
    if let Some(((k, r), _)) = rows.iter().find(|(_, v)| v.len() > 1) {
        return Err(SessionError::Contradictory(format!(
            "row {r} of {} is both accepted and rejected",
            describe(*k)
        )));
    }
    Ok(())
}
