use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::AttrRef;
use crate::engine::ProvExpr;
use crate::extractor::{DocumentFormat, ExtractionRule};
use crate::sourcegraph::QueryTree;
use crate::typist::TypeHypothesis;
use crate::{RowId, SemanticTypeId, SourceId, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Import,
    Integration,
}

/// Where pasted cells were copied from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PasteOrigin {
    /// A source already in the catalog, usually the document it was
    /// ingested from.
    Source { source: SourceId },
    /// A document the catalog has not seen; it is imported on first paste.
    Document {
        name: String,
        format: DocumentFormat,
        content: String,
    },
    /// No origin metadata; the source is looked up by value.
    Unattributed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastedCell {
    pub row: usize,
    pub column: usize,
    pub value: String,
}

impl PastedCell {
    pub fn new(row: usize, column: usize, value: impl Into<String>) -> Self {
        PastedCell {
            row,
            column,
            value: value.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasteEvent {
    pub cells: Vec<PastedCell>,
    pub origin: PasteOrigin,
    #[serde(default)]
    pub timestamp: u64,
}

impl PasteEvent {
    /// Rows of values pasted starting at grid position `(row, column)`.
    pub fn block<S: AsRef<str>>(origin: PasteOrigin, row: usize, column: usize, values: &[Vec<S>]) -> Self {
        let cells = values
            .iter()
            .enumerate()
            .flat_map(|(r, vals)| {
                vals.iter()
                    .enumerate()
                    .map(move |(c, v)| PastedCell::new(row + r, column + c, v.as_ref()))
            })
            .collect();
        PasteEvent {
            cells,
            origin,
            timestamp: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Pasted,
    Accepted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridColumn {
    pub label: String,
    pub semantic_type: Option<SemanticTypeId>,
    /// The source attribute the column shows, once known.
    pub binding: Option<AttrRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cells: Vec<Value>,
    pub state: CellState,
    pub prov: Option<ProvExpr>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub columns: Vec<GridColumn>,
    pub rows: Vec<GridRow>,
}

impl Grid {
    pub fn labels(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn cells(&self) -> Vec<Vec<Value>> {
        self.rows.iter().map(|r| r.cells.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuggestionKind {
    RowCompletion,
    ColumnCompletion,
    TypeLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Backing {
    /// `records` are the document records behind the preview rows.
    Rule {
        source: SourceId,
        rule: ExtractionRule,
        records: Vec<Option<usize>>,
    },
    /// `added` are the attributes the query contributes to the grid.
    Query { query: QueryTree, added: Vec<AttrRef> },
    Label { column: usize, hypothesis: TypeHypothesis },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    /// Rows the suggestion would produce; `rows` holds at most the preview cap.
    pub total_rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    pub kind: SuggestionKind,
    pub backing: Backing,
    pub preview: Preview,
    pub score: f64,
    /// Set when a paste reproduced part of this suggestion's preview.
    #[serde(default)]
    pub confirmable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Rows,
    Column,
    Label,
}

/// Accept or reject a suggestion, some of its preview rows, or rows of the
/// output grid (no suggestion).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    #[serde(default)]
    pub suggestion: Option<String>,
    #[serde(default)]
    pub rows: Vec<usize>,
    pub verdict: Verdict,
    #[serde(default)]
    pub scope: Option<Scope>,
}

impl FeedbackEvent {
    pub fn accept(id: impl Into<String>) -> Self {
        FeedbackEvent {
            suggestion: Some(id.into()),
            rows: Vec::new(),
            verdict: Verdict::Accept,
            scope: None,
        }
    }

    pub fn reject(id: impl Into<String>) -> Self {
        FeedbackEvent {
            verdict: Verdict::Reject,
            ..FeedbackEvent::accept(id)
        }
    }

    pub fn rows(id: Option<&str>, rows: Vec<usize>, verdict: Verdict) -> Self {
        FeedbackEvent {
            suggestion: id.map(str::to_string),
            rows,
            verdict,
            scope: Some(Scope::Rows),
        }
    }
}

/// Examples pasted from one source that are not yet accepted, and the
/// hypotheses they support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingImport {
    pub examples: Vec<Vec<String>>,
    pub rules: Vec<ExtractionRule>,
    /// Index of the hypothesis currently offered.
    pub hypothesis: usize,
}

/// An accepted extraction and the catalog rows it materialised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedImport {
    pub rule: ExtractionRule,
    pub examples: Vec<Vec<String>>,
    pub record_rows: BTreeMap<usize, RowId>,
}

/// Cells pasted next to the grid from another source, waiting for the user
/// to pick one of the explaining queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingJoin {
    pub origin: SourceId,
    pub added: Vec<AttrRef>,
    pub cells: BTreeMap<usize, Vec<String>>,
    pub explanations: Vec<QueryTree>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceState {
    pub mode: Mode,
    pub output: Grid,
    pub tabs: BTreeMap<SourceId, Grid>,
    pub active_query: Option<QueryTree>,
    /// Columns of the output grid backed by the active query or examples.
    pub columns: Vec<GridColumn>,
    pub suggestions: Vec<Suggestion>,
    /// The source the grid was started from.
    pub primary: Option<SourceId>,
    pub origins: BTreeSet<SourceId>,
    pub pending: BTreeMap<SourceId, PendingImport>,
    pub imports: BTreeMap<SourceId, AcceptedImport>,
    pub pending_join: Option<PendingJoin>,
    pub confirmable: BTreeSet<String>,
    pub dismissed: BTreeSet<String>,
    pub diagnostics: Vec<String>,
    pub log: Vec<super::log::SessionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PasteOutcome {
    pub mode: Mode,
    pub mode_changed: bool,
    pub suggestions: Vec<Suggestion>,
    pub diagnostics: Vec<String>,
}
