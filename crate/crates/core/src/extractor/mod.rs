//! Structure learner: document models built from expert votes, extraction
//! rules generalised from pasted examples, and refinement from feedback.

pub mod html;
mod model;
mod rule;

pub use model::{
    infer_document_model, Cell, DocumentFormat, DocumentModel, Record, SegmentationHypothesis, Vote,
    DATA_TYPE_EXPERT, DELIMITER_EXPERT, HTML_TABLE_EXPERT, REPEATED_TAG_EXPERT,
};
pub use rule::{
    apply_rule, induce_rule, refine_rule, ExampleSelection, ExtractedTable, ExtractionRule, Landmark, Predicate,
    RuleForm, MAX_CONTEXT,
};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("unknown document format `{0}`")]
    UnknownFormat(String),
    #[error("document is empty")]
    EmptyDocument,
    #[error("document could not be parsed: {0}")]
    Unparseable(String),
    #[error("no records found in document")]
    NoRecords,
    #[error("no examples were pasted")]
    NoExamples,
    #[error("no extraction rule is consistent with the examples")]
    NoConsistentRule,
    #[error("rule does not fit the document: {0}")]
    RuleMismatch(String),
    #[error("record {0} is both kept and removed")]
    Contradictory(usize),
    #[error("record {0} is not in the rule's current output")]
    NotInOutput(usize),
    #[error("no hypothesis keeps every kept record and drops every removed one")]
    NoSeparatingHypothesis,
}
