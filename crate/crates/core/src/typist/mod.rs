//! Model learner: token-pattern models of semantic types, column type
//! recognition, and input/output comparison of services.

mod function;
mod model;
mod token;

pub use function::match_source_function;
pub use model::{
    learn_type, recognize_column, similarity, update_type, PatternFrequency, RecognitionResult,
    TypeHypothesis, TypeModel, CONSTANT_SUPPORT, DEFAULT_TYPE_THRESHOLD,
};
pub use token::{raw_tokens, tokenize, ParseTokenError, Token, TokenClass, TokenPattern};

use crate::services::ServiceError;
use crate::SourceId;

#[derive(Debug, thiserror::Error)]
pub enum TypistError {
    #[error("cannot learn a type from an empty training set")]
    EmptyTrainingSet,
    #[error("no values to recognise")]
    NoValues,
    #[error("services `{candidate}` and `{known}` are not type-compatible: {reason}")]
    IncompatibleSignatures {
        candidate: SourceId,
        known: SourceId,
        reason: String,
    },
    #[error("every probe failed: {0}")]
    AllProbesFailed(#[source] ServiceError),
    #[error("no probe rows supplied")]
    NoProbes,
}
