//! Core of the paste-driven integration workbench.
//!
//! The crate is organised the way a paste travels through the system:
//!
//! * [`extractor`] models a document and generalises pasted cells into
//!   extraction rules,
//! * [`typist`] learns token-pattern models of semantic types and recognises
//!   the types of extracted columns,
//! * [`catalog`] stores sources, services, materialised rows and type models,
//! * [`sourcegraph`] derives the weighted association graph, searches it for
//!   candidate queries and re-weights it from feedback,
//! * [`engine`] evaluates candidate queries with per-tuple provenance,
//! * [`session`] is the workspace state machine tying the learners together.
//!
//! [`ingest`] turns whole documents into sources, [`bootstrap`] loads type
//! and service declarations, and [`services`] holds the cached, retrying
//! client used to call external services with input binding restrictions.

pub mod bootstrap;
pub mod catalog;
pub mod engine;
pub mod extractor;
pub mod ids;
pub mod ingest;
pub mod services;
pub mod session;
pub mod sourcegraph;
pub mod typist;

pub use ids::{EdgeId, RowId, SemanticTypeId, SourceId, Value};
