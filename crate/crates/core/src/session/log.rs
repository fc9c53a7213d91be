use serde::{Deserialize, Serialize};

use super::{FeedbackEvent, Mode, PasteEvent, Session, SessionConfig, SessionError};
use crate::catalog::Catalog;
use crate::extractor::DocumentFormat;
use crate::services::ServiceRegistry;
use crate::SourceId;

pub const LOG_SCHEMA_VERSION: u32 = 1;

/// Everything that changes a session, in the order it happened.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    Paste {
        event: PasteEvent,
    },
    Feedback {
        events: Vec<FeedbackEvent>,
    },
    Label {
        column: usize,
        name: String,
        semantic_type: Option<String>,
    },
    Mode {
        mode: Mode,
    },
    Publish {
        source: SourceId,
        format: DocumentFormat,
        content: String,
    },
}

#[derive(Serialize, Deserialize)]
struct Line {
    schema_version: u32,
    seq: usize,
    #[serde(flatten)]
    event: SessionEvent,
}

/// One JSON object per line.
pub fn to_ndjson(events: &[SessionEvent]) -> String {
    let mut out = String::new();
    for (seq, event) in events.iter().enumerate() {
        let line = Line {
            schema_version: LOG_SCHEMA_VERSION,
            seq,
            event: event.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_ndjson(text: &str) -> Result<Vec<SessionEvent>, SessionError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line =
            serde_json::from_str(raw).map_err(|e| SessionError::Log(format!("line {}: {e}", i + 1)))?;
        if line.schema_version != LOG_SCHEMA_VERSION {
            return Err(SessionError::Log(format!(
                "line {}: schema version {} is not supported",
                i + 1,
                line.schema_version
            )));
        }
        if line.seq != events.len() {
            return Err(SessionError::Log(format!("line {}: expected seq {}, got {}", i + 1, events.len(), line.seq)));
        }
        events.push(line.event);
    }
    Ok(events)
}

impl Session {
    pub fn log_ndjson(&self) -> String {
        to_ndjson(&self.state.log)
    }

    /// Rebuilds a session by applying logged events to the catalog it
    /// started from.
    pub fn replay(
        initial: Catalog,
        config: SessionConfig,
        services: &ServiceRegistry,
        events: &[SessionEvent],
    ) -> Result<Session, SessionError> {
        let mut s = Session::new(initial, config);
        for e in events {
            s.apply_event(services, e.clone())?;
        }
        Ok(s)
    }

    pub(super) fn apply_event(&mut self, services: &ServiceRegistry, e: SessionEvent) -> Result<(), SessionError> {
        match e {
            SessionEvent::Paste { event } => self.handle_paste(services, event).map(drop),
            SessionEvent::Feedback { events } => self.apply_feedback_batch(services, events).map(drop),
            SessionEvent::Label {
                column,
                name,
                semantic_type,
            } => self.set_column_label(services, column, &name, semantic_type.as_deref()),
            SessionEvent::Mode { mode } => self.set_mode(services, mode),
            SessionEvent::Publish {
                source,
                format,
                content,
            } => self.publish_source(services, source, format, &content),
        }
    }
}
