//! Raw activity exports to a canonical, PII-scrubbed event stream.

mod ndjson;
mod pii;
mod takeout;

pub use ndjson::{
    read_events, read_events_from, write_events, write_events_to, ParticipantBatches,
};
pub use pii::{detect_pii, luhn_valid, scrub_pii, PiiClass, PiiMatch, RedactionReport};
pub use takeout::{parse_takeout_search, parse_takeout_youtube, ItemError, ParseOutcome};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Search,
    Youtube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Query,
    UrlVisit,
    VideoWatch,
    YoutubeSearch,
}

impl EventKind {
    pub fn platform(self) -> Platform {
        match self {
            EventKind::Query | EventKind::UrlVisit => Platform::Search,
            EventKind::VideoWatch | EventKind::YoutubeSearch => Platform::Youtube,
        }
    }
}

/// One timestamped search, visit or watch action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    #[serde(rename = "pid")]
    pub participant_id: String,
    /// Seconds precision.
    pub ts: DateTime<Utc>,
    pub platform: Platform,
    pub kind: EventKind,
    /// Scrubbed query string or video title; may be empty.
    pub text: String,
    pub url: Option<String>,
}

impl ActivityEvent {
    pub fn is_consistent(&self) -> bool {
        self.kind.platform() == self.platform && self.ts.timestamp_subsec_nanos() == 0
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed document at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("events out of order at line {line}: expected sorted by (pid, ts)")]
    Unsorted { line: usize },
    #[error("inconsistent event for {pid} at {ts}: kind {kind:?} does not belong to platform {platform:?}")]
    Inconsistent {
        pid: String,
        ts: DateTime<Utc>,
        kind: EventKind,
        platform: Platform,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
