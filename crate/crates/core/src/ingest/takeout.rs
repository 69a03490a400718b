//! Parsers for the "My Activity" JSON arrays of a Takeout export.

use chrono::{DateTime, SubsecRound, Utc};
use serde::Deserialize;
use serde_json::Value;

use super::pii::{scrub_pii, RedactionReport};
use super::{ActivityEvent, EventKind, IngestError};

const SEARCH_PREFIX: &str = "Searched for ";
const VISIT_PREFIX: &str = "Visited ";
const WATCH_PREFIX: &str = "Watched ";

#[derive(Debug, Deserialize)]
struct RawItem {
    title: Option<String>,
    #[serde(rename = "titleUrl")]
    title_url: Option<String>,
    time: Option<String>,
}

/// An item that could not be turned into an event; parsing carried on past it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemError {
    /// Position of the item in the array.
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    /// Events sorted by timestamp.
    pub events: Vec<ActivityEvent>,
    /// Items whose title carried no recognised activity marker.
    pub skipped: usize,
    pub errors: Vec<ItemError>,
    pub redactions: RedactionReport,
}

#[derive(Clone, Copy)]
enum Source {
    Search,
    Youtube,
}

/// Parse a Search "My Activity" export for one participant.
pub fn parse_takeout_search(document: &str, pid: &str) -> Result<ParseOutcome, IngestError> {
    parse(document, pid, Source::Search)
}

/// Parse a YouTube "My Activity" export for one participant.
pub fn parse_takeout_youtube(document: &str, pid: &str) -> Result<ParseOutcome, IngestError> {
    parse(document, pid, Source::Youtube)
}

fn parse(document: &str, pid: &str, source: Source) -> Result<ParseOutcome, IngestError> {
    let items: Vec<Value> = serde_json::from_str(document).map_err(|e| IngestError::Malformed {
        offset: byte_offset(document, e.line(), e.column()),
        message: e.to_string(),
    })?;

    let mut out = ParseOutcome::default();
    for (index, item) in items.iter().enumerate() {
        let raw = match RawItem::deserialize(item) {
            Ok(raw) => raw,
            Err(e) => {
                out.errors.push(ItemError {
                    index,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let title = raw.title.as_deref().unwrap_or("");
        let Some((kind, remainder)) = classify(source, title) else {
            out.skipped += 1;
            continue;
        };
        let Some(time) = raw.time.as_deref() else {
            out.errors.push(ItemError {
                index,
                message: "missing field time".into(),
            });
            continue;
        };
        let ts = match DateTime::parse_from_rfc3339(time) {
            Ok(ts) => ts.with_timezone(&Utc).trunc_subsecs(0),
            Err(e) => {
                out.errors.push(ItemError {
                    index,
                    message: format!("invalid time {time:?}: {e}"),
                });
                continue;
            }
        };

        let (text, report) = match kind {
            EventKind::UrlVisit => (String::new(), RedactionReport::default()),
            _ => scrub_pii(remainder),
        };
        out.redactions += report;
        let url = match kind {
            EventKind::UrlVisit | EventKind::VideoWatch => raw.title_url.map(|u| {
                let (u, report) = scrub_pii(&u);
                out.redactions += report;
                u
            }),
            EventKind::Query | EventKind::YoutubeSearch => None,
        };
        out.events.push(ActivityEvent {
            participant_id: pid.to_owned(),
            ts,
            platform: kind.platform(),
            kind,
            text,
            url,
        });
    }
    out.events.sort_by_key(|e| e.ts);
    Ok(out)
}

fn classify(source: Source, title: &str) -> Option<(EventKind, &str)> {
    match source {
        Source::Search => {
            if let Some(rest) = title.strip_prefix(SEARCH_PREFIX) {
                Some((EventKind::Query, rest))
            } else {
                title
                    .strip_prefix(VISIT_PREFIX)
                    .map(|rest| (EventKind::UrlVisit, rest))
            }
        }
        Source::Youtube => {
            if let Some(rest) = title.strip_prefix(WATCH_PREFIX) {
                Some((EventKind::VideoWatch, rest))
            } else {
                title
                    .strip_prefix(SEARCH_PREFIX)
                    .map(|rest| (EventKind::YoutubeSearch, rest))
            }
        }
    }
}

/// serde_json reports 1-based line and column; convert to a byte offset.
fn byte_offset(doc: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in doc.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(doc.len());
        }
        offset += l.len();
    }
    doc.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{detect_pii, Platform};

    #[test]
    fn search_items() {
        let doc = r#"[
          {"header":"Search","title":"Searched for cats","titleUrl":"https://www.google.com/search?q=cats","time":"2020-02-01T13:45:12.517Z","products":["Search"]},
          {"title":"Visited example.org","titleUrl":"https://example.org","time":"2020-02-01T13:46:00Z"},
          {"title":"Viewed an ad","time":"2020-02-01T13:47:00Z"}
        ]"#;
        let out = parse_takeout_search(doc, "p1").unwrap();
        assert_eq!(out.events.len(), 2);
        assert_eq!(out.skipped, 1);
        let q = &out.events[0];
        assert_eq!(q.kind, EventKind::Query);
        assert_eq!(q.text, "cats");
        assert_eq!(q.ts.to_rfc3339(), "2020-02-01T13:45:12+00:00");
        let v = &out.events[1];
        assert_eq!(v.kind, EventKind::UrlVisit);
        assert_eq!(v.platform, Platform::Search);
        assert_eq!(v.url.as_deref(), Some("https://example.org"));
    }

    #[test]
    fn youtube_items() {
        let doc = r#"[
          {"title":"Watched lecture 1","titleUrl":"https://www.youtube.com/watch?v=abc123","time":"2020-03-01T01:00:00Z"},
          {"title":"Searched for exam prep","titleUrl":"https://www.youtube.com/results?search_query=exam+prep","time":"2020-03-01T00:59:00Z"},
          {"title":"Subscribed to X","time":"2020-03-01T02:00:00Z"}
        ]"#;
        let out = parse_takeout_youtube(doc, "p1").unwrap();
        assert_eq!(out.skipped, 1);
        assert_eq!(out.events[0].kind, EventKind::YoutubeSearch);
        assert_eq!(out.events[0].text, "exam prep");
        assert_eq!(out.events[1].kind, EventKind::VideoWatch);
        assert_eq!(out.events[1].text, "lecture 1");
        assert_eq!(
            out.events[1].url.as_deref(),
            Some("https://www.youtube.com/watch?v=abc123")
        );
    }

    #[test]
    fn empty_array() {
        let out = parse_takeout_search("[]", "p").unwrap();
        assert!(out.events.is_empty());
        assert!(out.errors.is_empty());
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn item_errors_are_collected() {
        let doc = r#"[
          {"title":"Searched for a"},
          {"title":"Searched for b","time":"yesterday"},
          42,
          {"title":"Searched for c","time":"2020-01-05T10:00:00Z"}
        ]"#;
        let out = parse_takeout_search(doc, "p").unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.errors.len(), 3);
        assert_eq!(out.errors[0].index, 0);
        assert_eq!(out.errors[0].message, "missing field time");
    }

    #[test]
    fn malformed_reports_byte_offset() {
        let doc = "[\n  {\"title\": \"Searched for x\",, }\n]";
        match parse_takeout_search(doc, "p") {
            Err(IngestError::Malformed { offset, .. }) => {
                assert_eq!(&doc[offset..offset + 1], ",");
            }
            other => panic!("expected malformed error, got {other:?}"),
        }
    }

    #[test]
    fn scrubbing_applies_to_text_and_url() {
        let doc = r#"[
          {"title":"Searched for email me at jo@uni.edu","time":"2020-02-01T10:00:00Z"},
          {"title":"Visited form","titleUrl":"https://x.org/?phone=585-555-0100","time":"2020-02-01T10:01:00Z"}
        ]"#;
        let out = parse_takeout_search(doc, "p").unwrap();
        assert_eq!(out.events[0].text, "email me at [EMAIL]");
        assert_eq!(
            out.events[1].url.as_deref(),
            Some("https://x.org/?phone=[PHONE]")
        );
        assert_eq!(out.redactions.total(), 2);
        for e in &out.events {
            assert!(detect_pii(&e.text).is_empty());
            assert!(detect_pii(e.url.as_deref().unwrap_or("")).is_empty());
        }
    }
}
