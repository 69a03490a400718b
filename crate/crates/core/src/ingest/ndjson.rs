//! Canonical event NDJSON: one object per line, sorted by (pid, ts).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SubsecRound, Utc};
use serde::Deserialize;

use super::{ActivityEvent, EventKind, IngestError, Platform};

#[derive(Deserialize)]
struct RawLine {
    pid: Option<String>,
    ts: Option<String>,
    platform: Option<Platform>,
    kind: Option<EventKind>,
    text: Option<String>,
    #[serde(default)]
    url: Option<String>,
}

fn schema(line: usize, message: impl Into<String>) -> IngestError {
    IngestError::Schema {
        line,
        message: message.into(),
    }
}

fn missing(line: usize, field: &str) -> IngestError {
    schema(line, format!("missing field {field}"))
}

fn parse_line(line_no: usize, line: &str) -> Result<ActivityEvent, IngestError> {
    let raw: RawLine = serde_json::from_str(line).map_err(|e| schema(line_no, e.to_string()))?;
    let pid = raw.pid.ok_or_else(|| missing(line_no, "pid"))?;
    let ts = raw.ts.ok_or_else(|| missing(line_no, "ts"))?;
    let platform = raw.platform.ok_or_else(|| missing(line_no, "platform"))?;
    let kind = raw.kind.ok_or_else(|| missing(line_no, "kind"))?;
    let text = raw.text.ok_or_else(|| missing(line_no, "text"))?;
    let ts = DateTime::parse_from_rfc3339(&ts)
        .map_err(|e| schema(line_no, format!("invalid ts {ts:?}: {e}")))?
        .with_timezone(&Utc)
        .trunc_subsecs(0);
    if kind.platform() != platform {
        return Err(schema(
            line_no,
            format!("kind {kind:?} does not belong to platform {platform:?}"),
        ));
    }
    Ok(ActivityEvent {
        participant_id: pid,
        ts,
        platform,
        kind,
        text,
        url: raw.url,
    })
}

/// Write events sorted by (participant, timestamp); ties keep input order.
pub fn write_events_to<W: Write>(writer: W, events: &[ActivityEvent]) -> Result<(), IngestError> {
    for e in events {
        if !e.is_consistent() {
            return Err(IngestError::Inconsistent {
                pid: e.participant_id.clone(),
                ts: e.ts,
                kind: e.kind,
                platform: e.platform,
            });
        }
    }
    let mut order: Vec<&ActivityEvent> = events.iter().collect();
    order.sort_by(|a, b| {
        a.participant_id
            .cmp(&b.participant_id)
            .then(a.ts.cmp(&b.ts))
    });
    let mut w = BufWriter::new(writer);
    for e in order {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events(path: impl AsRef<Path>, events: &[ActivityEvent]) -> Result<(), IngestError> {
    write_events_to(File::create(path)?, events)
}

pub fn read_events_from<R: BufRead>(reader: R) -> Result<Vec<ActivityEvent>, IngestError> {
    let mut out = Vec::new();
    for batch in ParticipantBatches::new(reader) {
        out.extend(batch?.1);
    }
    Ok(out)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<ActivityEvent>, IngestError> {
    read_events_from(BufReader::new(File::open(path)?))
}

/// Streams a canonical NDJSON file one participant at a time, so memory
/// stays bounded by the largest participant rather than the whole file.
pub struct ParticipantBatches<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    pending: Option<ActivityEvent>,
    last_pid: Option<String>,
    done: bool,
}

impl<R: BufRead> ParticipantBatches<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            pending: None,
            last_pid: None,
            done: false,
        }
    }

    fn next_event(&mut self) -> Option<Result<ActivityEvent, IngestError>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(parse_line(self.line_no, &line));
        }
    }
}

impl<R: BufRead> Iterator for ParticipantBatches<R> {
    type Item = Result<(String, Vec<ActivityEvent>), IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let first = match self.pending.take() {
            Some(e) => e,
            None => match self.next_event() {
                None => {
                    self.done = true;
                    return None;
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(e)) => e,
            },
        };
        if self
            .last_pid
            .as_ref()
            .is_some_and(|p| *p >= first.participant_id)
        {
            self.done = true;
            return Some(Err(IngestError::Unsorted { line: self.line_no }));
        }
        let pid = first.participant_id.clone();
        let mut batch = vec![first];
        loop {
            match self.next_event() {
                None => break,
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(e)) if e.participant_id == pid => {
                    if e.ts < batch[batch.len() - 1].ts {
                        self.done = true;
                        return Some(Err(IngestError::Unsorted { line: self.line_no }));
                    }
                    batch.push(e);
                }
                Some(Ok(e)) => {
                    self.pending = Some(e);
                    break;
                }
            }
        }
        self.last_pid = Some(pid.clone());
        Some(Ok((pid, batch)))
    }
}
