//! Event-stream file formats.
//!
//! CSV (`index,theta,outcome`) is the canonical bulk format; JSONL (one
//! object per line) is for streaming. Angles are radians written with 17
//! significant digits, so emit followed by ingest is the identity on
//! event sequences.

use crate::experiment::PhotonEvent;
use crate::hv::Sign;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

pub const CSV_HEADER: &str = "index,theta,outcome";

#[derive(Debug, Error)]
pub enum EventIoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("input contains no events")]
    EmptyInput,
}

fn bad(line: usize, message: impl Into<String>) -> EventIoError {
    EventIoError::MalformedLine { line, message: message.into() }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonEvent {
    index: u64,
    theta: f64,
    outcome: i64,
}

fn parse_outcome(token: &str, line: usize) -> Result<Sign, EventIoError> {
    let v: i64 = token
        .trim()
        .parse()
        .map_err(|_| bad(line, format!("outcome {token:?} is not an integer")))?;
    Sign::from_value(v).ok_or_else(|| bad(line, format!("outcome must be +1 or -1, got {v}")))
}

/// Writes events as canonical CSV with a header line.
pub fn write_events_csv<W: Write>(mut w: W, events: &[PhotonEvent]) -> Result<(), EventIoError> {
    writeln!(w, "{CSV_HEADER}")?;
    for e in events {
        writeln!(w, "{},{:.16e},{}", e.index, e.theta, e.outcome.value() as i64)?;
    }
    Ok(())
}

/// Writes events as JSONL, one object per event.
pub fn write_events_jsonl<W: Write>(mut w: W, events: &[PhotonEvent]) -> Result<(), EventIoError> {
    for e in events {
        let rec = JsonEvent {
            index: e.index,
            theta: e.theta,
            outcome: e.outcome.value() as i64,
        };
        serde_json::to_writer(&mut w, &rec).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads canonical CSV; an `index,theta,outcome` header is optional.
pub fn read_events_csv<R: BufRead>(r: R) -> Result<Vec<PhotonEvent>, EventIoError> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() || (line_no == 1 && text == CSV_HEADER) {
            continue;
        }
        let mut parts = text.split(',');
        let (a, b, c) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c), None) => (a, b, c),
            _ => return Err(bad(line_no, "expected exactly 3 comma-separated fields")),
        };
        let index: u64 = a
            .trim()
            .parse()
            .map_err(|_| bad(line_no, format!("index {a:?} is not a nonnegative integer")))?;
        let theta: f64 = b
            .trim()
            .parse()
            .map_err(|_| bad(line_no, format!("theta {b:?} is not a number")))?;
        if !theta.is_finite() {
            return Err(bad(line_no, format!("theta {theta} is not finite")));
        }
        let outcome = parse_outcome(c, line_no)?;
        events.push(PhotonEvent { index, theta, outcome });
    }
    if events.is_empty() {
        return Err(EventIoError::EmptyInput);
    }
    Ok(events)
}

/// Reads JSONL events.
pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<PhotonEvent>, EventIoError> {
    let mut events = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let rec: JsonEvent =
            serde_json::from_str(text).map_err(|e| bad(line_no, e.to_string()))?;
        if !rec.theta.is_finite() {
            return Err(bad(line_no, format!("theta {} is not finite", rec.theta)));
        }
        let outcome = Sign::from_value(rec.outcome)
            .ok_or_else(|| bad(line_no, format!("outcome must be +1 or -1, got {}", rec.outcome)))?;
        events.push(PhotonEvent { index: rec.index, theta: rec.theta, outcome });
    }
    if events.is_empty() {
        return Err(EventIoError::EmptyInput);
    }
    Ok(events)
}

/// Reads either format, deciding per content: lines starting with `{`
/// are JSONL, anything else is CSV.
pub fn read_events_auto<R: BufRead>(mut r: R) -> Result<Vec<PhotonEvent>, EventIoError> {
    let mut buf = String::new();
    r.read_to_string(&mut buf)?;
    let first = buf.lines().map(str::trim).find(|l| !l.is_empty());
    match first {
        None => Err(EventIoError::EmptyInput),
        Some(l) if l.starts_with('{') => read_events_jsonl(buf.as_bytes()),
        Some(_) => read_events_csv(buf.as_bytes()),
    }
}
