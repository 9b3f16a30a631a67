//! Per-second event records and the tab-separated metadata file.
//!
//! One line per second that had at least one confident detection:
//!
//! ```text
//! 114-<TAB>[('Corner kick', 92.61274933815002), ('Corner kick', 91.55545830726624)]
//! ```
//!
//! The writer always emits `-` followed by a single tab; the reader accepts
//! any run of tabs or spaces there and after each comma. Confidences are
//! percentages printed as the shortest decimal that parses back to the same
//! `f64`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{filter_confident, FrameDetections};
use crate::event::EventClass;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: record has no events")]
    EmptyRecord { line: usize },
    #[error("line {line}, column {column}: unknown event label {label:?}")]
    Label { line: usize, column: usize, label: String },
    #[error("line {line}: timestamp {timestamp} does not increase on the previous record")]
    Order { line: usize, timestamp: u64 },
    #[error("frame at {0}s appears more than once")]
    DuplicateFrame(u64),
    #[error("frames are not in timestamp order at {0}s")]
    UnsortedFrames(u64),
}

/// A label with its confidence expressed in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvent {
    pub label: EventClass,
    pub confidence_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp_s: u64,
    pub events: Vec<ScoredEvent>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventTimeline {
    pub records: Vec<EventRecord>,
}

/// Shortest round-trip decimal, always with a fractional part.
pub fn format_percent(value: f64) -> String {
    let s = format!("{value}");
    if s.contains(['.', 'e', 'E']) || !value.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn format_record(r: &EventRecord) -> String {
    let mut out = format!("{}-\t[", r.timestamp_s);
    for (i, ev) in r.events.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "('{}', {})", ev.label, format_percent(ev.confidence_pct));
    }
    out.push(']');
    out
}

pub fn format_timeline(t: &EventTimeline) -> String {
    t.records.iter().map(|r| format_record(r) + "\n").collect()
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn err(&self, message: impl Into<String>) -> TimelineError {
        TimelineError::Syntax { line: self.line, column: self.column(), message: message.into() }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn expect(&mut self, token: &str) -> Result<(), TimelineError> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.err(format!("expected {token:?}")))
        }
    }

    fn skip_ws(&mut self) -> usize {
        let n = self.rest().len() - self.rest().trim_start_matches([' ', '\t']).len();
        self.pos += n;
        n
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let rest = self.rest();
        let end = rest.find(|c: char| !pred(c)).unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }
}

fn parse_pair(cur: &mut Cursor<'_>) -> Result<ScoredEvent, TimelineError> {
    cur.expect("('")?;
    let label_col = cur.column();
    let rest = cur.rest();
    let end = rest.find('\'').ok_or_else(|| cur.err("unterminated label"))?;
    let raw_label = &rest[..end];
    cur.pos += end;
    let label = EventClass::parse(raw_label).map_err(|_| TimelineError::Label {
        line: cur.line,
        column: label_col,
        label: raw_label.to_string(),
    })?;
    cur.expect("',")?;
    cur.skip_ws();
    let num_col_pos = cur.pos;
    let num = cur.take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    let confidence_pct: f64 = num.parse().map_err(|_| {
        cur.pos = num_col_pos;
        cur.err(format!("{num:?} is not a number"))
    })?;
    if !(0.0..=100.0).contains(&confidence_pct) {
        cur.pos = num_col_pos;
        return Err(cur.err(format!("confidence {num} is outside [0, 100]")));
    }
    cur.expect(")")?;
    Ok(ScoredEvent { label, confidence_pct })
}

fn parse_line_at(line: &str, line_no: usize) -> Result<EventRecord, TimelineError> {
    let mut cur = Cursor { text: line.trim_end_matches('\r'), pos: 0, line: line_no };
    let digits = cur.take_while(|c| c.is_ascii_digit());
    if digits.is_empty() {
        return Err(cur.err("expected a timestamp"));
    }
    let timestamp_s: u64 = digits.parse().map_err(|_| cur.err("timestamp out of range"))?;
    cur.expect("-")?;
    cur.skip_ws();
    cur.expect("[")?;
    if cur.rest().starts_with(']') {
        return Err(TimelineError::EmptyRecord { line: line_no });
    }
    let mut events = vec![parse_pair(&mut cur)?];
    loop {
        if cur.rest().starts_with(']') {
            cur.pos += 1;
            break;
        }
        cur.expect(",")?;
        cur.skip_ws();
        events.push(parse_pair(&mut cur)?);
    }
    if !cur.rest().trim().is_empty() {
        return Err(cur.err("trailing characters after record"));
    }
    Ok(EventRecord { timestamp_s, events })
}

pub fn parse_line(line: &str) -> Result<EventRecord, TimelineError> {
    parse_line_at(line, 1)
}

/// Parse a whole metadata file. Blank lines are skipped; timestamps must
/// strictly increase.
pub fn parse_timeline(text: &str) -> Result<EventTimeline, TimelineError> {
    let mut records: Vec<EventRecord> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line_at(line, idx + 1)?;
        if let Some(prev) = records.last() {
            if record.timestamp_s <= prev.timestamp_s {
                return Err(TimelineError::Order { line: idx + 1, timestamp: record.timestamp_s });
            }
        }
        records.push(record);
    }
    Ok(EventTimeline { records })
}

/// Filter each frame at `threshold` and keep the seconds that still have
/// detections. Frames must be in strictly increasing timestamp order.
pub fn build_timeline(frames: &[FrameDetections], threshold: f64) -> Result<EventTimeline, TimelineError> {
    for pair in frames.windows(2) {
        let (a, b) = (pair[0].frame.timestamp_s, pair[1].frame.timestamp_s);
        if a == b {
            return Err(TimelineError::DuplicateFrame(a));
        }
        if b < a {
            return Err(TimelineError::UnsortedFrames(b));
        }
    }
    let records = frames
        .iter()
        .filter_map(|fd| {
            let kept = filter_confident(fd, threshold);
            if kept.detections.is_empty() {
                return None;
            }
            Some(EventRecord {
                timestamp_s: fd.frame.timestamp_s,
                events: kept
                    .detections
                    .iter()
                    .map(|d| ScoredEvent { label: d.label, confidence_pct: d.confidence * 100.0 })
                    .collect(),
            })
        })
        .collect();
    Ok(EventTimeline { records })
}
