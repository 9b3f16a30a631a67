//! Scripted detector driven by a frame-name → detections table.
//!
//! Table format, one detection per line, tab separated:
//!
//! ```text
//! # frame          label         confidence          x1  y1  x2   y2
//! match_86.jpg     foul          0.9254742860794067  20  40  140  160
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. A frame may appear on
//! several lines; its detections accumulate in file order.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use super::{BackendError, Detector};
use crate::event::EventClass;
use crate::frames::FrameRef;
use crate::geometry::{BoundingBox, Detection};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("fixture table line {line}: {message}")]
pub struct FixtureError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixtureTable {
    entries: HashMap<String, Vec<Detection>>,
}

impl FixtureTable {
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        let mut entries: HashMap<String, Vec<Detection>> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| FixtureError { line, message };
            let fields: Vec<&str> = raw.split('\t').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(err(format!("expected 7 tab-separated fields, found {}", fields.len())));
            }
            let label = EventClass::parse(fields[1]).map_err(|e| err(e.to_string()))?;
            let mut nums = [0.0f64; 5];
            for (slot, value) in nums.iter_mut().zip(&fields[2..]) {
                *slot = value.parse().map_err(|_| err(format!("{value:?} is not a number")))?;
            }
            let bbox = BoundingBox::new(nums[1], nums[2], nums[3], nums[4]).map_err(|e| err(e.to_string()))?;
            let det = Detection::new(bbox, label, nums[0]).map_err(|e| err(e.to_string()))?;
            entries.entry(fields[0].to_string()).or_default().push(det);
        }
        Ok(FixtureTable { entries })
    }

    pub fn insert(&mut self, frame_name: &str, det: Detection) {
        self.entries.entry(frame_name.to_string()).or_default().push(det);
    }

    pub fn get(&self, frame_name: &str) -> &[Detection] {
        self.entries.get(frame_name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Looks frames up by bare file name. Unknown frames yield no detections.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    table: Arc<FixtureTable>,
}

impl FixtureBackend {
    pub fn new(table: Arc<FixtureTable>) -> Self {
        FixtureBackend { table }
    }
}

impl Detector for FixtureBackend {
    fn detect(&mut self, frame: &FrameRef) -> Result<Vec<Detection>, BackendError> {
        Ok(self.table.get(&frame.file_name()).to_vec())
    }
}
