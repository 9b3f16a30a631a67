//! Fixed-interval frame sampling and the `<stem>_<seconds>.jpg` naming
//! contract that carries each frame's timestamp.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRAME_EXTENSION: &str = ".jpg";
pub const DEFAULT_INTERVAL_S: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("sampling interval must be at least one second")]
    InvalidInterval,
    #[error("invalid frame stem {0:?}: must be non-empty and free of path separators")]
    InvalidStem(String),
    #[error("{0:?} does not end in .jpg")]
    Extension(String),
    #[error("{0:?} has no underscore separating stem and timestamp")]
    MissingUnderscore(String),
    #[error("{0:?} has a non-integer timestamp")]
    Timestamp(String),
    #[error("unparseable frame names: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Aggregate(Vec<FrameError>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub video_stem: String,
    pub duration_s: u64,
    pub interval_s: u64,
    pub timestamps: Vec<u64>,
}

impl SamplePlan {
    pub fn new(video_stem: &str, duration_s: u64, interval_s: u64) -> Result<Self, FrameError> {
        validate_stem(video_stem)?;
        Ok(SamplePlan {
            video_stem: video_stem.to_string(),
            duration_s,
            interval_s,
            timestamps: plan_samples(duration_s, interval_s)?,
        })
    }

    pub fn frame_names(&self) -> impl Iterator<Item = String> + '_ {
        self.timestamps.iter().map(|&t| format!("{}_{t}{FRAME_EXTENSION}", self.video_stem))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub path: PathBuf,
    pub timestamp_s: u64,
}

impl FrameRef {
    /// The bare file name, which is also the fixture table key.
    pub fn file_name(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

impl fmt::Display for FrameRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}s", self.path.display(), self.timestamp_s)
    }
}

/// 0, interval, 2·interval, … up to and including `duration_s`.
pub fn plan_samples(duration_s: u64, interval_s: u64) -> Result<Vec<u64>, FrameError> {
    if interval_s == 0 {
        return Err(FrameError::InvalidInterval);
    }
    Ok((0..=duration_s).step_by(interval_s as usize).collect())
}

fn validate_stem(stem: &str) -> Result<(), FrameError> {
    if stem.is_empty() || stem.contains(['/', '\\']) {
        return Err(FrameError::InvalidStem(stem.to_string()));
    }
    Ok(())
}

pub fn frame_filename(stem: &str, t: u64) -> Result<String, FrameError> {
    validate_stem(stem)?;
    Ok(format!("{stem}_{t}{FRAME_EXTENSION}"))
}

/// Split at the last underscore; stems may themselves contain underscores.
pub fn parse_frame_filename(name: &str) -> Result<(String, u64), FrameError> {
    let base = name
        .strip_suffix(FRAME_EXTENSION)
        .ok_or_else(|| FrameError::Extension(name.to_string()))?;
    let (stem, ts) = base
        .rsplit_once('_')
        .ok_or_else(|| FrameError::MissingUnderscore(name.to_string()))?;
    if stem.is_empty() {
        return Err(FrameError::InvalidStem(stem.to_string()));
    }
    if ts.is_empty() || !ts.bytes().all(|b| b.is_ascii_digit()) {
        return Err(FrameError::Timestamp(name.to_string()));
    }
    let t = ts.parse().map_err(|_| FrameError::Timestamp(name.to_string()))?;
    Ok((stem.to_string(), t))
}

/// Numeric chronological order, stable for equal timestamps.
pub fn sort_frames<S: AsRef<str>>(names: &[S]) -> Result<Vec<FrameRef>, FrameError> {
    sort_frame_paths(names.iter().map(|n| PathBuf::from(n.as_ref())))
}

pub fn sort_frame_paths<I: IntoIterator<Item = PathBuf>>(paths: I) -> Result<Vec<FrameRef>, FrameError> {
    let mut frames = Vec::new();
    let mut errors = Vec::new();
    for path in paths {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match parse_frame_filename(&name) {
            Ok((_, timestamp_s)) => frames.push(FrameRef { path, timestamp_s }),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(FrameError::Aggregate(errors));
    }
    frames.sort_by_key(|f| f.timestamp_s);
    Ok(frames)
}

/// Every `*.jpg` in `dir`, chronologically. Other files are ignored.
pub fn scan_frame_dir(dir: &Path) -> std::io::Result<Result<Vec<FrameRef>, FrameError>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.to_string_lossy().ends_with(FRAME_EXTENSION) {
            paths.push(path);
        }
    }
    // read_dir order is platform-defined; fix it before the stable sort
    paths.sort();
    Ok(sort_frame_paths(paths))
}
