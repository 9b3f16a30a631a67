//! Pipeline configuration: built-in defaults, then a flat `key=value` file,
//! then command-line overrides. Every layer goes through [`PipelineConfig::set`],
//! so a key means the same thing wherever it appears.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::detector::{find_profile, BackendProfile};
use crate::eval::DEFAULT_TOLERANCE_S;
use crate::frames::DEFAULT_INTERVAL_S;
use crate::planner::PlannerConfig;
use crate::render::RenderOptions;

pub const CONFIG_ENV: &str = "HIGHLIGHT_FORGE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: expected `key=value`")]
    Syntax { origin: Origin },
    #[error("{origin}: unknown key {key:?}")]
    UnknownKey { origin: Origin, key: String },
    #[error("{origin}: bad value {value:?} for {key}: {reason}")]
    Value { origin: Origin, key: String, value: String, reason: String },
    #[error("unknown backend {0:?}")]
    UnknownBackend(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathsConfig {
    pub video: Option<PathBuf>,
    /// Parent of the run-stamped directories.
    pub workdir: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub fixture_table: Option<PathBuf>,
    pub sidecar: Option<String>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            video: None,
            workdir: PathBuf::from("highlight-runs"),
            out_dir: None,
            fixture_table: None,
            sidecar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub backend: String,
    /// Overrides the profile's box confidence threshold when set.
    pub confidence: Option<f64>,
    pub sample_interval_s: u64,
    pub planner: PlannerConfig,
    pub tolerance_s: u64,
    pub workers: usize,
    pub retries: usize,
    pub probe_tool: String,
    pub render: RenderOptions,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: "fixture".into(),
            confidence: None,
            sample_interval_s: DEFAULT_INTERVAL_S,
            planner: PlannerConfig::default(),
            tolerance_s: DEFAULT_TOLERANCE_S,
            workers: 1,
            retries: 1,
            probe_tool: "ffprobe".into(),
            render: RenderOptions::default(),
            paths: PathsConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "backend",
    "confidence",
    "workers",
    "sample.interval_s",
    "detect.retries",
    "planner.lead_s",
    "planner.tail_s",
    "planner.merge_gap_s",
    "eval.tolerance_s",
    "render.tool",
    "render.probe_tool",
    "render.margin_px",
    "render.font_size",
    "render.font_file",
    "render.video_codec",
    "render.audio_codec",
    "paths.video",
    "paths.workdir",
    "paths.out_dir",
    "paths.fixture_table",
    "paths.sidecar",
];

fn parse_num<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

fn fraction(value: &str) -> Result<f64, String> {
    let v: f64 = parse_num(value)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be a fraction in [0, 1]".into())
    }
}

fn positive<T: FromStr + PartialEq + Default>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    let v: T = parse_num(value)?;
    if v == T::default() {
        Err("must be positive".into())
    } else {
        Ok(v)
    }
}

fn nonempty(value: &str) -> Result<String, String> {
    if value.is_empty() {
        Err("must not be empty".into())
    } else {
        Ok(value.to_string())
    }
}

impl PipelineConfig {
    /// Apply one setting. An empty value clears optional keys.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), ConfigError> {
        let value = value.trim();
        let opt_path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        let result: Result<(), String> = (|| {
            match key {
                "backend" => {
                    let name = nonempty(value)?;
                    if find_profile(&name).is_none() {
                        return Err("no such backend profile".into());
                    }
                    self.backend = name;
                }
                "confidence" => self.confidence = if value.is_empty() { None } else { Some(fraction(value)?) },
                "workers" => self.workers = positive(value)?,
                "sample.interval_s" => self.sample_interval_s = positive(value)?,
                "detect.retries" => self.retries = parse_num(value)?,
                "planner.lead_s" => self.planner.lead_s = parse_num(value)?,
                "planner.tail_s" => self.planner.tail_s = parse_num(value)?,
                "planner.merge_gap_s" => self.planner.merge_gap_s = parse_num(value)?,
                "eval.tolerance_s" => self.tolerance_s = parse_num(value)?,
                "render.tool" => self.render.tool = nonempty(value)?,
                "render.probe_tool" => self.probe_tool = nonempty(value)?,
                "render.margin_px" => self.render.margin_px = parse_num(value)?,
                "render.font_size" => self.render.font_size = positive(value)?,
                "render.font_file" => self.render.font_file = (!value.is_empty()).then(|| value.to_string()),
                "render.video_codec" => self.render.video_codec = nonempty(value)?,
                "render.audio_codec" => self.render.audio_codec = nonempty(value)?,
                "paths.video" => self.paths.video = opt_path(value),
                "paths.workdir" => self.paths.workdir = PathBuf::from(nonempty(value)?),
                "paths.out_dir" => self.paths.out_dir = opt_path(value),
                "paths.fixture_table" => self.paths.fixture_table = opt_path(value),
                "paths.sidecar" => self.paths.sidecar = (!value.is_empty()).then(|| value.to_string()),
                _ => return Err(String::new()),
            }
            Ok(())
        })();
        result.map_err(|reason| {
            if KEYS.contains(&key) {
                ConfigError::Value { origin, key: key.into(), value: value.into(), reason }
            } else {
                ConfigError::UnknownKey { origin, key: key.into() }
            }
        })
    }

    /// Apply every line of a config file. `#` starts a comment line.
    pub fn apply_file_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_path_buf(), line: idx + 1 };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { origin: origin.clone() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { origin });
            }
            self.set(key, value, origin)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        self.apply_file_text(&text, path)
    }

    /// Defaults, then the config file (explicit path or `$HIGHLIGHT_FORGE_CONFIG`),
    /// then `overrides` in order.
    pub fn load(config_path: Option<&Path>, overrides: &[(&str, String)]) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        let env_path = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        if let Some(path) = config_path.map(Path::to_path_buf).or(env_path) {
            cfg.apply_file(&path)?;
        }
        for (key, value) in overrides {
            cfg.set(key, value, Origin::Flag)?;
        }
        Ok(cfg)
    }

    pub fn profile(&self) -> Result<BackendProfile, ConfigError> {
        find_profile(&self.backend).ok_or_else(|| ConfigError::UnknownBackend(self.backend.clone()))
    }

    /// The box confidence filter actually applied when building timelines.
    pub fn effective_confidence(&self) -> Result<f64, ConfigError> {
        Ok(match self.confidence {
            Some(c) => c,
            None => self.profile()?.box_confidence_threshold,
        })
    }

    /// Render back to file form; [`apply_file_text`](Self::apply_file_text) on
    /// the result reproduces `self`.
    pub fn to_file_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let pairs: Vec<(&str, String)> = vec![
            ("backend", self.backend.clone()),
            ("confidence", self.confidence.map(|c| c.to_string()).unwrap_or_default()),
            ("workers", self.workers.to_string()),
            ("sample.interval_s", self.sample_interval_s.to_string()),
            ("detect.retries", self.retries.to_string()),
            ("planner.lead_s", self.planner.lead_s.to_string()),
            ("planner.tail_s", self.planner.tail_s.to_string()),
            ("planner.merge_gap_s", self.planner.merge_gap_s.to_string()),
            ("eval.tolerance_s", self.tolerance_s.to_string()),
            ("render.tool", self.render.tool.clone()),
            ("render.probe_tool", self.probe_tool.clone()),
            ("render.margin_px", self.render.margin_px.to_string()),
            ("render.font_size", self.render.font_size.to_string()),
            ("render.font_file", self.render.font_file.clone().unwrap_or_default()),
            ("render.video_codec", self.render.video_codec.clone()),
            ("render.audio_codec", self.render.audio_codec.clone()),
            ("paths.video", path(&self.paths.video)),
            ("paths.workdir", self.paths.workdir.display().to_string()),
            ("paths.out_dir", path(&self.paths.out_dir)),
            ("paths.fixture_table", path(&self.paths.fixture_table)),
            ("paths.sidecar", self.paths.sidecar.clone().unwrap_or_default()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
