//! The passes as callable commands: sample, detect, plan, render, evaluate,
//! and `run`, which chains the first four inside a run-stamped directory.
//!
//! Commands never print. They return what they produced (and, under dry-run,
//! what they would have produced) and leave presentation to the caller.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::detector::{
    detect_frames, BackendError, Detector, FixtureBackend, FixtureTable, PoolOptions, SidecarAddress, SidecarClient, SkippedFrame,
};
use crate::eval::{
    match_events, parse_ground_truth, predictions_from_cutlist, predictions_from_timeline, report_table, EvalReport,
};
use crate::frames::{scan_frame_dir, FrameRef, SamplePlan};
use crate::planner::{merge_windows, CutList};
use crate::render::{
    execute_plan, plan_frame_extraction, plan_render, plan_to_json, video_stem, CommandSpec, ExecOptions, RenderError, RunReport,
    SpecStatus,
};
use crate::timeline::{build_timeline, format_timeline, parse_timeline, EventTimeline};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration, flags, or input files.
    #[error("configuration error: {0}")]
    Config(String),
    /// A required tool, service, or filesystem location is unavailable.
    #[error("environment error: {0}")]
    Environment(String),
    /// The detection backend broke the wire protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// An external command ran and failed.
    #[error("execution error: {0}")]
    Execution(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Environment(_) => 3,
            PipelineError::Protocol(_) => 4,
            PipelineError::Execution(_) => 5,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<BackendError> for PipelineError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Transport(_) => PipelineError::Environment(e.to_string()),
            BackendError::Protocol(_) => PipelineError::Protocol(e.to_string()),
        }
    }
}

impl From<RenderError> for PipelineError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::EmptyPlan | RenderError::InvalidPath(_) | RenderError::OutputCollision(_) => {
                PipelineError::Config(e.to_string())
            }
            RenderError::ToolMissing { .. } | RenderError::Io { .. } => PipelineError::Environment(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn read_input(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {what} {}: {e}", path.display())))
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| PipelineError::Environment(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::Environment(format!("cannot write {}: {e}", path.display())))
}

fn require_video(cfg: &PipelineConfig) -> Result<PathBuf> {
    let video = cfg.paths.video.clone().ok_or_else(|| config_err("no video given (--video or paths.video)"))?;
    if !video.is_file() {
        return Err(config_err(format!("video {} does not exist or is not a file", video.display())));
    }
    video_stem(&video)?;
    Ok(video)
}

fn require_dir(dir: &Path, what: &str) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(config_err(format!("{what} {} is not a directory", dir.display())))
    }
}

/// Whole seconds of media in `video`, via an ffprobe-compatible tool.
pub fn probe_duration(probe_tool: &str, video: &Path) -> Result<u64> {
    let output = Command::new(probe_tool)
        .args(["-v", "error", "-show_entries", "format=duration", "-of", "default=noprint_wrappers=1:nokey=1"])
        .arg(video)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| PipelineError::Environment(format!("cannot run {probe_tool}: {e}")))?;
    if !output.status.success() {
        return Err(PipelineError::Environment(format!(
            "{probe_tool} failed on {}: {}",
            video.display(),
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    let secs: f64 = text
        .trim()
        .parse()
        .map_err(|_| PipelineError::Environment(format!("{probe_tool} printed an unreadable duration {:?}", text.trim())))?;
    if !secs.is_finite() || secs < 0.0 {
        return Err(PipelineError::Environment(format!("{probe_tool} reported duration {secs}")));
    }
    Ok(secs.floor() as u64)
}

fn resolve_duration(cfg: &PipelineConfig, explicit: Option<u64>) -> Result<u64> {
    match explicit {
        Some(d) => Ok(d),
        None => {
            let video = require_video(cfg)?;
            probe_duration(&cfg.probe_tool, &video)
        }
    }
}

fn exec_options(cfg: &PipelineConfig, resume: bool) -> ExecOptions {
    ExecOptions { workers: cfg.workers, resume }
}

fn check_report(report: &RunReport) -> Result<()> {
    match report.first_failure() {
        None => Ok(()),
        Some(outcome) => {
            let detail = match &outcome.status {
                SpecStatus::Failed { exit_code, stderr } => format!("exit code {exit_code:?}: {stderr}"),
                other => format!("{other:?}"),
            };
            Err(PipelineError::Execution(format!("command #{} ({:?}) failed: {detail}", outcome.index, outcome.purpose)))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Mode {
    pub dry_run: bool,
    pub resume: bool,
}

#[derive(Debug)]
pub struct SampleOutcome {
    pub plan: SamplePlan,
    pub specs: Vec<CommandSpec>,
    /// `None` under dry-run.
    pub report: Option<RunReport>,
}

/// Extract one frame every `sample_interval_s` seconds into `frames_dir`.
pub fn cmd_sample(cfg: &PipelineConfig, frames_dir: &Path, duration_s: Option<u64>, mode: Mode) -> Result<SampleOutcome> {
    let video = require_video(cfg)?;
    let duration_s = resolve_duration(cfg, duration_s)?;
    let stem = video_stem(&video)?;
    let plan = SamplePlan::new(&stem, duration_s, cfg.sample_interval_s).map_err(|e| config_err(e.to_string()))?;
    let specs = plan_frame_extraction(&video, &plan, frames_dir, &cfg.render);
    if mode.dry_run {
        return Ok(SampleOutcome { plan, specs, report: None });
    }
    let report = execute_plan(&specs, &exec_options(cfg, mode.resume))?;
    check_report(&report)?;
    Ok(SampleOutcome { plan, specs, report: Some(report) })
}

type DetectorFactory = Box<dyn Fn() -> std::result::Result<Box<dyn Detector>, BackendError> + Sync>;

/// Build one detector per worker for the configured backend.
fn backend_factory(cfg: &PipelineConfig) -> Result<DetectorFactory> {
    let profile = cfg.profile()?;
    if profile.is_fixture() {
        let path = cfg
            .paths
            .fixture_table
            .clone()
            .ok_or_else(|| config_err("the fixture backend needs a table (--fixture-table or paths.fixture_table)"))?;
        let table = FixtureTable::parse(&read_input(&path, "fixture table")?)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let table = Arc::new(table);
        Ok(Box::new(move || Ok(Box::new(FixtureBackend::new(table.clone())) as Box<dyn Detector>)))
    } else {
        let spec = cfg
            .paths
            .sidecar
            .clone()
            .ok_or_else(|| config_err(format!("backend {} needs a sidecar address (--sidecar or paths.sidecar)", profile.name)))?;
        let address = SidecarAddress::parse(&spec).map_err(config_err)?;
        Ok(Box::new(move || Ok(Box::new(SidecarClient::connect(&address)?) as Box<dyn Detector>)))
    }
}

#[derive(Debug)]
pub struct DetectOutcome {
    pub frames: Vec<FrameRef>,
    pub timeline: EventTimeline,
    pub metadata: String,
    pub skipped: Vec<SkippedFrame>,
}

/// Run every frame in `frames_dir` through the backend and write the
/// metadata file. Frames the backend could not process fail the command
/// after the partial metadata has been written.
pub fn cmd_detect(cfg: &PipelineConfig, frames_dir: &Path, metadata_out: &Path, mode: Mode) -> Result<DetectOutcome> {
    require_dir(frames_dir, "frames directory")?;
    let frames = scan_frame_dir(frames_dir)
        .map_err(|e| config_err(format!("cannot list {}: {e}", frames_dir.display())))?
        .map_err(|e| config_err(e.to_string()))?;
    let profile = cfg.profile()?;
    let threshold = cfg.effective_confidence()?;
    let factory = backend_factory(cfg)?;
    let opts = PoolOptions { workers: cfg.workers, overlap_threshold: profile.overlap_threshold, retries: cfg.retries };
    let run = detect_frames(&factory, &frames, &opts)?;
    let timeline = build_timeline(&run.frames, threshold).map_err(|e| PipelineError::Protocol(e.to_string()))?;
    let metadata = format_timeline(&timeline);
    if !mode.dry_run {
        write_output(metadata_out, &metadata)?;
    }
    if let Some(first) = run.skipped.first() {
        let err = PipelineError::from(first.error.clone());
        let msg = format!("{} of {} frames failed, first {}: {err}", run.skipped.len(), frames.len(), first.frame);
        return Err(match err {
            PipelineError::Protocol(_) => PipelineError::Protocol(msg),
            _ => PipelineError::Environment(msg),
        });
    }
    Ok(DetectOutcome { frames, timeline, metadata, skipped: run.skipped })
}

#[derive(Debug)]
pub struct PlanOutcome {
    pub cutlist: CutList,
    pub json: String,
}

/// Merge the metadata file's events into a cut list.
pub fn cmd_plan(cfg: &PipelineConfig, metadata: &Path, duration_s: Option<u64>, cutlist_out: &Path, mode: Mode) -> Result<PlanOutcome> {
    let timeline = parse_timeline(&read_input(metadata, "metadata file")?)
        .map_err(|e| config_err(format!("{}: {e}", metadata.display())))?;
    let duration_s = resolve_duration(cfg, duration_s)?;
    plan_from_timeline(cfg, &timeline, duration_s, cutlist_out, mode)
}

fn plan_from_timeline(cfg: &PipelineConfig, timeline: &EventTimeline, duration_s: u64, cutlist_out: &Path, mode: Mode) -> Result<PlanOutcome> {
    let cutlist = merge_windows(timeline, &cfg.planner, duration_s).map_err(|e| config_err(e.to_string()))?;
    let json = cutlist.to_json();
    if !mode.dry_run {
        write_output(cutlist_out, &json)?;
    }
    Ok(PlanOutcome { cutlist, json })
}

#[derive(Debug)]
pub struct RenderOutcome {
    pub specs: Vec<CommandSpec>,
    pub plan_json: String,
    pub plan_path: PathBuf,
    pub highlights: PathBuf,
    pub report: Option<RunReport>,
}

pub fn render_plan_path(out_dir: &Path, video: &Path) -> Result<PathBuf> {
    Ok(out_dir.join(format!("{}_render_plan.json", video_stem(video)?)))
}

/// Cut, overlay and concatenate the clips of `cutlist` into `out_dir`.
pub fn cmd_render(cfg: &PipelineConfig, cutlist: &Path, out_dir: &Path, mode: Mode) -> Result<RenderOutcome> {
    let cutlist = CutList::from_json(&read_input(cutlist, "cut list")?).map_err(|e| config_err(format!("{}: {e}", cutlist.display())))?;
    render_cutlist(cfg, &cutlist, out_dir, mode)
}

fn render_cutlist(cfg: &PipelineConfig, cutlist: &CutList, out_dir: &Path, mode: Mode) -> Result<RenderOutcome> {
    let video = require_video(cfg)?;
    let specs = plan_render(cutlist, &video, out_dir, &cfg.render)?;
    let plan_json = plan_to_json(&specs);
    let plan_path = render_plan_path(out_dir, &video)?;
    let highlights = specs.last().and_then(|s| s.outputs.first()).cloned().expect("render plans end with the concat");
    if mode.dry_run {
        return Ok(RenderOutcome { specs, plan_json, plan_path, highlights, report: None });
    }
    write_output(&plan_path, &plan_json)?;
    let report = execute_plan(&specs, &exec_options(cfg, mode.resume))?;
    check_report(&report)?;
    Ok(RenderOutcome { specs, plan_json, plan_path, highlights, report: Some(report) })
}

#[derive(Debug, Clone)]
pub enum PredictionSource {
    Metadata(PathBuf),
    CutList(PathBuf),
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub table: String,
    pub json: String,
}

pub const EVAL_TABLE_FILE: &str = "eval_report.txt";
pub const EVAL_JSON_FILE: &str = "eval_report.json";

/// Score predictions against a ground-truth CSV; writes the table and JSON
/// report into `out_dir` when one is given.
pub fn cmd_evaluate(cfg: &PipelineConfig, truth: &Path, predictions: &PredictionSource, out_dir: Option<&Path>, mode: Mode) -> Result<EvalOutcome> {
    let truth_events = parse_ground_truth(&read_input(truth, "ground truth")?).map_err(|e| config_err(format!("{}: {e}", truth.display())))?;
    let predicted = match predictions {
        PredictionSource::Metadata(path) => {
            let t = parse_timeline(&read_input(path, "metadata file")?).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            predictions_from_timeline(&t)
        }
        PredictionSource::CutList(path) => {
            let c = CutList::from_json(&read_input(path, "cut list")?).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            predictions_from_cutlist(&c)
        }
    };
    let report = match_events(&predicted, &truth_events, cfg.tolerance_s);
    let table = report_table(&report);
    let json = report.to_json();
    if let (Some(dir), false) = (out_dir, mode.dry_run) {
        write_output(&dir.join(EVAL_TABLE_FILE), &table)?;
        write_output(&dir.join(EVAL_JSON_FILE), &json)?;
    }
    Ok(EvalOutcome { report, table, json })
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    /// Directory name under the work dir; defaults to `run-<unix seconds>`.
    pub run_id: Option<String>,
    /// Use already-extracted frames instead of sampling the video.
    pub frames_dir: Option<PathBuf>,
    pub duration_s: Option<u64>,
}

/// Fixed artifact locations inside one run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLayout {
    pub run_dir: PathBuf,
    pub frames_dir: PathBuf,
    pub metadata: PathBuf,
    pub cutlist: PathBuf,
    pub out_dir: PathBuf,
    pub config: PathBuf,
}

impl RunLayout {
    pub fn new(cfg: &PipelineConfig, run_id: &str, frames_dir: Option<&Path>) -> Self {
        let run_dir = cfg.paths.workdir.join(run_id);
        RunLayout {
            frames_dir: frames_dir.map_or_else(|| run_dir.join("frames"), Path::to_path_buf),
            metadata: run_dir.join("metadata.tsv"),
            cutlist: run_dir.join("cutlist.json"),
            out_dir: cfg.paths.out_dir.clone().unwrap_or_else(|| run_dir.join("out")),
            config: run_dir.join("config.txt"),
            run_dir,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub layout: RunLayout,
    pub sample: Option<SampleOutcome>,
    /// Absent when a dry run had no frames to look at.
    pub detect: Option<DetectOutcome>,
    pub plan: Option<PlanOutcome>,
    pub render: Option<RenderOutcome>,
}

fn default_run_id() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("run-{secs}")
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\'])
}

/// sample → detect → plan → render in a fresh run directory.
///
/// Everything the run needs is checked before anything is written. An existing
/// run directory is reused only with `resume`.
pub fn cmd_run(cfg: &PipelineConfig, args: &RunArgs, mode: Mode) -> Result<RunOutcome> {
    let video = require_video(cfg)?;
    let profile = cfg.profile()?;
    if profile.is_fixture() && cfg.paths.fixture_table.as_ref().is_none_or(|p| !p.is_file()) {
        return Err(config_err("the fixture backend needs an existing table (--fixture-table or paths.fixture_table)"));
    }
    if let Some(dir) = &args.frames_dir {
        require_dir(dir, "frames directory")?;
    }
    let run_id = args.run_id.clone().unwrap_or_else(default_run_id);
    if !valid_run_id(&run_id) {
        return Err(config_err(format!("run id {run_id:?} must be a plain directory name")));
    }
    let layout = RunLayout::new(cfg, &run_id, args.frames_dir.as_deref());
    if layout.run_dir.exists() && !mode.resume && !mode.dry_run {
        return Err(config_err(format!("{} already exists; pick another run id or pass --resume", layout.run_dir.display())));
    }
    let duration_s = resolve_duration(cfg, args.duration_s)?;
    log::info!("run {} on {} ({duration_s} s)", layout.run_dir.display(), video.display());

    if !mode.dry_run {
        write_output(&layout.config, &cfg.to_file_text())?;
    }
    let sample = match args.frames_dir {
        Some(_) => None,
        None => Some(cmd_sample(cfg, &layout.frames_dir, Some(duration_s), mode)?),
    };
    if mode.dry_run && sample.is_some() {
        return Ok(RunOutcome { layout, sample, detect: None, plan: None, render: None });
    }
    let detect = cmd_detect(cfg, &layout.frames_dir, &layout.metadata, mode)?;
    let plan = plan_from_timeline(cfg, &detect.timeline, duration_s, &layout.cutlist, mode)?;
    let render = if plan.cutlist.clips.is_empty() {
        log::warn!("no events above the confidence filter; nothing to render");
        None
    } else {
        Some(render_cutlist(cfg, &plan.cutlist, &layout.out_dir, mode)?)
    };
    Ok(RunOutcome { layout, sample, detect: Some(detect), plan: Some(plan), render })
}
