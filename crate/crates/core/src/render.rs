//! Plans and runs the external media-tool invocations: frame extraction for
//! sampling, one overlay-burning cut per clip, and a final concatenation.
//!
//! Commands are plain argv vectors for an FFmpeg-compatible binary so a plan
//! can be inspected, serialized, or diffed without running anything.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::SamplePlan;
use crate::planner::{ClipWindow, CutList};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("nothing to render: the cut list has no clips")]
    EmptyPlan,
    #[error("media tool {tool:?} is not runnable: {reason}")]
    ToolMissing { tool: String, reason: String },
    #[error("output {0} is produced by more than one command")]
    OutputCollision(PathBuf),
    #[error("invalid path {0:?}")]
    InvalidPath(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    ExtractFrames,
    CutClip,
    Concat,
}

impl Purpose {
    /// Specs in a later phase wait for every spec of earlier phases.
    fn phase(self) -> u8 {
        match self {
            Purpose::ExtractFrames | Purpose::CutClip => 0,
            Purpose::Concat => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayDirective {
    pub text: String,
    pub position: String,
    pub margin_px: u32,
}

/// A small text file a command needs, written just before it runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxFile {
    pub path: PathBuf,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandSpec {
    pub purpose: Purpose,
    pub argv: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<OverlayDirective>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aux_files: Vec<AuxFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub tool: String,
    pub margin_px: u32,
    pub font_size: u32,
    pub font_file: Option<String>,
    pub video_codec: String,
    pub audio_codec: String,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            tool: "ffmpeg".into(),
            margin_px: 10,
            font_size: 28,
            font_file: None,
            video_codec: "libx264".into(),
            audio_codec: "aac".into(),
        }
    }
}

pub fn overlay_text(clip: &ClipWindow) -> String {
    format!("{}: {:.2}%", clip.overlay.label, clip.overlay.confidence_pct)
}

pub fn clip_file_name(index: usize, clip: &ClipWindow) -> String {
    format!("clip_{index:03}_{}_{}.mp4", clip.start_s, clip.end_s)
}

pub fn highlights_file_name(video_path: &Path) -> Result<String, RenderError> {
    let stem = video_stem(video_path)?;
    Ok(format!("{stem}_highlights.mp4"))
}

pub fn video_stem(video_path: &Path) -> Result<String, RenderError> {
    video_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| RenderError::InvalidPath(video_path.to_path_buf()))
}

/// Escape `text` for a drawtext option value nested in a filtergraph: first
/// for the option parser, then for the graph parser.
fn escape_filter_text(text: &str) -> String {
    let escape = |s: &str, special: &[char]| {
        let mut out = String::with_capacity(s.len());
        for c in s.chars() {
            if special.contains(&c) {
                out.push('\\');
            }
            out.push(c);
        }
        out
    };
    let option_level = escape(text, &['\\', '\'', ':']);
    escape(&option_level, &['\\', '\'', ',', ';', '[', ']'])
}

fn drawtext_filter(text: &str, opts: &RenderOptions) -> String {
    let mut filter = format!(
        "drawtext=expansion=none:text={}:x={m}:y={m}:fontsize={}:fontcolor=white:box=1:boxcolor=black@0.5:boxborderw=6",
        escape_filter_text(text),
        opts.font_size,
        m = opts.margin_px,
    );
    if let Some(font) = &opts.font_file {
        filter.push_str(&format!(":fontfile={}", escape_filter_text(font)));
    }
    filter
}

fn base_argv(opts: &RenderOptions) -> Vec<String> {
    [opts.tool.as_str(), "-hide_banner", "-loglevel", "error", "-y"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// One `cut_clip` per clip in order, then a single `concat` of their outputs.
pub fn plan_render(cutlist: &CutList, video_path: &Path, out_dir: &Path, opts: &RenderOptions) -> Result<Vec<CommandSpec>, RenderError> {
    if cutlist.clips.is_empty() {
        return Err(RenderError::EmptyPlan);
    }
    let highlights = out_dir.join(highlights_file_name(video_path)?);
    let stem = video_stem(video_path)?;
    let mut specs = Vec::with_capacity(cutlist.clips.len() + 1);
    let mut clip_paths = Vec::with_capacity(cutlist.clips.len());
    for (i, clip) in cutlist.clips.iter().enumerate() {
        let name = clip_file_name(i, clip);
        let out = out_dir.join(&name);
        let text = overlay_text(clip);
        let mut argv = base_argv(opts);
        argv.extend([
            "-ss".to_string(),
            clip.start_s.to_string(),
            "-i".to_string(),
            path_str(video_path),
            "-t".to_string(),
            clip.duration_s().to_string(),
            "-vf".to_string(),
            drawtext_filter(&text, opts),
            "-c:v".to_string(),
            opts.video_codec.clone(),
            "-c:a".to_string(),
            opts.audio_codec.clone(),
            path_str(&out),
        ]);
        specs.push(CommandSpec {
            purpose: Purpose::CutClip,
            argv,
            inputs: vec![video_path.to_path_buf()],
            outputs: vec![out.clone()],
            overlay: Some(OverlayDirective { text, position: "top-left".into(), margin_px: opts.margin_px }),
            aux_files: vec![],
        });
        clip_paths.push((name, out));
    }

    // concat demuxer resolves entries relative to the list file
    let list_path = out_dir.join(format!("{stem}_concat.txt"));
    let contents: String = clip_paths.iter().map(|(name, _)| format!("file '{name}'\n")).collect();
    let mut argv = base_argv(opts);
    argv.extend([
        "-f".to_string(),
        "concat".to_string(),
        "-safe".to_string(),
        "0".to_string(),
        "-i".to_string(),
        path_str(&list_path),
        "-c".to_string(),
        "copy".to_string(),
        path_str(&highlights),
    ]);
    specs.push(CommandSpec {
        purpose: Purpose::Concat,
        argv,
        inputs: clip_paths.into_iter().map(|(_, p)| p).collect(),
        outputs: vec![highlights],
        overlay: None,
        aux_files: vec![AuxFile { path: list_path, contents }],
    });
    validate_plan(&specs)?;
    Ok(specs)
}

/// One single-frame grab per planned timestamp, named `<stem>_<t>.jpg`.
pub fn plan_frame_extraction(video_path: &Path, plan: &SamplePlan, out_dir: &Path, opts: &RenderOptions) -> Vec<CommandSpec> {
    plan.timestamps
        .iter()
        .zip(plan.frame_names())
        .map(|(t, name)| {
            let out = out_dir.join(name);
            let mut argv = base_argv(opts);
            argv.extend([
                "-ss".to_string(),
                t.to_string(),
                "-i".to_string(),
                path_str(video_path),
                "-frames:v".to_string(),
                "1".to_string(),
                "-q:v".to_string(),
                "2".to_string(),
                path_str(&out),
            ]);
            CommandSpec {
                purpose: Purpose::ExtractFrames,
                argv,
                inputs: vec![video_path.to_path_buf()],
                outputs: vec![out],
                overlay: None,
                aux_files: vec![],
            }
        })
        .collect()
}

pub fn validate_plan(specs: &[CommandSpec]) -> Result<(), RenderError> {
    let mut seen = HashSet::new();
    for spec in specs {
        for out in spec.outputs.iter().chain(spec.aux_files.iter().map(|a| &a.path)) {
            if !seen.insert(out) {
                return Err(RenderError::OutputCollision(out.clone()));
            }
        }
    }
    Ok(())
}

pub fn plan_to_json(specs: &[CommandSpec]) -> String {
    serde_json::to_string_pretty(specs).expect("plan serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SpecStatus {
    Succeeded,
    Failed { exit_code: Option<i32>, stderr: String },
    /// `--resume` found every output already present.
    Skipped,
    /// Not attempted because an earlier spec failed.
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecOutcome {
    pub index: usize,
    pub purpose: Purpose,
    #[serde(flatten)]
    pub status: SpecStatus,
    pub duration_ms: u128,
    pub produced: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub outcomes: Vec<SpecOutcome>,
}

impl RunReport {
    fn count(&self, pred: impl Fn(&SpecStatus) -> bool) -> usize {
        self.outcomes.iter().filter(|o| pred(&o.status)).count()
    }

    pub fn succeeded(&self) -> usize {
        self.count(|s| matches!(s, SpecStatus::Succeeded))
    }

    pub fn failed(&self) -> usize {
        self.count(|s| matches!(s, SpecStatus::Failed { .. }))
    }

    pub fn skipped(&self) -> usize {
        self.count(|s| matches!(s, SpecStatus::Skipped))
    }

    pub fn not_run(&self) -> usize {
        self.count(|s| matches!(s, SpecStatus::NotRun))
    }

    pub fn is_success(&self) -> bool {
        self.failed() == 0 && self.not_run() == 0
    }

    pub fn first_failure(&self) -> Option<&SpecOutcome> {
        self.outcomes.iter().find(|o| matches!(o.status, SpecStatus::Failed { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    pub workers: usize,
    pub resume: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { workers: 1, resume: false }
    }
}

/// Check that every distinct program in the plan can be started.
pub fn probe_tools(specs: &[CommandSpec]) -> Result<(), RenderError> {
    let tools: HashSet<&str> = specs.iter().filter_map(|s| s.argv.first().map(String::as_str)).collect();
    let mut tools: Vec<&str> = tools.into_iter().collect();
    tools.sort_unstable();
    for tool in tools {
        let status = Command::new(tool)
            .arg("-version")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map_err(|e| RenderError::ToolMissing { tool: tool.to_string(), reason: e.to_string() })?;
        if !status.success() {
            return Err(RenderError::ToolMissing {
                tool: tool.to_string(),
                reason: format!("`{tool} -version` exited with {status}"),
            });
        }
    }
    Ok(())
}

fn outputs_present(spec: &CommandSpec) -> bool {
    !spec.outputs.is_empty() && spec.outputs.iter().all(|p| fs::metadata(p).map(|m| m.len() > 0).unwrap_or(false))
}

fn run_spec(index: usize, spec: &CommandSpec, resume: bool) -> Result<SpecOutcome, RenderError> {
    let started = Instant::now();
    let outcome = |status: SpecStatus, produced: Vec<PathBuf>| SpecOutcome {
        index,
        purpose: spec.purpose,
        status,
        duration_ms: started.elapsed().as_millis(),
        produced,
    };
    if resume && outputs_present(spec) {
        return Ok(outcome(SpecStatus::Skipped, spec.outputs.clone()));
    }
    for path in spec.outputs.iter().chain(spec.aux_files.iter().map(|a| &a.path)) {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|source| RenderError::Io { path: parent.to_path_buf(), source })?;
        }
    }
    for aux in &spec.aux_files {
        fs::write(&aux.path, &aux.contents).map_err(|source| RenderError::Io { path: aux.path.clone(), source })?;
    }
    let output = Command::new(&spec.argv[0])
        .args(&spec.argv[1..])
        .stdin(Stdio::null())
        .output()
        .map_err(|source| RenderError::Io { path: PathBuf::from(&spec.argv[0]), source })?;
    if output.status.success() {
        let produced = spec.outputs.iter().filter(|p| p.exists()).cloned().collect();
        Ok(outcome(SpecStatus::Succeeded, produced))
    } else {
        Ok(outcome(
            SpecStatus::Failed {
                exit_code: output.status.code(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            },
            vec![],
        ))
    }
}

/// Run a plan: all extraction/cut specs first (up to `workers` at a time),
/// then the concat. The first failure stops new work from starting; specs that
/// never ran are reported as [`SpecStatus::NotRun`].
pub fn execute_plan(specs: &[CommandSpec], opts: &ExecOptions) -> Result<RunReport, RenderError> {
    if specs.iter().any(|s| s.argv.is_empty()) {
        return Err(RenderError::ToolMissing { tool: String::new(), reason: "command has an empty argv".into() });
    }
    validate_plan(specs)?;
    if specs.is_empty() {
        return Ok(RunReport::default());
    }
    probe_tools(specs)?;

    let mut phases: Vec<u8> = specs.iter().map(|s| s.purpose.phase()).collect();
    phases.sort_unstable();
    phases.dedup();

    let mut slots: Vec<Option<SpecOutcome>> = vec![None; specs.len()];
    let aborted = AtomicBool::new(false);
    for phase in phases {
        if aborted.load(Ordering::SeqCst) {
            break;
        }
        let batch: Vec<usize> = (0..specs.len()).filter(|&i| specs[i].purpose.phase() == phase).collect();
        let next = AtomicUsize::new(0);
        let done: Mutex<Vec<SpecOutcome>> = Mutex::new(Vec::new());
        let io_error: Mutex<Option<RenderError>> = Mutex::new(None);
        let workers = opts.workers.clamp(1, batch.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if aborted.load(Ordering::SeqCst) {
                        break;
                    }
                    let k = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&i) = batch.get(k) else { break };
                    match run_spec(i, &specs[i], opts.resume) {
                        Ok(outcome) => {
                            if matches!(outcome.status, SpecStatus::Failed { .. }) {
                                aborted.store(true, Ordering::SeqCst);
                            }
                            done.lock().expect("outcomes lock").push(outcome);
                        }
                        Err(e) => {
                            aborted.store(true, Ordering::SeqCst);
                            io_error.lock().expect("error lock").get_or_insert(e);
                        }
                    }
                });
            }
        });
        if let Some(e) = io_error.into_inner().expect("error lock") {
            return Err(e);
        }
        for outcome in done.into_inner().expect("outcomes lock") {
            let i = outcome.index;
            slots[i] = Some(outcome);
        }
    }

    let outcomes = slots
        .into_iter()
        .enumerate()
        .map(|(i, slot)| {
            slot.unwrap_or(SpecOutcome {
                index: i,
                purpose: specs[i].purpose,
                status: SpecStatus::NotRun,
                duration_ms: 0,
                produced: vec![],
            })
        })
        .collect();
    Ok(RunReport { outcomes })
}
