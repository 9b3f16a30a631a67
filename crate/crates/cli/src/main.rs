use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use highlight_forge::config::CONFIG_ENV;
use highlight_forge::detector::builtin_profiles;
use highlight_forge::pipeline::{self, Mode, PredictionSource, RunArgs};
use highlight_forge::{PipelineConfig, PipelineError};

#[derive(Parser, Debug)]
#[command(name = "highlight-forge", version, about = "Cut a highlights reel out of a full soccer match")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// Flat key=value config file
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Detector profile (see `profiles`)
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Box confidence filter as a fraction; defaults to the profile's
    #[arg(long, global = true)]
    confidence: Option<f64>,
    /// Seconds between sampled frames
    #[arg(long, global = true)]
    interval: Option<u64>,
    /// Seconds of padding before each event
    #[arg(long, global = true)]
    lead: Option<u64>,
    /// Seconds of padding after each event
    #[arg(long, global = true)]
    tail: Option<u64>,
    /// Merge padded windows this many seconds apart
    #[arg(long, global = true)]
    merge_gap: Option<u64>,
    /// Evaluation match tolerance in seconds
    #[arg(long, global = true)]
    tolerance: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print what would be produced; write nothing
    #[arg(long, global = true)]
    dry_run: bool,
    /// Skip commands whose outputs already exist
    #[arg(long, global = true)]
    resume: bool,
    #[arg(long, global = true)]
    video: Option<PathBuf>,
    #[arg(long, global = true)]
    fixture_table: Option<PathBuf>,
    /// tcp://host:port, unix:/path, or stdio:<command>
    #[arg(long, global = true)]
    sidecar: Option<String>,
    /// Parent directory for run directories
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Media tool used for extraction and rendering
    #[arg(long, global = true)]
    tool: Option<String>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl GlobalArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("backend", self.backend.clone());
        push("confidence", self.confidence.map(|v| v.to_string()));
        push("sample.interval_s", self.interval.map(|v| v.to_string()));
        push("planner.lead_s", self.lead.map(|v| v.to_string()));
        push("planner.tail_s", self.tail.map(|v| v.to_string()));
        push("planner.merge_gap_s", self.merge_gap.map(|v| v.to_string()));
        push("eval.tolerance_s", self.tolerance.map(|v| v.to_string()));
        push("workers", self.workers.map(|v| v.to_string()));
        push("paths.video", path(&self.video));
        push("paths.fixture_table", path(&self.fixture_table));
        push("paths.sidecar", self.sidecar.clone());
        push("paths.workdir", path(&self.workdir));
        push("render.tool", self.tool.clone());
        out
    }

    fn mode(&self) -> Mode {
        Mode { dry_run: self.dry_run, resume: self.resume }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Extract frames from the video at the sampling interval
    Sample {
        #[arg(long, default_value = "frames")]
        frames_dir: PathBuf,
        /// Video length in seconds; probed with ffprobe when omitted
        #[arg(long)]
        duration: Option<u64>,
    },
    /// Detect events in extracted frames and write the metadata file
    Detect {
        #[arg(long, default_value = "frames")]
        frames_dir: PathBuf,
        #[arg(long, default_value = "metadata.tsv")]
        out: PathBuf,
    },
    /// Merge metadata events into a cut list
    Plan {
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long, default_value = "cutlist.json")]
        out: PathBuf,
    },
    /// Cut, label and join the clips of a cut list
    Render {
        #[arg(long)]
        cutlist: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// sample, detect, plan and render in a fresh run directory
    Run {
        #[arg(long)]
        run_id: Option<String>,
        /// Use these frames instead of sampling the video
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        #[arg(long)]
        duration: Option<u64>,
    },
    /// Score predictions against a ground-truth CSV
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, conflicts_with = "cutlist", required_unless_present = "cutlist")]
        metadata: Option<PathBuf>,
        #[arg(long)]
        cutlist: Option<PathBuf>,
        /// Directory for eval_report.txt and eval_report.json
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the built-in detector profiles
    Profiles,
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let overrides = cli.global.overrides();
    let overrides: Vec<(&str, String)> = overrides.iter().map(|(k, v)| (*k, v.clone())).collect();
    let cfg = PipelineConfig::load(cli.global.config.as_deref(), &overrides)?;
    let mode = cli.global.mode();
    log::debug!("effective config:\n{}", cfg.to_file_text());

    match &cli.command {
        Cmd::Sample { frames_dir, duration } => {
            let out = pipeline::cmd_sample(&cfg, frames_dir, *duration, mode)?;
            if mode.dry_run {
                print!("{}", highlight_forge::render::plan_to_json(&out.specs));
            } else {
                println!("extracted {} frames into {}", out.specs.len(), frames_dir.display());
            }
        }
        Cmd::Detect { frames_dir, out } => {
            let res = pipeline::cmd_detect(&cfg, frames_dir, out, mode)?;
            if mode.dry_run {
                print!("{}", res.metadata);
            } else {
                println!("{} frames, {} event records -> {}", res.frames.len(), res.timeline.records.len(), out.display());
            }
        }
        Cmd::Plan { metadata, duration, out } => {
            let res = pipeline::cmd_plan(&cfg, metadata, *duration, out, mode)?;
            if mode.dry_run {
                print!("{}", res.json);
            } else {
                let total = highlight_forge::planner::total_highlight_duration(&res.cutlist);
                println!("{} clips, {total} s of highlights -> {}", res.cutlist.clips.len(), out.display());
            }
        }
        Cmd::Render { cutlist, out_dir } => {
            let out_dir = out_dir.clone().or_else(|| cfg.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let res = pipeline::cmd_render(&cfg, cutlist, &out_dir, mode)?;
            print_render(&res, mode);
        }
        Cmd::Run { run_id, frames_dir, duration } => {
            let args = RunArgs { run_id: run_id.clone(), frames_dir: frames_dir.clone(), duration_s: *duration };
            let res = pipeline::cmd_run(&cfg, &args, mode)?;
            match (&res.render, &res.sample) {
                (Some(r), _) => print_render(r, mode),
                (None, Some(s)) if mode.dry_run => print!("{}", highlight_forge::render::plan_to_json(&s.specs)),
                _ => {}
            }
            if !mode.dry_run {
                println!("run directory: {}", res.layout.run_dir.display());
            }
        }
        Cmd::Evaluate { truth, metadata, cutlist, out_dir } => {
            let source = match (metadata, cutlist) {
                (Some(m), _) => PredictionSource::Metadata(m.clone()),
                (None, Some(c)) => PredictionSource::CutList(c.clone()),
                (None, None) => unreachable!("clap requires one prediction source"),
            };
            let res = pipeline::cmd_evaluate(&cfg, truth, &source, out_dir.as_deref(), mode)?;
            print!("{}", res.table);
        }
        Cmd::Profiles => {
            for p in builtin_profiles() {
                println!("{:<24} confidence={} overlap={} input={:?}", p.name, p.box_confidence_threshold, p.overlap_threshold, p.input);
            }
        }
    }
    Ok(())
}

fn print_render(res: &pipeline::RenderOutcome, mode: Mode) {
    if mode.dry_run {
        print!("{}", res.plan_json);
    } else {
        println!("{} commands, highlights -> {}", res.specs.len(), res.highlights.display());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
