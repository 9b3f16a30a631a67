//! Acceptance criteria for the pipeline, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the report is always printed; the
//! process exits non-zero when any criterion fails or exceeds its time limit.

use std::collections::BTreeSet;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use highlight_forge::config::{Origin, PipelineConfig};
use highlight_forge::detector::{detect_frames, find_profile, FixtureBackend, FixtureTable, PoolOptions};
use highlight_forge::eval::{match_events, GroundTruthEvent, PredictedEvent};
use highlight_forge::frames::{frame_filename, sort_frames};
use highlight_forge::geometry::{horizontal_flip, iou, nms, resize_min_dim, BoundingBox, Detection, ImageDims};
use highlight_forge::pipeline::{cmd_run, Mode, RunArgs};
use highlight_forge::planner::{merge_windows, total_highlight_duration, PlannerConfig};
use highlight_forge::timeline::{build_timeline, format_timeline, parse_timeline, EventRecord, EventTimeline, ScoredEvent};
use highlight_forge::EventClass;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

// ---------------------------------------------------------------- metadata

fn golden_metadata() -> Outcome {
    let golden = fs::read_to_string(data("sample_metadata.tsv")).map_err(|e| e.to_string())?;
    let table = FixtureTable::parse(&fs::read_to_string(data("sample_fixture.tsv")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let table = Arc::new(table);
    let names: Vec<String> = (0..=460).step_by(2).map(|t| frame_filename("match", t).unwrap()).collect();
    let frames = sort_frames(&names).map_err(|e| e.to_string())?;
    let profile = find_profile("fixture").unwrap();
    let opts = PoolOptions { workers: 4, overlap_threshold: profile.overlap_threshold, retries: 0 };
    let run = detect_frames(|| Ok(FixtureBackend::new(table.clone())), &frames, &opts).map_err(|e| e.to_string())?;
    let timeline = build_timeline(&run.frames, 0.9).map_err(|e| e.to_string())?;
    let produced = format_timeline(&timeline);
    ensure(produced == golden, || first_difference(&produced, &golden))?;
    let reparsed = parse_timeline(&golden).map_err(|e| e.to_string())?;
    ensure(format_timeline(&reparsed) == golden, || "parse -> format is not lossless".into())?;
    ensure(reparsed == timeline, || "parsed golden differs from built timeline".into())?;
    Ok(format!("{} lines byte-identical, round-trip lossless", golden.lines().count()))
}

fn first_difference(a: &str, b: &str) -> String {
    for (i, (x, y)) in a.lines().zip(b.lines()).enumerate() {
        if x != y {
            return format!("line {}: got {x:?}, want {y:?}", i + 1);
        }
    }
    format!("line counts differ: got {}, want {}", a.lines().count(), b.lines().count())
}

// ---------------------------------------------------------------- NMS oracle

#[derive(Clone, Copy)]
struct RawBox {
    x1: i64,
    y1: i64,
    x2: i64,
    y2: i64,
    conf: f64,
    label: EventClass,
}

fn oracle_iou(a: &RawBox, b: &RawBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0);
    let inter = ix * iy;
    if inter == 0 {
        return 0.0;
    }
    let area = |r: &RawBox| (r.x2 - r.x1) * (r.y2 - r.y1);
    inter as f64 / (area(a) + area(b) - inter) as f64
}

/// Kept set as the fixed point of "no kept, more confident box overlaps me",
/// reached by plain iteration from everything kept.
fn oracle_nms(boxes: &[RawBox], thr: f64) -> Vec<usize> {
    let n = boxes.len();
    let mut keep = vec![true; n];
    for _ in 0..=n {
        let next: Vec<bool> = (0..n)
            .map(|i| !(0..n).any(|j| boxes[j].conf > boxes[i].conf && keep[j] && oracle_iou(&boxes[i], &boxes[j]) >= thr))
            .collect();
        if next == keep {
            break;
        }
        keep = next;
    }
    let mut kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    kept.sort_by(|&a, &b| boxes[b].conf.total_cmp(&boxes[a].conf));
    kept
}

fn nms_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut suppressed_total = 0;
    for trial in 0..1000 {
        let n = rng.random_range(0..=20);
        let confs = rand::seq::index::sample(&mut rng, 10_000, n);
        let boxes: Vec<RawBox> = (0..n)
            .map(|i| {
                let (x1, y1) = (rng.random_range(0..60), rng.random_range(0..60));
                RawBox {
                    x1,
                    y1,
                    x2: x1 + rng.random_range(1..40),
                    y2: y1 + rng.random_range(1..40),
                    conf: (confs.index(i) + 1) as f64 / 10_000.0,
                    label: EventClass::ALL[rng.random_range(0..4)],
                }
            })
            .collect();
        let thr = [0.3, 0.5, 0.7, rng.random_range(0.05..0.95)][trial % 4];
        let dets: Vec<Detection> = boxes
            .iter()
            .map(|r| {
                let b = BoundingBox::new(r.x1 as f64, r.y1 as f64, r.x2 as f64, r.y2 as f64).unwrap();
                Detection::new(b, r.label, r.conf).unwrap()
            })
            .collect();
        let got = nms(&dets, thr);
        let want: Vec<Detection> = oracle_nms(&boxes, thr).into_iter().map(|i| dets[i]).collect();
        ensure(got == want, || format!("trial {trial}: {} kept, oracle kept {}", got.len(), want.len()))?;
        suppressed_total += n - got.len();
    }
    Ok(format!("1000 sets agree ({suppressed_total} boxes suppressed)"))
}

// ---------------------------------------------------------------- interval merge oracle

fn oracle_bounds(t: u64, lead: u64, tail: u64, dur: u64) -> (u64, u64) {
    let mut s = t.saturating_sub(lead);
    let mut e = (t + tail).min(dur);
    if s == e {
        if e < dur {
            e += 1;
        } else {
            s -= 1;
        }
    }
    (s, e)
}

/// Union by painting: each window becomes the half-second cells
/// `2s ..= 2(e + gap)`, and every connected painted run is one clip.
fn oracle_clips(times: &[u64], cfg: &PlannerConfig, dur: u64) -> Vec<(u64, u64)> {
    let len = (2 * (dur + cfg.merge_gap_s) + 2) as usize;
    let mut paint = vec![false; len];
    for &t in times {
        let (s, e) = oracle_bounds(t, cfg.lead_s, cfg.tail_s, dur);
        for cell in paint.iter_mut().take((2 * (e + cfg.merge_gap_s) + 1) as usize).skip((2 * s) as usize) {
            *cell = true;
        }
    }
    let mut clips = Vec::new();
    let mut i = 0;
    while i < len {
        if paint[i] {
            let start = i;
            while i + 1 < len && paint[i + 1] {
                i += 1;
            }
            clips.push(((start / 2) as u64, (i / 2) as u64 - cfg.merge_gap_s));
        }
        i += 1;
    }
    clips
}

fn merge_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let confs = [90.5, 91.25, 95.0, 99.125];
    let mut clip_total = 0;
    for trial in 0..500 {
        let dur: u64 = rng.random_range(1..=600);
        let n = rng.random_range(0..=100usize).min(dur as usize + 1);
        let mut all: Vec<u64> = (0..=dur).collect();
        all.shuffle(&mut rng);
        let mut times: Vec<u64> = all[..n].to_vec();
        times.sort_unstable();
        let cfg = PlannerConfig {
            lead_s: rng.random_range(0..=10),
            tail_s: rng.random_range(0..=10),
            merge_gap_s: rng.random_range(0..=5),
        };
        let records: Vec<EventRecord> = times
            .iter()
            .map(|&t| EventRecord {
                timestamp_s: t,
                events: (0..rng.random_range(1..=3))
                    .map(|_| ScoredEvent { label: EventClass::ALL[rng.random_range(0..4)], confidence_pct: confs[rng.random_range(0..4)] })
                    .collect(),
            })
            .collect();
        let timeline = EventTimeline { records };
        let cut = merge_windows(&timeline, &cfg, dur).map_err(|e| format!("trial {trial}: {e}"))?;
        let got: Vec<(u64, u64)> = cut.clips.iter().map(|c| (c.start_s, c.end_s)).collect();
        let want = oracle_clips(&times, &cfg, dur);
        ensure(got == want, || format!("trial {trial} ({cfg:?}, dur {dur}): got {got:?}, oracle {want:?}"))?;

        for r in &timeline.records {
            let owners = cut.clips.iter().filter(|c| c.contains(r.timestamp_s)).count();
            ensure(owners == 1, || format!("trial {trial}: event at {} lies in {owners} clips", r.timestamp_s))?;
        }
        for clip in &cut.clips {
            let inside: Vec<(u64, &ScoredEvent)> = timeline
                .records
                .iter()
                .filter(|r| clip.contains(r.timestamp_s))
                .flat_map(|r| r.events.iter().map(move |e| (r.timestamp_s, e)))
                .collect();
            let best = inside.iter().map(|(_, e)| e.confidence_pct).fold(f64::MIN, f64::max);
            let (_, first_best) = inside.iter().find(|(_, e)| e.confidence_pct == best).unwrap();
            ensure(clip.overlay.label == first_best.label && clip.overlay.confidence_pct == best, || {
                format!("trial {trial}: overlay {:?} is not the earliest strongest event", clip.overlay)
            })?;
        }
        cut.validate().map_err(|e| format!("trial {trial}: {e}"))?;
        clip_total += got.len();
    }
    Ok(format!("500 timelines agree ({clip_total} clips), every event in exactly one clip"))
}

// ---------------------------------------------------------------- geometry properties

/// Coordinates on a 1/8-pixel grid keep the float arithmetic exact.
fn grid_box(max: u32) -> impl Strategy<Value = BoundingBox> {
    (0..max * 8, 0..max * 8, 1..max * 8, 1..max * 8).prop_map(move |(x, y, w, h)| {
        let f = |v: u32| f64::from(v) / 8.0;
        BoundingBox::new(f(x), f(y), f(x + w), f(y + h)).unwrap()
    })
}

fn run_property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn geometry_properties() -> Outcome {
    run_property("iou symmetric and bounded", (grid_box(200), grid_box(200)), |(a, b)| {
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        Ok(())
    })?;
    run_property("iou identity", grid_box(200), |a| {
        prop_assert_eq!(iou(&a, &a), 1.0);
        Ok(())
    })?;
    let boxed_image = (1u32..2000, 1u32..2000).prop_flat_map(|(w, h)| {
        let dims = ImageDims::new(w, h).unwrap();
        let b = (0..w * 8, 0..h * 8, 0..w * 8, 0..h * 8).prop_filter_map("degenerate", |(a, b, c, d)| {
            let f = |v: u32| f64::from(v) / 8.0;
            BoundingBox::new(f(a.min(c)), f(b.min(d)), f(a.max(c)), f(b.max(d))).ok()
        });
        (Just(dims), b)
    });
    run_property("flip involution and area", boxed_image, |(dims, b)| {
        let once = horizontal_flip(&b, dims).unwrap();
        prop_assert!(once.fits_within(dims));
        prop_assert_eq!(once.area(), b.area());
        prop_assert_eq!(horizontal_flip(&once, dims).unwrap(), b);
        Ok(())
    })?;
    run_property("resize min-dim exact", (1u32..5000, 1u32..5000, 1u32..1000), |(w, h, target)| {
        let dims = ImageDims::new(w, h).unwrap();
        let plan = resize_min_dim(dims, target);
        prop_assert_eq!(plan.new_dims.min_side(), target);
        let long_in = w.max(h);
        let long_out = plan.new_dims.width.max(plan.new_dims.height);
        let exact = f64::from(long_in) * f64::from(target) / f64::from(w.min(h));
        prop_assert!((f64::from(long_out) - exact).abs() <= 0.5 + 1e-9, "long side {long_out} vs {exact}");
        let (nw, nh) = (plan.new_dims.width, plan.new_dims.height);
        prop_assert!((w < h && nw <= nh) || (w > h && nw >= nh) || (w == h && nw == nh));
        Ok(())
    })?;
    Ok("iou symmetry/bounds/identity, flip involution/area, resize exactness: 1000 cases each".into())
}

// ---------------------------------------------------------------- end to end

fn snapshot(dir: &Path) -> BTreeSet<PathBuf> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p.clone());
            }
            out.insert(p);
        }
    }
    out
}

fn end_to_end_dry_run() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let frames = root.join("frames");
    fs::create_dir(&frames).unwrap();
    for t in (0..120).step_by(2) {
        fs::write(frames.join(format!("match_{t}.jpg")), b"").unwrap();
    }
    fs::write(
        root.join("table.tsv"),
        [
            "match_10.jpg\tgoal\t0.95\t10\t10\t60\t60",
            "match_12.jpg\tgoal\t0.97\t12\t10\t62\t60",
            "match_50.jpg\tCorner kick\t0.93\t0\t0\t40\t40",
            "match_90.jpg\tfoul\t0.91\t5\t5\t30\t30",
            "match_100.jpg\tpenalty kick\t0.85\t5\t5\t30\t30",
            "",
        ]
        .join("\n"),
    )
    .unwrap();
    fs::write(root.join("match.mp4"), b"placeholder").unwrap();
    let mut cfg = PipelineConfig::default();
    for (k, v) in [("paths.fixture_table", root.join("table.tsv")), ("paths.video", root.join("match.mp4")), ("paths.workdir", root.join("runs"))] {
        cfg.set(k, v.to_str().unwrap(), Origin::Flag).map_err(|e| e.to_string())?;
    }
    let before = snapshot(root);
    let args = RunArgs { run_id: Some("accept".into()), frames_dir: Some(frames), duration_s: Some(120) };
    let out = cmd_run(&cfg, &args, Mode { dry_run: true, resume: false }).map_err(|e| e.to_string())?;

    let cut = &out.plan.as_ref().ok_or("no cut list")?.cutlist;
    let total = total_highlight_duration(cut);
    ensure(!cut.clips.is_empty(), || "no clips planned".into())?;
    ensure(total < 120, || format!("highlights last {total} s, video 120 s"))?;
    let specs = &out.render.as_ref().ok_or("no render plan")?.specs;
    ensure(specs.len() == cut.clips.len() + 1, || format!("{} commands for {} clips", specs.len(), cut.clips.len()))?;
    ensure(snapshot(root) == before, || "dry run wrote files".into())?;
    Ok(format!("60 frames, {} clips, {total} s of 120 s, {} commands, nothing written", cut.clips.len(), specs.len()))
}

// ---------------------------------------------------------------- evaluation

fn at(ts: &[u64], label: EventClass) -> impl Iterator<Item = (u64, EventClass)> + '_ {
    ts.iter().map(move |&t| (t, label))
}

/// Ground truth and one prediction column of the test-video table. Real
/// predictions land 3 s from their event; false ones are 100 s from anything.
fn table_scenario(column: &[(EventClass, usize, usize)]) -> (Vec<PredictedEvent>, Vec<GroundTruthEvent>) {
    let penalty = [600];
    let goals = [1200, 2400, 3600];
    let shots = [300, 900, 1500, 1800, 2100, 2700, 3000];
    let mut truth: Vec<GroundTruthEvent> = at(&penalty, EventClass::PenaltyKick)
        .chain(at(&goals, EventClass::Goal))
        .chain(at(&shots, EventClass::Goal))
        .map(|(timestamp_s, label)| GroundTruthEvent { timestamp_s, label })
        .collect();
    truth.sort_by_key(|e| e.timestamp_s);

    let mut predicted = Vec::new();
    let mut false_at = 10_000;
    for &(label, real, fake) in column {
        let mut real_times: Vec<u64> = truth.iter().filter(|e| e.label == label).map(|e| e.timestamp_s + 3).collect();
        real_times.truncate(real);
        predicted.extend(real_times.into_iter().map(|timestamp_s| PredictedEvent { timestamp_s, label }));
        for _ in 0..fake {
            predicted.push(PredictedEvent { timestamp_s: false_at, label });
            false_at += 100;
        }
    }
    (predicted, truth)
}

fn eval_table() -> Outcome {
    // VGG column: penalty 1 real + 3 false; goals 3 real and shots 7 real + 10 false; corner 11 false
    let (pred, truth) = table_scenario(&[(EventClass::PenaltyKick, 1, 3), (EventClass::Goal, 10, 10), (EventClass::CornerKick, 0, 11)]);
    let r = match_events(&pred, &truth, 10);
    let row = |l| {
        let c = r.class(l);
        (c.tp, c.fp, c.fn_)
    };
    ensure(row(EventClass::CornerKick) == (0, 11, 0), || format!("corner kick {:?}", row(EventClass::CornerKick)))?;
    ensure(row(EventClass::PenaltyKick) == (1, 3, 0), || format!("penalty kick {:?}", row(EventClass::PenaltyKick)))?;
    ensure(row(EventClass::Goal) == (10, 10, 0), || format!("goal {:?}", row(EventClass::Goal)))?;
    ensure(row(EventClass::Foul) == (0, 0, 0), || format!("foul {:?}", row(EventClass::Foul)))?;
    ensure(r.class(EventClass::PenaltyKick).precision == 0.25, || "penalty precision".into())?;

    // ResNet50 column: no penalty; goals 2 real and shots 7 real + 7 false; corner 11 false; foul 1 false
    let (pred, truth) = table_scenario(&[
        (EventClass::PenaltyKick, 0, 0),
        (EventClass::Goal, 9, 7),
        (EventClass::CornerKick, 0, 11),
        (EventClass::Foul, 0, 1),
    ]);
    let r2 = match_events(&pred, &truth, 10);
    let c = |l| {
        let c = r2.class(l);
        (c.tp, c.fp, c.fn_)
    };
    ensure(
        c(EventClass::PenaltyKick) == (0, 0, 1) && c(EventClass::Goal) == (9, 7, 1) && c(EventClass::CornerKick) == (0, 11, 0) && c(EventClass::Foul) == (0, 1, 0),
        || format!("second column: {:?}", r2.classes),
    )?;
    Ok("corner kick FP=11; penalty kick TP=1 FP=3; goal TP=10 FP=10".into())
}

// ---------------------------------------------------------------- profiles

fn profiles() -> Outcome {
    let vgg = find_profile("frcnn-vgg16").ok_or("no VGG profile")?;
    let resnet = find_profile("frcnn-resnet50").ok_or("no ResNet50 profile")?;
    ensure(vgg.box_confidence_threshold == 0.9, || format!("VGG confidence {}", vgg.box_confidence_threshold))?;
    ensure(resnet.box_confidence_threshold == 0.6, || format!("ResNet50 confidence {}", resnet.box_confidence_threshold))?;
    ensure(vgg.overlap_threshold == 0.7 && resnet.overlap_threshold == 0.7, || "overlap thresholds".into())?;
    Ok("VGG 0.9, ResNet50 0.6, overlap 0.7".into())
}

/// Name, time budget in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("golden-metadata", 1, golden_metadata),
        ("nms-oracle-equivalence", 5, nms_oracle),
        ("interval-merge-oracle", 5, merge_oracle),
        ("geometry-properties", 60, geometry_properties),
        ("end-to-end-dry-run", 2, end_to_end_dry_run),
        ("eval-test-video-table", 1, eval_table),
        ("threshold-profiles", 1, profiles),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, limit_s, check) in criteria {
        let started = Instant::now();
        let result = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = started.elapsed();
        let limit = Duration::from_secs(limit_s);
        let (status, detail) = match result {
            Ok(_) if elapsed > limit => ("FAIL", format!("over time limit of {limit_s} s")),
            Ok(d) => ("PASS", d),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} {name:<26} {:>8.3}s  {detail}", elapsed.as_secs_f64());
    }
    println!("{} of 7 acceptance criteria passed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
