//! Event-level scoring of predicted highlights against annotated ground truth.
//!
//! Predictions and truths are matched one-to-one within each class when their
//! timestamps differ by at most the tolerance. Matched pairs are true
//! positives; leftovers are false positives (predictions) or misses (truths).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::EventClass;
use crate::planner::CutList;
use crate::timeline::EventTimeline;

pub const DEFAULT_TOLERANCE_S: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ground truth line {line}: {message}")]
    Truth { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEvent {
    pub timestamp_s: u64,
    pub label: EventClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedEvent {
    pub timestamp_s: u64,
    pub label: EventClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: EventClass,
    pub actual: usize,
    pub predicted: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

impl ClassReport {
    fn from_counts(label: EventClass, actual: usize, predicted: usize, tp: usize) -> Self {
        ClassReport {
            label,
            actual,
            predicted,
            tp,
            fp: predicted - tp,
            fn_: actual - tp,
            precision: ratio(tp, predicted),
            recall: ratio(tp, actual),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalsReport {
    pub actual: usize,
    pub predicted: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance_s: u64,
    pub classes: Vec<ClassReport>,
    pub totals: TotalsReport,
}

impl EvalReport {
    pub fn class(&self, label: EventClass) -> &ClassReport {
        self.classes.iter().find(|c| c.label == label).expect("every class is reported")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// 0 when the denominator is 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Maximum one-to-one matching between sorted prediction and truth times.
///
/// Truth windows `[t - tol, t + tol]` all have the same width, so taking
/// truths in time order and giving each the earliest still-unused prediction
/// inside its window yields a maximum matching.
fn count_matches(mut predicted: Vec<u64>, mut truth: Vec<u64>, tolerance_s: u64) -> usize {
    predicted.sort_unstable();
    truth.sort_unstable();
    let mut next = 0;
    let mut matched = 0;
    for t in truth {
        while next < predicted.len() && predicted[next] + tolerance_s < t {
            next += 1;
        }
        if next < predicted.len() && predicted[next] <= t + tolerance_s {
            matched += 1;
            next += 1;
        }
    }
    matched
}

pub fn match_events(predicted: &[PredictedEvent], truth: &[GroundTruthEvent], tolerance_s: u64) -> EvalReport {
    let classes: Vec<ClassReport> = EventClass::ALL
        .iter()
        .map(|&label| {
            let p: Vec<u64> = predicted.iter().filter(|e| e.label == label).map(|e| e.timestamp_s).collect();
            let t: Vec<u64> = truth.iter().filter(|e| e.label == label).map(|e| e.timestamp_s).collect();
            let (np, nt) = (p.len(), t.len());
            let tp = count_matches(p, t, tolerance_s);
            ClassReport::from_counts(label, nt, np, tp)
        })
        .collect();
    let sum = |f: fn(&ClassReport) -> usize| classes.iter().map(f).sum::<usize>();
    let (actual, pred, tp) = (sum(|c| c.actual), sum(|c| c.predicted), sum(|c| c.tp));
    let totals = TotalsReport {
        actual,
        predicted: pred,
        tp,
        fp: pred - tp,
        fn_: actual - tp,
        precision: ratio(tp, pred),
        recall: ratio(tp, actual),
    };
    EvalReport { tolerance_s, classes, totals }
}

pub fn report_table(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>7} {:>10} {:>5} {:>5} {:>5} {:>10} {:>7}",
        "Event", "Actual", "Predicted", "TP", "FP", "FN", "Precision", "Recall"
    );
    let mut row = |name: &str, actual: usize, predicted: usize, tp: usize, fp: usize, fn_: usize, p: f64, rc: f64| {
        let _ = writeln!(out, "{name:<14} {actual:>7} {predicted:>10} {tp:>5} {fp:>5} {fn_:>5} {p:>10.3} {rc:>7.3}");
    };
    for c in &r.classes {
        row(c.label.as_str(), c.actual, c.predicted, c.tp, c.fp, c.fn_, c.precision, c.recall);
    }
    let t = &r.totals;
    row("Total", t.actual, t.predicted, t.tp, t.fp, t.fn_, t.precision, t.recall);
    out
}

/// Headerless `timestamp_s,label` rows. Blank lines and `#` comments are skipped.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthEvent>, EvalError> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let err = |message: String| EvalError::Truth { line, message };
        let (ts, label) = raw.split_once(',').ok_or_else(|| err("expected `timestamp_s,label`".into()))?;
        let timestamp_s = ts.trim().parse().map_err(|_| err(format!("{ts:?} is not a whole number of seconds")))?;
        let label = EventClass::parse(label).map_err(|e| err(e.to_string()))?;
        events.push(GroundTruthEvent { timestamp_s, label });
    }
    Ok(events)
}

/// One prediction per distinct label in each record; repeated boxes of the
/// same class in a single frame describe the same moment.
pub fn predictions_from_timeline(t: &EventTimeline) -> Vec<PredictedEvent> {
    let mut out = Vec::new();
    for r in &t.records {
        let mut labels: Vec<EventClass> = r.events.iter().map(|e| e.label).collect();
        labels.sort_unstable();
        labels.dedup();
        out.extend(labels.into_iter().map(|label| PredictedEvent { timestamp_s: r.timestamp_s, label }));
    }
    out
}

/// One prediction per clip: its overlay label, at the time of the event that
/// supplied the overlay.
pub fn predictions_from_cutlist(c: &CutList) -> Vec<PredictedEvent> {
    c.clips
        .iter()
        .map(|clip| {
            let timestamp_s = clip
                .events
                .iter()
                .find(|e| e.label == clip.overlay.label && e.confidence_pct == clip.overlay.confidence_pct)
                .map_or(clip.start_s, |e| e.timestamp_s);
            PredictedEvent { timestamp_s, label: clip.overlay.label }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{EventRecord, ScoredEvent};

    fn p(t: u64, label: EventClass) -> PredictedEvent {
        PredictedEvent { timestamp_s: t, label }
    }

    fn g(t: u64, label: EventClass) -> GroundTruthEvent {
        GroundTruthEvent { timestamp_s: t, label }
    }

    #[test]
    fn single_pair_within_tolerance() {
        let r = match_events(&[p(120, EventClass::Goal)], &[g(118, EventClass::Goal)], 10);
        let goal = r.class(EventClass::Goal);
        assert_eq!((goal.tp, goal.fp, goal.fn_), (1, 0, 0));
    }

    #[test]
    fn predictions_without_truth_are_false_positives() {
        let preds: Vec<PredictedEvent> = (0..11).map(|i| p(100 + i * 40, EventClass::CornerKick)).collect();
        let r = match_events(&preds, &[], 10);
        let ck = r.class(EventClass::CornerKick);
        assert_eq!((ck.tp, ck.fp, ck.fn_), (0, 11, 0));
        assert_eq!(ck.precision, 0.0);
    }

    #[test]
    fn empty_inputs_give_zeros() {
        let r = match_events(&[], &[], 10);
        for c in &r.classes {
            assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 0));
            assert_eq!((c.precision, c.recall), (0.0, 0.0));
        }
        assert_eq!(r.totals.tp, 0);
    }

    #[test]
    fn no_cross_class_matches() {
        let r = match_events(&[p(10, EventClass::Goal)], &[g(10, EventClass::PenaltyKick)], 10);
        assert_eq!(r.class(EventClass::Goal).fp, 1);
        assert_eq!(r.class(EventClass::PenaltyKick).fn_, 1);
        assert_eq!(r.totals.tp, 0);
    }

    #[test]
    fn matching_is_maximal_where_nearest_first_is_not() {
        // nearest pair (9, 5) would strand both 0 and 14
        let preds = [p(5, EventClass::Goal), p(14, EventClass::Goal)];
        let truth = [g(0, EventClass::Goal), g(9, EventClass::Goal)];
        assert_eq!(match_events(&preds, &truth, 5).class(EventClass::Goal).tp, 2);
    }

    #[test]
    fn zero_tolerance_needs_exact_times() {
        let r = match_events(&[p(10, EventClass::Foul), p(20, EventClass::Foul)], &[g(10, EventClass::Foul), g(21, EventClass::Foul)], 0);
        assert_eq!(r.class(EventClass::Foul).tp, 1);
    }

    #[test]
    fn table_shows_recall() {
        let preds = [p(10, EventClass::Goal), p(50, EventClass::Goal)];
        let truth = [g(12, EventClass::Goal), g(48, EventClass::Goal), g(300, EventClass::Goal)];
        let r = match_events(&preds, &truth, 10);
        let goal = r.class(EventClass::Goal);
        assert_eq!((goal.tp, goal.fn_), (2, 1));
        let table = report_table(&r);
        let row = table.lines().find(|l| l.starts_with("goal")).unwrap();
        assert!(row.trim_end().ends_with("0.667"), "{row}");
        assert_eq!(report_table(&r), table);
    }

    #[test]
    fn all_zero_table() {
        let table = report_table(&match_events(&[], &[], 10));
        assert_eq!(
            table,
            concat!(
                "Event           Actual  Predicted    TP    FP    FN  Precision  Recall\n",
                "foul                 0          0     0     0     0      0.000   0.000\n",
                "Corner kick          0          0     0     0     0      0.000   0.000\n",
                "goal                 0          0     0     0     0      0.000   0.000\n",
                "penalty kick         0          0     0     0     0      0.000   0.000\n",
                "Total                0          0     0     0     0      0.000   0.000\n",
            )
        );
    }

    #[test]
    fn parses_ground_truth_csv() {
        let gt = parse_ground_truth("# match 1\n118,goal\n\n600, penalty kick\n").unwrap();
        assert_eq!(gt, vec![g(118, EventClass::Goal), g(600, EventClass::PenaltyKick)]);
        assert!(matches!(parse_ground_truth("x,goal"), Err(EvalError::Truth { line: 1, .. })));
        assert!(matches!(parse_ground_truth("1,goal\n2,throw in"), Err(EvalError::Truth { line: 2, .. })));
        assert!(parse_ground_truth("12").is_err());
    }

    #[test]
    fn timeline_predictions_collapse_repeated_labels() {
        let t = EventTimeline {
            records: vec![EventRecord {
                timestamp_s: 114,
                events: vec![
                    ScoredEvent { label: EventClass::CornerKick, confidence_pct: 92.6 },
                    ScoredEvent { label: EventClass::CornerKick, confidence_pct: 91.5 },
                    ScoredEvent { label: EventClass::Goal, confidence_pct: 90.5 },
                ],
            }],
        };
        assert_eq!(predictions_from_timeline(&t), vec![p(114, EventClass::CornerKick), p(114, EventClass::Goal)]);
    }
}
