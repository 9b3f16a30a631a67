//! Turns an event timeline into a cut list: each event is padded into a
//! window, overlapping (or close) windows are merged into one clip, and each
//! clip is labelled with its most confident event.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::EventClass;
use crate::timeline::EventTimeline;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("event at {timestamp}s lies beyond the end of a {duration}s video")]
    EventOutOfRange { timestamp: u64, duration: u64 },
    #[error("a zero-length video cannot hold a clip")]
    EmptyVideo,
    #[error("invalid cut list: {0}")]
    Invalid(String),
    #[error("cut list JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub lead_s: u64,
    pub tail_s: u64,
    /// Padded windows separated by at most this many seconds share a clip.
    pub merge_gap_s: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { lead_s: 5, tail_s: 5, merge_gap_s: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub timestamp_s: u64,
    pub label: EventClass,
    pub confidence_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub label: EventClass,
    pub confidence_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipWindow {
    pub start_s: u64,
    pub end_s: u64,
    #[serde(flatten)]
    pub overlay: Overlay,
    pub events: Vec<TimedEvent>,
}

impl ClipWindow {
    pub fn duration_s(&self) -> u64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: u64) -> bool {
        self.start_s <= t && t <= self.end_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutList {
    pub clips: Vec<ClipWindow>,
    pub video_duration_s: u64,
}

pub fn pad_event(t: u64, cfg: &PlannerConfig, duration_s: u64) -> (u64, u64) {
    (t.saturating_sub(cfg.lead_s), t.saturating_add(cfg.tail_s).min(duration_s))
}

/// `pad_event`, widened by one second when padding and clamping leave an
/// empty window (zero lead/tail, or an event at the very end of the video).
fn clip_bounds(t: u64, cfg: &PlannerConfig, duration_s: u64) -> Result<(u64, u64), PlanError> {
    let (start, end) = pad_event(t, cfg, duration_s);
    if start < end {
        Ok((start, end))
    } else if end < duration_s {
        Ok((start, end + 1))
    } else if start > 0 {
        Ok((start - 1, end))
    } else {
        Err(PlanError::EmptyVideo)
    }
}

/// Earlier-wins tie break on equal confidence.
fn stronger(a: &TimedEvent, b: &TimedEvent) -> bool {
    match a.confidence_pct.total_cmp(&b.confidence_pct) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.timestamp_s < b.timestamp_s,
    }
}

fn overlay_of(events: &[TimedEvent]) -> Overlay {
    let best = events
        .iter()
        .skip(1)
        .fold(&events[0], |best, e| if stronger(e, best) { e } else { best });
    Overlay { label: best.label, confidence_pct: best.confidence_pct }
}

pub fn merge_windows(timeline: &EventTimeline, cfg: &PlannerConfig, duration_s: u64) -> Result<CutList, PlanError> {
    let mut clips: Vec<ClipWindow> = Vec::new();
    for record in &timeline.records {
        let t = record.timestamp_s;
        if t > duration_s {
            return Err(PlanError::EventOutOfRange { timestamp: t, duration: duration_s });
        }
        let (start, end) = clip_bounds(t, cfg, duration_s)?;
        let events = record.events.iter().map(|e| TimedEvent {
            timestamp_s: t,
            label: e.label,
            confidence_pct: e.confidence_pct,
        });
        match clips.last_mut() {
            Some(clip) if start <= clip.end_s.saturating_add(cfg.merge_gap_s) => {
                clip.end_s = clip.end_s.max(end);
                clip.events.extend(events);
            }
            _ => {
                let events: Vec<TimedEvent> = events.collect();
                if events.is_empty() {
                    continue;
                }
                clips.push(ClipWindow {
                    start_s: start,
                    end_s: end,
                    overlay: overlay_of(&events),
                    events,
                });
            }
        }
    }
    for clip in &mut clips {
        clip.overlay = overlay_of(&clip.events);
    }
    Ok(CutList { clips, video_duration_s: duration_s })
}

pub fn total_highlight_duration(cutlist: &CutList) -> u64 {
    cutlist.clips.iter().map(ClipWindow::duration_s).sum()
}

impl CutList {
    pub fn validate(&self) -> Result<(), PlanError> {
        let invalid = |m: String| Err(PlanError::Invalid(m));
        for (i, clip) in self.clips.iter().enumerate() {
            if clip.start_s >= clip.end_s {
                return invalid(format!("clip {i} has start {} >= end {}", clip.start_s, clip.end_s));
            }
            if clip.end_s > self.video_duration_s {
                return invalid(format!("clip {i} ends after the video ({}s)", self.video_duration_s));
            }
            if clip.events.is_empty() {
                return invalid(format!("clip {i} has no events"));
            }
            if let Some(e) = clip.events.iter().find(|e| !clip.contains(e.timestamp_s)) {
                return invalid(format!("clip {i} lists an event at {}s outside its window", e.timestamp_s));
            }
            if !(0.0..=100.0).contains(&clip.overlay.confidence_pct) {
                return invalid(format!("clip {i} overlay confidence is outside [0, 100]"));
            }
        }
        if let Some(i) = self.clips.windows(2).position(|w| w[0].end_s >= w[1].start_s) {
            return invalid(format!("clips {i} and {} overlap or are out of order", i + 1));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cut list serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<CutList, PlanError> {
        let cutlist: CutList = serde_json::from_str(text).map_err(|e| PlanError::Json(e.to_string()))?;
        cutlist.validate()?;
        Ok(cutlist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{EventRecord, ScoredEvent};
    use proptest::prelude::*;

    fn record(t: u64, events: &[(EventClass, f64)]) -> EventRecord {
        EventRecord {
            timestamp_s: t,
            events: events.iter().map(|&(label, confidence_pct)| ScoredEvent { label, confidence_pct }).collect(),
        }
    }

    fn timeline(records: Vec<EventRecord>) -> EventTimeline {
        EventTimeline { records }
    }

    #[test]
    fn pad_examples() {
        let cfg = PlannerConfig::default();
        assert_eq!(pad_event(86, &cfg, 1380), (81, 91));
        assert_eq!(pad_event(2, &cfg, 1380), (0, 7));
        assert_eq!(pad_event(1380, &cfg, 1380), (1375, 1380));
    }

    #[test]
    fn neighbouring_events_share_a_clip() {
        let t = timeline(vec![
            record(86, &[(EventClass::Foul, 92.54742860794067)]),
            record(88, &[(EventClass::Foul, 98.17170500755311)]),
        ]);
        let cl = merge_windows(&t, &PlannerConfig::default(), 1380).unwrap();
        assert_eq!(cl.clips.len(), 1);
        let clip = &cl.clips[0];
        assert_eq!((clip.start_s, clip.end_s), (81, 93));
        assert_eq!(clip.overlay, Overlay { label: EventClass::Foul, confidence_pct: 98.17170500755311 });
        assert_eq!(clip.events.len(), 2);
    }

    #[test]
    fn single_event_clip() {
        let t = timeline(vec![record(174, &[(EventClass::CornerKick, 97.12415933609009)])]);
        let cl = merge_windows(&t, &PlannerConfig::default(), 1380).unwrap();
        assert_eq!((cl.clips[0].start_s, cl.clips[0].end_s), (169, 179));
        assert_eq!(cl.clips[0].overlay.label, EventClass::CornerKick);
        assert_eq!(cl.clips[0].overlay.confidence_pct, 97.12415933609009);
    }

    #[test]
    fn empty_timeline_gives_no_clips() {
        let cl = merge_windows(&EventTimeline::default(), &PlannerConfig::default(), 100).unwrap();
        assert!(cl.clips.is_empty());
        assert_eq!(total_highlight_duration(&cl), 0);
    }

    #[test]
    fn touching_windows_merge_but_gaps_do_not() {
        let cfg = PlannerConfig::default();
        // (81,91) and (91,101) touch
        let t = timeline(vec![record(86, &[(EventClass::Goal, 95.0)]), record(96, &[(EventClass::Goal, 91.0)])]);
        assert_eq!(merge_windows(&t, &cfg, 1000).unwrap().clips.len(), 1);
        // (81,91) and (93,103) leave a 2 s gap
        let t = timeline(vec![record(86, &[(EventClass::Goal, 95.0)]), record(98, &[(EventClass::Goal, 91.0)])]);
        assert_eq!(merge_windows(&t, &cfg, 1000).unwrap().clips.len(), 2);
        let wide = PlannerConfig { merge_gap_s: 2, ..cfg };
        assert_eq!(merge_windows(&t, &wide, 1000).unwrap().clips.len(), 1);
    }

    #[test]
    fn overlay_ties_go_to_the_earlier_event() {
        let t = timeline(vec![record(10, &[(EventClass::Goal, 95.0)]), record(12, &[(EventClass::PenaltyKick, 95.0)])]);
        let cl = merge_windows(&t, &PlannerConfig::default(), 100).unwrap();
        assert_eq!(cl.clips[0].overlay.label, EventClass::Goal);
    }

    #[test]
    fn events_past_the_end_are_rejected() {
        let t = timeline(vec![record(200, &[(EventClass::Goal, 95.0)])]);
        assert!(matches!(
            merge_windows(&t, &PlannerConfig::default(), 100),
            Err(PlanError::EventOutOfRange { timestamp: 200, duration: 100 })
        ));
    }

    #[test]
    fn zero_padding_still_yields_one_second_clips() {
        let cfg = PlannerConfig { lead_s: 0, tail_s: 0, merge_gap_s: 0 };
        let t = timeline(vec![record(0, &[(EventClass::Goal, 95.0)]), record(10, &[(EventClass::Foul, 91.0)])]);
        let cl = merge_windows(&t, &cfg, 10).unwrap();
        let bounds: Vec<(u64, u64)> = cl.clips.iter().map(|c| (c.start_s, c.end_s)).collect();
        assert_eq!(bounds, vec![(0, 1), (9, 10)]);
        assert!(matches!(merge_windows(&timeline(vec![record(0, &[(EventClass::Goal, 95.0)])]), &cfg, 0), Err(PlanError::EmptyVideo)));
    }

    #[test]
    fn total_duration_sums_clips() {
        let t = timeline(vec![
            record(86, &[(EventClass::Foul, 92.5)]),
            record(88, &[(EventClass::Foul, 98.1)]),
            record(174, &[(EventClass::CornerKick, 97.1)]),
        ]);
        let cl = merge_windows(&t, &PlannerConfig::default(), 1380).unwrap();
        assert_eq!(total_highlight_duration(&cl), 22);

        let whole = merge_windows(&timeline(vec![record(5, &[(EventClass::Goal, 99.0)])]), &PlannerConfig::default(), 10).unwrap();
        assert_eq!(total_highlight_duration(&whole), whole.video_duration_s);
    }

    #[test]
    fn json_shape_and_validation() {
        let t = timeline(vec![record(174, &[(EventClass::CornerKick, 97.12415933609009)])]);
        let cl = merge_windows(&t, &PlannerConfig::default(), 1380).unwrap();
        let json = cl.to_json();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["clips"][0]["label"], "Corner kick");
        assert_eq!(value["clips"][0]["start_s"], 169);
        assert_eq!(value["clips"][0]["events"][0]["timestamp_s"], 174);
        assert_eq!(value["video_duration_s"], 1380);
        assert_eq!(CutList::from_json(&json).unwrap(), cl);

        let mut bad = cl.clone();
        bad.clips[0].end_s = 2000;
        assert!(CutList::from_json(&bad.to_json()).is_err());
        assert!(CutList::from_json("{").is_err());
    }

    fn arb_timeline() -> impl Strategy<Value = (EventTimeline, u64)> {
        (proptest::collection::btree_set(0u64..600, 0..60), 600u64..700).prop_map(|(ts, duration)| {
            let records = ts
                .into_iter()
                .enumerate()
                .map(|(i, t)| record(t, &[(EventClass::ALL[i % 4], 90.0 + (i % 10) as f64)]))
                .collect();
            (timeline(records), duration)
        })
    }

    proptest! {
        #[test]
        fn longer_padding_never_adds_clips(
            (t, duration) in arb_timeline(),
            lead in 0u64..10,
            tail in 0u64..10,
            extra_lead in 0u64..5,
            extra_tail in 0u64..5,
        ) {
            let small = PlannerConfig { lead_s: lead, tail_s: tail, merge_gap_s: 0 };
            let big = PlannerConfig { lead_s: lead + extra_lead, tail_s: tail + extra_tail, merge_gap_s: 0 };
            let a = merge_windows(&t, &small, duration).unwrap();
            let b = merge_windows(&t, &big, duration).unwrap();
            prop_assert!(b.clips.len() <= a.clips.len());
            prop_assert!(total_highlight_duration(&b) >= total_highlight_duration(&a));
            a.validate().unwrap();
            b.validate().unwrap();
        }
    }
}
