//! Identity metrics: CLEAR-style per-frame matching, identity switches, and
//! recovery-aware measures computed from the tracker's event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::association::{iou, solve_assignment, CostMatrix, FORBIDDEN};
use crate::error::{Error, Result};
use crate::identity::RectificationKind;
use crate::mot_io::{DetectionFileRow, GtRow};
use crate::pipeline::TrackEvent;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Hypothesis-to-ground-truth pairs of one frame, ordered by hypothesis id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMapping {
    pub frame: u32,
    pub pairs: Vec<(u64, u64)>,
}

impl FrameMapping {
    pub fn gt_of(&self, hyp: u64) -> Option<u64> {
        self.pairs.iter().find(|p| p.0 == hyp).map(|p| p.1)
    }
}

/// Matches result rows to ground truth frame by frame, minimizing `1 - IoU`.
/// Pairs with IoU below `iou_threshold` are never matched.
pub fn match_frames(results: &[DetectionFileRow], gt: &[GtRow], iou_threshold: f64) -> Vec<FrameMapping> {
    let mut by_frame: BTreeMap<u32, (Vec<&DetectionFileRow>, Vec<&GtRow>)> = BTreeMap::new();
    for r in results {
        by_frame.entry(r.frame).or_default().0.push(r);
    }
    for g in gt {
        by_frame.entry(g.frame).or_default().1.push(g);
    }
    let mut out = Vec::new();
    for (frame, (hyps, gts)) in by_frame {
        let m = CostMatrix::from_fn(hyps.len(), gts.len(), |i, j| {
            let o = iou(&hyps[i].bbox, &gts[j].bbox);
            if o >= iou_threshold && o > 0.0 {
                1.0 - o
            } else {
                FORBIDDEN
            }
        });
        let mut pairs: Vec<(u64, u64)> = solve_assignment(&m)
            .pairs
            .into_iter()
            .map(|(i, j)| (hyps[i].id as u64, gts[j].id))
            .collect();
        pairs.sort_unstable();
        if !pairs.is_empty() {
            out.push(FrameMapping { frame, pairs });
        }
    }
    out
}

/// Identity switches: for each gt id, the number of matched frames whose
/// hypothesis differs from the most recent earlier match. Unmatched frames in
/// between do not reset the reference.
pub fn count_idsw(mappings: &[FrameMapping]) -> u32 {
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    let mut count = 0;
    for m in mappings {
        for &(hyp, gt) in &m.pairs {
            if let Some(prev) = last.insert(gt, hyp) {
                if prev != hyp {
                    count += 1;
                }
            }
        }
    }
    count
}

/// One falsification and what became of it.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub track: u64,
    /// Last frame before the falsification where the track's gt changed.
    pub switch_frame: Option<u32>,
    pub falsify_frame: u32,
    pub recovery_frame: Option<u32>,
    /// Gt the track followed before the switch.
    pub original_gt: Option<u64>,
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryStats {
    pub falsifications: u32,
    pub reassignments: u32,
    pub switches_recovered: u32,
    /// Mean of falsify frame minus switch frame over falsifications with a switch.
    pub mean_detection_latency: f64,
    /// Mean of recovery frame minus falsify frame over recovered falsifications.
    pub mean_recovery_latency: f64,
    pub timeline: Vec<SwitchRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub idsw: u32,
    /// `None` when no event log was supplied.
    pub recovery: Option<RecoveryStats>,
}

fn mean(values: &[u32]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64
    }
}

/// Per-hypothesis timeline of matched gt ids.
fn hyp_timelines(mappings: &[FrameMapping]) -> BTreeMap<u64, BTreeMap<u32, u64>> {
    let mut out: BTreeMap<u64, BTreeMap<u32, u64>> = BTreeMap::new();
    for m in mappings {
        for &(hyp, gt) in &m.pairs {
            out.entry(hyp).or_default().insert(m.frame, gt);
        }
    }
    out
}

/// Known track ids: every id in the results plus every id an event introduces.
fn check_known(events: &[TrackEvent], result_ids: &BTreeSet<u64>) -> Result<()> {
    let mut known = result_ids.clone();
    for e in events {
        let id = match e {
            TrackEvent::Birth { id, .. } => {
                known.insert(id.0);
                continue;
            }
            TrackEvent::Remove { id, .. } => id.0,
            TrackEvent::Falsify(f) => f.track_id.0,
            TrackEvent::Rectify(r) => {
                if let RectificationKind::Reassigned { new_id } = r.kind {
                    known.insert(new_id.0);
                }
                r.track_id.0
            }
        };
        if !known.contains(&id) {
            return Err(Error::UnknownTrack(id));
        }
    }
    Ok(())
}

pub fn recovery_report(
    mappings: &[FrameMapping],
    result_ids: &BTreeSet<u64>,
    events: Option<&[TrackEvent]>,
) -> Result<IdentityReport> {
    let idsw = count_idsw(mappings);
    let Some(events) = events else {
        return Ok(IdentityReport { idsw, recovery: None });
    };
    check_known(events, result_ids)?;
    let timelines = hyp_timelines(mappings);
    let empty = BTreeMap::new();

    let mut stats = RecoveryStats {
        falsifications: 0,
        reassignments: 0,
        switches_recovered: 0,
        mean_detection_latency: 0.0,
        mean_recovery_latency: 0.0,
        timeline: Vec::new(),
    };
    let (mut detect_lat, mut recover_lat) = (Vec::new(), Vec::new());
    for (idx, e) in events.iter().enumerate() {
        match e {
            TrackEvent::Rectify(r) if matches!(r.kind, RectificationKind::Reassigned { .. }) => {
                stats.reassignments += 1;
            }
            TrackEvent::Falsify(f) => {
                stats.falsifications += 1;
                let track = f.track_id.0;
                let tl = timelines.get(&track).unwrap_or(&empty);

                let mut switch_frame = None;
                let mut original_gt = None;
                let mut prev: Option<u64> = None;
                // Outputs on the falsification frame already reflect rectification.
                for (&frame, &gt) in tl.range(..f.frame) {
                    if let Some(p) = prev.filter(|&p| p != gt) {
                        switch_frame = Some(frame);
                        original_gt = Some(p);
                    }
                    prev = Some(gt);
                }

                let recovery_frame = events[idx + 1..]
                    .iter()
                    .find_map(|later| match later {
                        TrackEvent::Rectify(r) if r.track_id == f.track_id => Some(r),
                        _ => None,
                    })
                    .filter(|r| matches!(r.kind, RectificationKind::Recovered { .. }))
                    .map(|r| r.frame);
                let recovered = match (recovery_frame, original_gt) {
                    (Some(rf), Some(orig)) => {
                        tl.range(rf..).next().map(|(_, &gt)| gt) == Some(orig)
                    }
                    _ => false,
                };

                if let Some(sf) = switch_frame {
                    detect_lat.push(f.frame - sf);
                }
                if recovered {
                    stats.switches_recovered += 1;
                    recover_lat.push(recovery_frame.unwrap_or(f.frame) - f.frame);
                }
                stats.timeline.push(SwitchRecord {
                    track,
                    switch_frame,
                    falsify_frame: f.frame,
                    recovery_frame,
                    original_gt,
                    recovered,
                });
            }
            _ => {}
        }
    }
    stats.mean_detection_latency = mean(&detect_lat);
    stats.mean_recovery_latency = mean(&recover_lat);
    Ok(IdentityReport {
        idsw,
        recovery: Some(stats),
    })
}

/// Convenience wrapper over result rows.
pub fn evaluate(
    results: &[DetectionFileRow],
    gt: &[GtRow],
    events: Option<&[TrackEvent]>,
) -> Result<IdentityReport> {
    let mappings = match_frames(results, gt, DEFAULT_IOU_THRESHOLD);
    let ids: BTreeSet<u64> = results.iter().map(|r| r.id as u64).collect();
    recovery_report(&mappings, &ids, events)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

impl IdentityReport {
    /// Flat `key=value` text, one entry per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "idsw={}", self.idsw);
        match &self.recovery {
            None => {
                for k in [
                    "falsifications",
                    "reassignments",
                    "switches_recovered",
                    "mean_detection_latency",
                    "mean_recovery_latency",
                ] {
                    let _ = writeln!(s, "{k}=n/a");
                }
            }
            Some(r) => {
                let _ = writeln!(s, "falsifications={}", r.falsifications);
                let _ = writeln!(s, "reassignments={}", r.reassignments);
                let _ = writeln!(s, "switches_recovered={}", r.switches_recovered);
                let _ = writeln!(s, "mean_detection_latency={:.3}", r.mean_detection_latency);
                let _ = writeln!(s, "mean_recovery_latency={:.3}", r.mean_recovery_latency);
                for (i, t) in r.timeline.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "switch.{}=track:{} switch_frame:{} falsify_frame:{} recovery_frame:{} original_gt:{} recovered:{}",
                        i + 1,
                        t.track,
                        opt(t.switch_frame),
                        t.falsify_frame,
                        opt(t.recovery_frame),
                        opt(t.original_gt),
                        t.recovered
                    );
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{FalsificationEvent, RectificationOutcome};
    use crate::types::{BoundingBox, TrackId};

    fn row(frame: u32, id: i64, left: f64) -> DetectionFileRow {
        DetectionFileRow {
            frame,
            id,
            bbox: BoundingBox::new(left, 0.0, 50.0, 50.0).unwrap(),
            score: 1.0,
            extra: [-1.0; 3],
        }
    }

    fn gt(frame: u32, id: u64, left: f64) -> GtRow {
        GtRow {
            frame,
            id,
            bbox: BoundingBox::new(left, 0.0, 50.0, 50.0).unwrap(),
        }
    }

    fn map(frame: u32, pairs: &[(u64, u64)]) -> FrameMapping {
        FrameMapping {
            frame,
            pairs: pairs.to_vec(),
        }
    }

    #[test]
    fn perfect_results_map_to_own_ids() {
        let g = vec![gt(1, 4, 0.0), gt(1, 9, 200.0), gt(2, 4, 0.0)];
        let r: Vec<_> = g.iter().map(|x| row(x.frame, x.id as i64, x.bbox.left)).collect();
        let m = match_frames(&r, &g, 0.5);
        assert_eq!(m, vec![map(1, &[(4, 4), (9, 9)]), map(2, &[(4, 4)])]);
        assert_eq!(count_idsw(&m), 0);
    }

    #[test]
    fn disjoint_and_shifted() {
        assert!(match_frames(&[row(1, 1, 500.0)], &[gt(1, 1, 0.0)], 0.5).is_empty());
        assert_eq!(match_frames(&[row(1, 1, 2.0)], &[gt(1, 7, 0.0)], 0.5), vec![map(1, &[(1, 7)])]);
    }

    #[test]
    fn return_to_original_counts_twice() {
        let m = vec![map(1, &[(1, 10)]), map(2, &[(2, 10)]), map(3, &[(1, 10)])];
        assert_eq!(count_idsw(&m), 2);
    }

    #[test]
    fn gaps_are_not_switches() {
        let m = vec![map(1, &[(1, 10)]), map(5, &[(1, 10)])];
        assert_eq!(count_idsw(&m), 0);
    }

    #[test]
    fn no_events_gives_zeros() {
        let r = recovery_report(&[], &BTreeSet::new(), Some(&[])).unwrap();
        let s = r.recovery.unwrap();
        assert_eq!((s.falsifications, s.switches_recovered), (0, 0));
        assert_eq!(s.mean_detection_latency, 0.0);
    }

    #[test]
    fn missing_log_reports_na() {
        let r = recovery_report(&[map(1, &[(1, 1)])], &BTreeSet::from([1]), None).unwrap();
        assert!(r.to_text().contains("switches_recovered=n/a"));
        assert!(r.to_text().starts_with("idsw=0\n"));
    }

    #[test]
    fn unknown_track_is_an_error() {
        let ev = vec![TrackEvent::Remove {
            frame: 3,
            id: TrackId(42),
        }];
        assert!(matches!(
            recovery_report(&[], &BTreeSet::from([1]), Some(&ev)),
            Err(Error::UnknownTrack(42))
        ));
    }

    #[test]
    fn swap_then_recovery() {
        // Track 1 follows gt 10, swaps to gt 20 at frame 3, is falsified at 5
        // and recovered onto gt 10 at frame 5.
        let m = vec![
            map(1, &[(1, 10)]),
            map(2, &[(1, 10)]),
            map(3, &[(1, 20), (2, 10)]),
            map(4, &[(1, 20), (2, 10)]),
            map(5, &[(1, 10), (3, 20)]),
        ];
        let ev = vec![
            TrackEvent::Falsify(FalsificationEvent {
                track_id: TrackId(1),
                frame: 5,
                tspec_at_flag: 0.5,
            }),
            TrackEvent::Rectify(RectificationOutcome {
                track_id: TrackId(1),
                kind: RectificationKind::Recovered {
                    detection: 0,
                    cost: 0.0,
                },
                frame: 5,
            }),
        ];
        let r = recovery_report(&m, &BTreeSet::from([1, 2, 3]), Some(&ev)).unwrap();
        let s = r.recovery.unwrap();
        assert_eq!(s.switches_recovered, 1);
        assert_eq!(s.mean_detection_latency, 2.0);
        assert_eq!(s.mean_recovery_latency, 0.0);
        assert_eq!(s.timeline[0].original_gt, Some(10));
    }
}
