//! Appearance history per track, switch detection by falsification of the
//! track/detection binding, and rectification from the oldest stored feature.
//!
//! Each matched frame the current embedding `f` is compared with the oldest
//! `floor(history_frac * len)` features of the track's queue:
//!
//! ```text
//! C = (1/n) * sum_i (1 - f.f_i / (|f| |f_i|))
//! ```
//!
//! `C` goes into a bounded cost queue whose population variance is the
//! performance metric `tspec`. Short appearance disturbances barely move the
//! variance; a lasting change of identity drives it up. When `tspec` has been
//! above `t_theta` for more than `persist_frames` consecutive updates the
//! binding is falsified.

use crate::association::cosine_distance;
use crate::config::{history_count, TrackerConfig};
use crate::error::{Error, Result};
use crate::motion::kf_init;
use crate::types::{Detection, Embedding, SampledFeature, Track, TrackId, TrackStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationEvent {
    pub track_id: TrackId,
    pub frame: u32,
    pub tspec_at_flag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RectificationKind {
    /// The track took over detection `detection`, whose embedding is within
    /// `cost` of the track's oldest feature.
    Recovered { detection: usize, cost: f64 },
    /// No detection matched; the trajectory continues as `new_id`.
    Reassigned { new_id: TrackId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectificationOutcome {
    /// Id the track carried when it was falsified.
    pub track_id: TrackId,
    pub kind: RectificationKind,
    pub frame: u32,
}

/// Monotone id source; ids are never reused.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next: u64,
}

impl Default for IdAllocator {
    fn default() -> Self {
        IdAllocator { next: 1 }
    }
}

impl IdAllocator {
    pub fn next_id(&mut self) -> TrackId {
        let id = TrackId(self.next);
        self.next += 1;
        id
    }

    pub fn peek(&self) -> TrackId {
        TrackId(self.next)
    }
}

/// Appends `emb` to the feature queue if the queue is empty or at least
/// `sample_period` frames have passed since the last push. Returns whether it
/// was pushed.
pub fn push_feature(track: &mut Track, frame: u32, emb: &Embedding, sample_period: u32) -> bool {
    let due = match track.last_pushed_frame() {
        None => true,
        Some(last) => frame.saturating_sub(last) >= sample_period,
    };
    if due {
        track.feature_queue.push(SampledFeature {
            frame,
            embedding: emb.clone(),
        });
    }
    due
}

/// Mean cosine distance between `f` and the oldest `floor(history_frac * len)`
/// features of the track.
pub fn mean_cosine_cost(
    f: &Embedding,
    track: &Track,
    history_frac: f64,
    min_history: usize,
) -> Result<f64> {
    let len = track.feature_queue.len();
    let n = history_count(history_frac, len);
    if len < min_history || n == 0 {
        return Err(Error::InsufficientHistory {
            have: len,
            need: min_history,
        });
    }
    let mut sum = 0.0;
    for feat in track.feature_queue.iter().take(n) {
        sum += cosine_distance(f, &feat.embedding)?;
    }
    Ok(sum / n as f64)
}

/// Population variance, single pass (Welford).
pub fn population_variance<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<f64> {
    let mut count = 0u64;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for &v in values {
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
    }
    (count > 0).then(|| (m2 / count as f64).max(0.0))
}

/// Variance of the track's cost queue.
pub fn tspec(track: &Track) -> Result<f64> {
    population_variance(track.cost_queue.iter()).ok_or(Error::EmptyCostQueue)
}

/// One switch-detection update for a track matched this frame with embedding
/// `f`. Silently does nothing while the feature history is too short.
pub fn idsd_update(
    track: &mut Track,
    f: &Embedding,
    frame: u32,
    config: &TrackerConfig,
) -> Option<FalsificationEvent> {
    let c = mean_cosine_cost(f, track, config.history_frac, config.min_history).ok()?;
    track.cost_queue.push(c);
    track.tspec = tspec(track).unwrap_or(0.0);
    if track.tspec > config.t_theta {
        track.above_count += 1;
    } else {
        track.above_count = 0;
    }
    if track.above_count > config.persist_frames {
        track.status = TrackStatus::Falsified;
        Some(FalsificationEvent {
            track_id: track.id,
            frame,
            tspec_at_flag: track.tspec,
        })
    } else {
        None
    }
}

fn reset_metric(track: &mut Track) {
    track.cost_queue.clear();
    track.tspec = 0.0;
    track.above_count = 0;
    track.status = TrackStatus::Active;
}

/// Best current-frame detection for a falsified track: the lowest cosine
/// distance between its oldest feature and any unclaimed detection embedding.
pub fn best_recovery(track: &Track, detections: &[Detection], claimed: &[bool]) -> Option<(usize, f64)> {
    let f1 = &track.feature_queue.oldest()?.embedding;
    let mut best: Option<(usize, f64)> = None;
    for (j, d) in detections.iter().enumerate() {
        if claimed.get(j).copied().unwrap_or(false) {
            continue;
        }
        let Some(e) = &d.embedding else { continue };
        let Ok(c) = cosine_distance(f1, e) else { continue };
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((j, c));
        }
    }
    best
}

/// Rectifies a falsified track in place.
///
/// Searches every current detection not in `claimed`, including ones held by
/// other tracks. On a hit below `c_theta` the track is re-initialized on that
/// detection, keeping its id and feature queue while its cost queue restarts.
/// Otherwise the trajectory is given a fresh id and its queues restart from the
/// current appearance. Moving other tracks off the recovered detection is left
/// to the caller.
pub fn idsr_rectify(
    track: &mut Track,
    detections: &[Detection],
    claimed: &[bool],
    frame: u32,
    config: &TrackerConfig,
    ids: &mut IdAllocator,
) -> RectificationOutcome {
    let original = track.id;
    if let Some((j, cost)) = best_recovery(track, detections, claimed) {
        if cost < config.c_theta {
            let det = &detections[j];
            track.motion = kf_init(&det.bbox);
            track.appearance = det.embedding.clone();
            track.score = det.score;
            track.last_update = frame;
            track.lost_frames = 0;
            reset_metric(track);
            return RectificationOutcome {
                track_id: original,
                kind: RectificationKind::Recovered { detection: j, cost },
                frame,
            };
        }
    }
    let new_id = ids.next_id();
    track.id = new_id;
    track.feature_queue.clear();
    reset_metric(track);
    if let Some(a) = track.appearance.clone() {
        push_feature(track, frame, &a, config.sample_period);
    }
    RectificationOutcome {
        track_id: original,
        kind: RectificationKind::Reassigned { new_id },
        frame,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BoundingBox;

    fn unit(v: &[f64]) -> Embedding {
        Embedding::unit(v.to_vec()).unwrap()
    }

    fn det(frame: u32, emb: Option<Embedding>) -> Detection {
        Detection::new(frame, BoundingBox::new(0.0, 0.0, 10.0, 20.0).unwrap(), 0.9, emb)
    }

    fn fresh_track(cfg: &TrackerConfig) -> Track {
        Track::new(TrackId(1), &det(1, None), cfg.feature_cap, cfg.costq_cap)
    }

    fn axis(dim: usize, k: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        Embedding::unit(v).unwrap()
    }

    #[test]
    fn sampling_cadence() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let e = unit(&[1.0, 0.0]);
        for frame in 1..=30 {
            push_feature(&mut t, frame, &e, 5);
        }
        let frames: Vec<u32> = t.feature_queue.iter().map(|f| f.frame).collect();
        assert_eq!(frames, vec![1, 6, 11, 16, 21, 26]);
    }

    #[test]
    fn first_push_and_eviction() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let e = unit(&[1.0, 0.0]);
        assert!(push_feature(&mut t, 7, &e, 5));
        assert_eq!(t.feature_queue.len(), 1);

        let mut t = fresh_track(&cfg);
        for k in 0..200u32 {
            push_feature(&mut t, 1 + 5 * k, &e, 5);
        }
        assert_eq!(t.feature_queue.len(), 30);
        // Oldest retained is the 30th-from-last sample.
        assert_eq!(t.feature_queue.oldest().unwrap().frame, 1 + 5 * 170);
    }

    #[test]
    fn cosine_cost_extremes() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let e = axis(8, 0);
        for k in 0..9 {
            push_feature(&mut t, 1 + 5 * k, &e, 5);
        }
        assert_eq!(mean_cosine_cost(&e, &t, cfg.history_frac, cfg.min_history).unwrap(), 0.0);
        let orth = axis(8, 3);
        assert_eq!(mean_cosine_cost(&orth, &t, cfg.history_frac, cfg.min_history).unwrap(), 1.0);
    }

    #[test]
    fn cosine_cost_uses_oldest_two_thirds() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        // Features 0..5 along axis 0, features 6..8 along axis 1.
        for k in 0..9 {
            let e = if k < 6 { axis(4, 0) } else { axis(4, 1) };
            push_feature(&mut t, 1 + 5 * k as u32, &e, 5);
        }
        let f = axis(4, 1);
        assert_eq!(mean_cosine_cost(&f, &t, cfg.history_frac, cfg.min_history).unwrap(), 1.0);
    }

    #[test]
    fn insufficient_history_is_an_error() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let e = axis(4, 0);
        for k in 0..5 {
            push_feature(&mut t, 1 + 5 * k, &e, 5);
        }
        assert!(matches!(
            mean_cosine_cost(&e, &t, cfg.history_frac, cfg.min_history),
            Err(Error::InsufficientHistory { have: 5, need: 6 })
        ));
        assert!(idsd_update(&mut t, &e, 30, &cfg).is_none());
        assert!(t.cost_queue.is_empty());
    }

    #[test]
    fn tspec_examples() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        assert!(matches!(tspec(&t), Err(Error::EmptyCostQueue)));
        for _ in 0..30 {
            t.cost_queue.push(0.1);
        }
        assert_eq!(tspec(&t).unwrap(), 0.0);
        let mut t = fresh_track(&cfg);
        t.cost_queue.push(0.1);
        t.cost_queue.push(0.3);
        assert!((tspec(&t).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn stable_identity_never_falsified() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let e = axis(16, 2);
        for frame in 1..=300 {
            push_feature(&mut t, frame, &e, cfg.sample_period);
            assert!(idsd_update(&mut t, &e, frame, &cfg).is_none());
            assert_eq!(t.tspec, 0.0);
        }
    }

    #[test]
    fn persistence_requires_strictly_more_than_persist_frames() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let a = axis(4, 0);
        for k in 0..6 {
            push_feature(&mut t, 1 + 5 * k, &a, 5);
        }
        for _ in 0..10 {
            t.cost_queue.push(0.0);
        }
        // Costs now alternate high so the variance stays far above threshold.
        let b = axis(4, 1);
        let mut flagged = None;
        for frame in 100..130 {
            if let Some(ev) = idsd_update(&mut t, &b, frame, &cfg) {
                flagged = Some(ev);
                break;
            }
        }
        let ev = flagged.expect("falsified");
        assert_eq!(ev.frame, 100 + cfg.persist_frames);
        assert!(ev.tspec_at_flag > cfg.t_theta);
        assert_eq!(t.status, TrackStatus::Falsified);
    }

    #[test]
    fn single_low_frame_resets_counter() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        t.above_count = 7;
        let a = axis(4, 0);
        for k in 0..6 {
            push_feature(&mut t, 1 + 5 * k, &a, 5);
        }
        idsd_update(&mut t, &a, 50, &cfg);
        assert_eq!(t.above_count, 0);
    }

    #[test]
    fn recovery_on_exact_match() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let a = axis(4, 0);
        let b = axis(4, 1);
        push_feature(&mut t, 1, &a, 5);
        push_feature(&mut t, 6, &b, 5);
        t.cost_queue.push(0.5);
        t.status = TrackStatus::Falsified;
        let dets = vec![det(9, Some(b.clone())), det(9, Some(a.clone()))];
        let mut ids = IdAllocator::default();
        ids.next_id();
        let out = idsr_rectify(&mut t, &dets, &[false, false], 9, &cfg, &mut ids);
        assert_eq!(
            out.kind,
            RectificationKind::Recovered {
                detection: 1,
                cost: 0.0
            }
        );
        assert_eq!(t.id, TrackId(1));
        assert!(t.cost_queue.is_empty());
        assert_eq!(t.feature_queue.len(), 2);
        assert_eq!(t.status, TrackStatus::Active);
    }

    #[test]
    fn reassign_when_nothing_within_threshold() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let a = axis(4, 0);
        push_feature(&mut t, 1, &a, 5);
        t.appearance = Some(axis(4, 2));
        t.status = TrackStatus::Falsified;
        let dets = vec![det(9, Some(axis(4, 2)))];
        let mut ids = IdAllocator::default();
        ids.next_id();
        let out = idsr_rectify(&mut t, &dets, &[false], 9, &cfg, &mut ids);
        assert_eq!(
            out.kind,
            RectificationKind::Reassigned {
                new_id: TrackId(2)
            }
        );
        assert_eq!(out.track_id, TrackId(1));
        assert_eq!(t.id, TrackId(2));
        assert_eq!(t.feature_queue.len(), 1);
        assert_eq!(t.feature_queue.oldest().unwrap().frame, 9);
    }

    #[test]
    fn empty_history_reassigns() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        t.status = TrackStatus::Falsified;
        let dets = vec![det(3, Some(axis(4, 0)))];
        let mut ids = IdAllocator::default();
        ids.next_id();
        let out = idsr_rectify(&mut t, &dets, &[false], 3, &cfg, &mut ids);
        assert!(matches!(out.kind, RectificationKind::Reassigned { .. }));
    }

    #[test]
    fn claimed_detections_are_skipped() {
        let cfg = TrackerConfig::default();
        let mut t = fresh_track(&cfg);
        let a = axis(4, 0);
        push_feature(&mut t, 1, &a, 5);
        let dets = vec![det(9, Some(a.clone())), det(9, Some(unit(&[1.0, 0.1, 0.0, 0.0])))];
        assert_eq!(best_recovery(&t, &dets, &[false, false]).unwrap().0, 0);
        assert_eq!(best_recovery(&t, &dets, &[true, false]).unwrap().0, 1);
    }
}
