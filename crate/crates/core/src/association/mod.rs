//! Cost construction, gating, ambiguity pruning and assignment, composed into
//! the two-stage (high score, then low score) matching step.

mod ami;
mod cost;
mod lap;

pub use ami::ami_filter;
pub use cost::{
    candidate_sets, cosine_distance, cost_error, fuse_costs, iou, CandidateSets, CostMatrix,
    FORBIDDEN,
};
pub use lap::{solve_assignment, Assignment};

use crate::config::TrackerConfig;
use crate::error::Result;
use crate::types::{Detection, Track};

/// Outcome of one frame's association. All indices refer to the slices passed
/// to [`associate_two_stage`].
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageAssignment {
    /// High-score detections against all tracks.
    pub stage1: Assignment,
    /// Low-score detections against tracks left over from stage 1.
    pub stage2: Assignment,
    /// High-score detections matched in neither stage; candidates for birth.
    pub unmatched_high: Vec<usize>,
    pub candidates: CandidateSets,
}

impl TwoStageAssignment {
    pub fn all_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.stage1.pairs.iter().chain(&self.stage2.pairs).copied()
    }
}

/// Appearance cost matrix. Entries without an embedding on either side fall
/// back to the IoU cost so that the fused value reduces to motion alone.
fn reid_costs(tracks: &[&Track], dets: &[&Detection], d_iou: &CostMatrix) -> Result<CostMatrix> {
    let mut out = d_iou.clone();
    for (i, t) in tracks.iter().enumerate() {
        let Some(a) = &t.appearance else { continue };
        for (j, d) in dets.iter().enumerate() {
            if let Some(e) = &d.embedding {
                out.set(i, j, cosine_distance(a, e)?.clamp(0.0, FORBIDDEN));
            }
        }
    }
    Ok(out)
}

fn iou_costs(
    track_idx: &[usize],
    tracks: &[&Track],
    det_idx: &[usize],
    dets: &[Detection],
    gates: &CandidateSets,
) -> CostMatrix {
    CostMatrix::from_fn(track_idx.len(), det_idx.len(), |i, j| {
        let (ti, dj) = (track_idx[i], det_idx[j]);
        if gates.contains(ti, dj) {
            1.0 - iou(&tracks[ti].bbox(), &dets[dj].bbox)
        } else {
            FORBIDDEN
        }
    })
}

fn globalize(a: Assignment, rows: &[usize], cols: &[usize]) -> Assignment {
    Assignment {
        pairs: a.pairs.into_iter().map(|(i, j)| (rows[i], cols[j])).collect(),
        unmatched_rows: a.unmatched_rows.into_iter().map(|i| rows[i]).collect(),
        unmatched_cols: a.unmatched_cols.into_iter().map(|j| cols[j]).collect(),
    }
}

/// Two-stage association.
///
/// Stage 1 matches detections with `score >= tau` to every given track on the
/// gated, fused (IoU + appearance) cost, optionally pruned by [`ami_filter`].
/// Stage 2 matches the remaining low-score detections to the stage-1 leftovers
/// on gated IoU cost alone. Tracks are expected to carry predicted motion.
pub fn associate_two_stage(
    tracks: &[&Track],
    detections: &[Detection],
    config: &TrackerConfig,
    use_ami: bool,
    image_diag: f64,
) -> Result<TwoStageAssignment> {
    let motions: Vec<_> = tracks.iter().map(|t| &t.motion).collect();
    let gates = candidate_sets(&motions, detections, config.epsilon_gate, image_diag);

    let (high, low): (Vec<usize>, Vec<usize>) =
        (0..detections.len()).partition(|&j| detections[j].score >= config.tau);
    let all_tracks: Vec<usize> = (0..tracks.len()).collect();

    let d_iou = iou_costs(&all_tracks, tracks, &high, detections, &gates);
    let high_dets: Vec<&Detection> = high.iter().map(|&j| &detections[j]).collect();
    let d_reid = reid_costs(tracks, &high_dets, &d_iou)?;
    let mut fused = fuse_costs(&d_iou, &d_reid, config.alpha)?;
    if use_ami {
        fused = ami_filter(&fused, config.d_theta, config.rho);
    }
    let stage1 = globalize(solve_assignment(&fused), &all_tracks, &high);

    let leftover = stage1.unmatched_rows.clone();
    let low_costs = iou_costs(&leftover, tracks, &low, detections, &gates);
    let stage2 = globalize(solve_assignment(&low_costs), &leftover, &low);

    let unmatched_high = stage1.unmatched_cols.clone();
    Ok(TwoStageAssignment {
        stage1,
        stage2,
        unmatched_high,
        candidates: gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::kf_predict;
    use crate::types::{BoundingBox, Embedding, TrackId};

    fn det(l: f64, score: f64, emb: Option<Vec<f64>>) -> Detection {
        Detection::new(
            1,
            BoundingBox::new(l, 100.0, 40.0, 80.0).unwrap(),
            score,
            emb.map(|e| Embedding::unit(e).unwrap()),
        )
    }

    fn track(id: u64, d: &Detection) -> Track {
        let mut t = Track::new(TrackId(id), d, 30, 30);
        t.motion = kf_predict(&t.motion);
        t
    }

    #[test]
    fn all_high_leaves_stage_two_empty() {
        let d0 = det(0.0, 0.9, Some(vec![1.0, 0.0]));
        let t = track(1, &d0);
        let dets = vec![d0.clone(), det(300.0, 0.8, Some(vec![0.0, 1.0]))];
        let r = associate_two_stage(&[&t], &dets, &TrackerConfig::default(), true, 1000.0).unwrap();
        assert_eq!(r.stage1.pairs, vec![(0, 0)]);
        assert!(r.stage2.pairs.is_empty());
        assert_eq!(r.unmatched_high, vec![1]);
    }

    #[test]
    fn low_score_matched_in_second_stage_on_iou() {
        let d0 = det(0.0, 0.9, Some(vec![1.0, 0.0]));
        let t = track(1, &d0);
        let low = det(2.0, 0.3, None);
        let r =
            associate_two_stage(&[&t], &[low], &TrackerConfig::default(), true, 1000.0).unwrap();
        assert!(r.stage1.pairs.is_empty());
        assert_eq!(r.stage2.pairs, vec![(0, 0)]);
        assert!(r.unmatched_high.is_empty());
    }

    #[test]
    fn gated_pairs_never_assigned() {
        let d0 = det(0.0, 0.9, Some(vec![1.0, 0.0]));
        let t = track(1, &d0);
        let far = det(900.0, 0.9, Some(vec![1.0, 0.0]));
        let cfg = TrackerConfig {
            epsilon_gate: 0.1,
            ..TrackerConfig::default()
        };
        let r = associate_two_stage(&[&t], &[far], &cfg, false, 1000.0).unwrap();
        assert!(r.stage1.pairs.is_empty());
        assert!(!r.candidates.contains(0, 0));
    }

    #[test]
    fn appearance_breaks_motion_tie() {
        let a = det(0.0, 0.9, Some(vec![1.0, 0.0, 0.0]));
        let b = det(0.0, 0.9, Some(vec![0.0, 1.0, 0.0]));
        let ta = track(1, &a);
        let tb = track(2, &b);
        let dets = vec![b.clone(), a.clone()];
        let r = associate_two_stage(&[&ta, &tb], &dets, &TrackerConfig::default(), false, 1000.0)
            .unwrap();
        assert_eq!(r.stage1.pairs, vec![(0, 1), (1, 0)]);
    }
}
