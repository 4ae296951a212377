//! Per-frame tracker loop: predict, gate, associate, update, detect switches,
//! rectify, manage lifecycle, emit outputs.

use crate::association::associate_two_stage;
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::identity::{
    idsd_update, idsr_rectify, push_feature, FalsificationEvent, IdAllocator,
    RectificationKind, RectificationOutcome,
};
use crate::motion::{kf_init, kf_predict, kf_update};
use crate::types::{BoundingBox, Detection, Track, TrackId, TrackStatus};

/// Which identity modules are active. Rectification needs detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modules {
    pub ami: bool,
    pub idsd: bool,
    pub idsr: bool,
}

impl Default for Modules {
    fn default() -> Self {
        Modules {
            ami: true,
            idsd: true,
            idsr: true,
        }
    }
}

impl Modules {
    pub fn validate(&self) -> Result<()> {
        if self.idsr && !self.idsd {
            return Err(Error::Toggles(
                "rectification depends on switch detection; disable both or neither".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrackEvent {
    Birth { frame: u32, id: TrackId },
    Remove { frame: u32, id: TrackId },
    Falsify(FalsificationEvent),
    Rectify(RectificationOutcome),
}

impl TrackEvent {
    pub fn frame(&self) -> u32 {
        match self {
            TrackEvent::Birth { frame, .. } | TrackEvent::Remove { frame, .. } => *frame,
            TrackEvent::Falsify(e) => e.frame,
            TrackEvent::Rectify(r) => r.frame,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: TrackId,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u32,
    /// Active tracks, ordered by id.
    pub outputs: Vec<TrackOutput>,
    pub events: Vec<TrackEvent>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub frames: u32,
    pub births: u32,
    pub removals: u32,
    pub falsifications: u32,
    pub recoveries: u32,
    pub reassignments: u32,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    modules: Modules,
    image_diag: f64,
    tracks: Vec<Track>,
    ids: IdAllocator,
    frame: u32,
    summary: RunSummary,
}

impl Tracker {
    pub fn new(config: TrackerConfig, image_size: (f64, f64)) -> Result<Self> {
        Self::with_modules(config, image_size, Modules::default())
    }

    pub fn with_modules(config: TrackerConfig, image_size: (f64, f64), modules: Modules) -> Result<Self> {
        config.validate()?;
        modules.validate()?;
        let (w, h) = image_size;
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::Scenario(format!("invalid image size {w}x{h}")));
        }
        Ok(Tracker {
            config,
            modules,
            image_diag: (w * w + h * h).sqrt(),
            tracks: Vec::new(),
            ids: IdAllocator::default(),
            frame: 0,
            summary: RunSummary::default(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn modules(&self) -> Modules {
        self.modules
    }

    /// Live tracks (Active or Lost).
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn next_id(&self) -> TrackId {
        self.ids.peek()
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn finalize(&self) -> RunSummary {
        self.summary
    }

    fn validate_input(&self, frame: u32, detections: &[Detection]) -> Result<()> {
        let expected = self.frame + 1;
        if frame != expected {
            return Err(Error::FrameOrder { expected, got: frame });
        }
        for d in detections {
            if d.frame != frame {
                return Err(Error::DetectionFrame {
                    frame,
                    det_frame: d.frame,
                });
            }
            if !d.bbox.is_valid() {
                let b = d.bbox;
                return Err(Error::InvalidBox {
                    left: b.left,
                    top: b.top,
                    width: b.width,
                    height: b.height,
                });
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::InvalidScore(d.score));
            }
            if d.score >= self.config.tau && d.embedding.is_none() {
                return Err(Error::MissingEmbedding { frame });
            }
        }
        Ok(())
    }

    fn spawn(&mut self, det: &Detection, frame: u32, events: &mut Vec<TrackEvent>) {
        let id = self.ids.next_id();
        let mut t = Track::new(id, det, self.config.feature_cap, self.config.costq_cap);
        if let Some(e) = &det.embedding {
            push_feature(&mut t, frame, e, self.config.sample_period);
        }
        self.tracks.push(t);
        self.summary.births += 1;
        events.push(TrackEvent::Birth { frame, id });
    }

    /// Advances the tracker by one frame. Frames must be consecutive starting at 1.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<FrameResult> {
        self.validate_input(frame, detections)?;
        let cfg = self.config.clone();
        let mut events = Vec::new();

        for t in &mut self.tracks {
            t.motion = kf_predict(&t.motion);
        }

        let assoc = {
            let refs: Vec<&Track> = self.tracks.iter().collect();
            associate_two_stage(&refs, detections, &cfg, self.modules.ami, self.image_diag)?
        };

        // det index -> track index for this frame's committed matches.
        let mut holder: Vec<Option<usize>> = vec![None; detections.len()];
        let mut matched = vec![false; self.tracks.len()];
        for (ti, dj) in assoc.all_pairs() {
            holder[dj] = Some(ti);
            matched[ti] = true;
            let det = &detections[dj];
            let t = &mut self.tracks[ti];
            t.motion = kf_update(&t.motion, &det.bbox).unwrap_or_else(|_| kf_init(&det.bbox));
            t.status = TrackStatus::Active;
            t.lost_frames = 0;
            t.last_update = frame;
            t.score = det.score;
            if let Some(e) = &det.embedding {
                t.appearance = Some(e.clone());
                push_feature(t, frame, e, cfg.sample_period);
                if self.modules.idsd {
                    if let Some(ev) = idsd_update(t, e, frame, &cfg) {
                        self.summary.falsifications += 1;
                        events.push(TrackEvent::Falsify(ev));
                    }
                }
            }
        }

        let mut claimed = vec![false; detections.len()];
        let mut orphaned = vec![false; self.tracks.len()];
        let mut falsified: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].status == TrackStatus::Falsified)
            .collect();
        falsified.sort_by_key(|&i| self.tracks[i].id);
        for ti in falsified {
            if !self.modules.idsr {
                // Detection only: keep the binding, restart the metric.
                let t = &mut self.tracks[ti];
                t.cost_queue.clear();
                t.tspec = 0.0;
                t.above_count = 0;
                t.status = TrackStatus::Active;
                continue;
            }
            let own = holder.iter().position(|h| *h == Some(ti)).filter(|_| !orphaned[ti]);
            let outcome = idsr_rectify(
                &mut self.tracks[ti],
                detections,
                &claimed,
                frame,
                &cfg,
                &mut self.ids,
            );
            match outcome.kind {
                RectificationKind::Recovered { detection, .. } => {
                    self.summary.recoveries += 1;
                    events.push(TrackEvent::Rectify(outcome));
                    claimed[detection] = true;
                    if let Some(other) = holder[detection].filter(|&o| o != ti) {
                        let t = &mut self.tracks[other];
                        if t.status == TrackStatus::Falsified {
                            // Still awaiting its own rectification, now without a detection.
                            orphaned[other] = true;
                        } else {
                            // The impostor holding the true detection is retired.
                            t.status = TrackStatus::Removed;
                            matched[other] = true;
                            self.summary.removals += 1;
                            events.push(TrackEvent::Remove { frame, id: t.id });
                        }
                    }
                    holder[detection] = Some(ti);
                    if let Some(own) = own.filter(|&o| o != detection) {
                        // The detection it was wrongly following starts a new identity.
                        claimed[own] = true;
                        self.spawn(&detections[own], frame, &mut events);
                        holder[own] = Some(self.tracks.len() - 1);
                        matched.push(true);
                    }
                }
                RectificationKind::Reassigned { new_id } => {
                    self.summary.reassignments += 1;
                    events.push(TrackEvent::Rectify(outcome));
                    if orphaned[ti] {
                        // Its box went to a recovered track; nothing left to follow.
                        self.tracks[ti].status = TrackStatus::Removed;
                        self.summary.removals += 1;
                        events.push(TrackEvent::Remove { frame, id: new_id });
                    } else if let Some(own) = own {
                        claimed[own] = true;
                    }
                }
            }
        }

        for (ti, t) in self.tracks.iter_mut().enumerate() {
            if matched[ti] || t.status == TrackStatus::Removed {
                continue;
            }
            t.status = TrackStatus::Lost;
            t.lost_frames += 1;
            if t.lost_frames > cfg.max_lost {
                t.status = TrackStatus::Removed;
                self.summary.removals += 1;
                events.push(TrackEvent::Remove { frame, id: t.id });
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Removed);

        for &dj in &assoc.unmatched_high {
            if claimed[dj] || holder[dj].is_some() {
                continue;
            }
            self.spawn(&detections[dj], frame, &mut events);
        }

        let mut outputs: Vec<TrackOutput> = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Active && t.last_update == frame)
            .map(|t| TrackOutput {
                id: t.id,
                bbox: t.bbox(),
                score: t.score,
            })
            .collect();
        outputs.sort_by_key(|o| o.id);

        self.frame = frame;
        self.summary.frames += 1;
        Ok(FrameResult {
            frame,
            outputs,
            events,
        })
    }

    /// Runs a whole sequence of `(frame, detections)` pairs, filling gaps in the
    /// frame numbering with empty frames.
    pub fn run<'a>(
        &mut self,
        frames: impl IntoIterator<Item = (u32, &'a [Detection])>,
        last_frame: Option<u32>,
    ) -> Result<Vec<FrameResult>> {
        let mut out = Vec::new();
        for (frame, dets) in frames {
            while self.frame + 1 < frame {
                let f = self.frame + 1;
                out.push(self.step(f, &[])?);
            }
            out.push(self.step(frame, dets)?);
        }
        if let Some(last) = last_frame {
            while self.frame < last {
                let f = self.frame + 1;
                out.push(self.step(f, &[])?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Embedding;

    fn det(frame: u32, left: f64, emb: &[f64], score: f64) -> Detection {
        Detection::new(
            frame,
            BoundingBox::new(left, 100.0, 40.0, 100.0).unwrap(),
            score,
            Some(Embedding::unit(emb.to_vec()).unwrap()),
        )
    }

    fn tracker() -> Tracker {
        Tracker::new(TrackerConfig::default(), (1920.0, 1080.0)).unwrap()
    }

    #[test]
    fn empty_world() {
        let mut t = tracker();
        let r = t.step(1, &[]).unwrap();
        assert!(r.outputs.is_empty() && r.events.is_empty());
        assert_eq!(t.finalize(), RunSummary { frames: 1, ..Default::default() });
    }

    #[test]
    fn first_birth_gets_id_one() {
        let mut t = tracker();
        let r = t.step(1, &[det(1, 10.0, &[1.0, 0.0], 0.9)]).unwrap();
        assert_eq!(r.events, vec![TrackEvent::Birth { frame: 1, id: TrackId(1) }]);
        assert_eq!(r.outputs.len(), 1);
        assert_eq!(r.outputs[0].id, TrackId(1));
    }

    #[test]
    fn stationary_world_keeps_id() {
        let mut t = tracker();
        for f in 1..=100 {
            let r = t.step(f, &[det(f, 300.0, &[0.2, 0.9, 0.1], 0.9)]).unwrap();
            assert_eq!(r.outputs.len(), 1);
            assert_eq!(r.outputs[0].id, TrackId(1));
            if f > 1 {
                assert!(r.events.is_empty(), "frame {f}: {:?}", r.events);
            }
        }
        let s = t.finalize();
        assert_eq!(s.births, 1);
        assert_eq!(s.falsifications, 0);
    }

    #[test]
    fn removal_after_max_lost_plus_one() {
        let mut t = tracker();
        t.step(1, &[det(1, 300.0, &[1.0, 0.0], 0.9)]).unwrap();
        let max_lost = t.config().max_lost;
        for f in 2..=(1 + max_lost) {
            let r = t.step(f, &[]).unwrap();
            assert!(r.events.is_empty());
            assert_eq!(t.tracks().len(), 1);
        }
        let r = t.step(2 + max_lost, &[]).unwrap();
        assert_eq!(
            r.events,
            vec![TrackEvent::Remove { frame: 2 + max_lost, id: TrackId(1) }]
        );
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn lost_track_is_not_output() {
        let mut t = tracker();
        t.step(1, &[det(1, 300.0, &[1.0, 0.0], 0.9)]).unwrap();
        let r = t.step(2, &[]).unwrap();
        assert!(r.outputs.is_empty());
        let r = t.step(3, &[det(3, 300.0, &[1.0, 0.0], 0.9)]).unwrap();
        assert_eq!(r.outputs[0].id, TrackId(1));
    }

    #[test]
    fn frame_order_enforced() {
        let mut t = tracker();
        assert!(matches!(t.step(2, &[]), Err(Error::FrameOrder { expected: 1, got: 2 })));
        t.step(1, &[]).unwrap();
        assert!(t.step(1, &[]).is_err());
        assert!(matches!(
            t.step(2, &[det(3, 0.0, &[1.0], 0.9)]),
            Err(Error::DetectionFrame { .. })
        ));
    }

    #[test]
    fn idsr_without_idsd_rejected() {
        let m = Modules {
            ami: true,
            idsd: false,
            idsr: true,
        };
        assert!(Tracker::with_modules(TrackerConfig::default(), (100.0, 100.0), m).is_err());
    }

    #[test]
    fn identical_runs_identical_results() {
        let frames: Vec<Vec<Detection>> = (1..=40)
            .map(|f| {
                vec![
                    det(f, 100.0 + 3.0 * f as f64, &[1.0, 0.2, 0.0], 0.9),
                    det(f, 800.0 - 2.0 * f as f64, &[0.0, 0.3, 1.0], 0.5),
                ]
            })
            .collect();
        let run = || {
            let mut t = tracker();
            (1..=40u32)
                .map(|f| t.step(f, &frames[f as usize - 1]).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
