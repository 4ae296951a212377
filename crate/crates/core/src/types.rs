//! Domain types shared by the tracker modules.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::motion::MotionState;

/// Axis-aligned box in pixel coordinates, MOT convention (left, top, width, height).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        let b = BoundingBox {
            left,
            top,
            width,
            height,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidBox {
                left,
                top,
                width,
                height,
            })
        }
    }

    pub fn from_center(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn is_valid(&self) -> bool {
        [self.left, self.top, self.width, self.height]
            .iter()
            .all(|v| v.is_finite())
            && self.width > 0.0
            && self.height > 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// (cx, cy, w, h) vector used by the motion-space cost error.
    pub fn cxcywh(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.width, self.height]
    }
}

/// Appearance feature vector. Ingest paths store it unit-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps raw values without normalizing. Rejects non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding);
        }
        Ok(Embedding(values))
    }

    /// Wraps and L2-normalizes. Rejects zero vectors.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        Self::new(values)?.normalized()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Embedding(self.0.iter().map(|v| v / n).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, k: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * k).collect())
    }
}

/// One frame-level detector observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub score: f64,
    pub embedding: Option<Embedding>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, score: f64, embedding: Option<Embedding>) -> Self {
        Detection {
            frame,
            bbox,
            score,
            embedding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrackId(pub u64);

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Lost,
    Falsified,
    Removed,
}

/// Fixed-capacity FIFO; pushing onto a full queue evicts the oldest entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RingQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> RingQueue<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring queue capacity must be positive");
        RingQueue {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.items.len() == self.capacity {
            self.items.pop_front()
        } else {
            None
        };
        self.items.push_back(item);
        evicted
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn oldest(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn newest(&self) -> Option<&T> {
        self.items.back()
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = &T> + DoubleEndedIterator {
        self.items.iter()
    }
}

/// A sampled appearance feature and the frame it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFeature {
    pub frame: u32,
    pub embedding: Embedding,
}

/// A persistent trajectory.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub motion: MotionState,
    pub feature_queue: RingQueue<SampledFeature>,
    pub cost_queue: RingQueue<f64>,
    pub status: TrackStatus,
    pub tspec: f64,
    pub above_count: u32,
    pub last_update: u32,
    pub lost_frames: u32,
    /// Most recent matched embedding; the appearance side of the fused cost.
    pub appearance: Option<Embedding>,
    /// Score of the most recent matched detection.
    pub score: f64,
}

impl Track {
    pub fn new(
        id: TrackId,
        det: &Detection,
        feature_cap: usize,
        costq_cap: usize,
    ) -> Self {
        Track {
            id,
            motion: crate::motion::kf_init(&det.bbox),
            feature_queue: RingQueue::new(feature_cap),
            cost_queue: RingQueue::new(costq_cap),
            status: TrackStatus::Active,
            tspec: 0.0,
            above_count: 0,
            last_update: det.frame,
            lost_frames: 0,
            appearance: det.embedding.clone(),
            score: det.score,
        }
    }

    pub fn is_live(&self) -> bool {
        matches!(self.status, TrackStatus::Active | TrackStatus::Lost)
    }

    pub fn bbox(&self) -> BoundingBox {
        self.motion.bbox()
    }

    pub fn last_pushed_frame(&self) -> Option<u32> {
        self.feature_queue.newest().map(|f| f.frame)
    }
}
