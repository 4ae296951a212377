//! Tracking-by-detection multi-object tracker that watches each track's
//! appearance history for identity switches, falsifies bindings whose
//! appearance cost turns unstable, and rectifies them from the track's oldest
//! stored feature.

pub mod association;
pub mod cli;
pub mod config;
pub mod error;
pub mod identity;
mod kv;
pub mod metrics;
pub mod mot_io;
pub mod motion;
pub mod pipeline;
pub mod simulator;
pub mod types;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use pipeline::{FrameResult, Modules, RunSummary, TrackEvent, Tracker};
pub use types::{BoundingBox, Detection, Embedding, TrackId, TrackStatus};
