//! Tracker configuration: every tunable with its default, plus validation and
//! the flat `key=value` file format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Weight of the IoU cost in the fused cost; appearance gets `1 - alpha`.
    pub alpha: f64,
    /// Ambiguity filter: fused costs above this are forbidden.
    pub d_theta: f64,
    /// Ambiguity filter: an entry at least `rho` times its row/column minimum is pruned.
    pub rho: f64,
    /// High-confidence detection threshold.
    pub tau: f64,
    /// Falsification threshold on the cost-queue variance.
    pub t_theta: f64,
    /// Rectification threshold on the cosine cost against the oldest feature.
    pub c_theta: f64,
    /// A track lost for more than this many frames is removed.
    pub max_lost: u32,
    /// Frames between feature-queue pushes.
    pub sample_period: u32,
    pub feature_cap: usize,
    pub costq_cap: usize,
    /// Falsify once the variance has exceeded `t_theta` for more than this many
    /// consecutive frames.
    pub persist_frames: u32,
    /// Fraction of the feature queue (oldest first) used as the comparison history.
    pub history_frac: f64,
    /// Motion gate on the diagonal-normalized (cx, cy, w, h) error.
    pub epsilon_gate: f64,
    /// Feature-queue length below which switch detection stays inactive.
    pub min_history: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            alpha: 0.5,
            d_theta: 0.2,
            rho: 2.0,
            tau: 0.6,
            t_theta: 0.01,
            c_theta: 0.1,
            max_lost: 30,
            sample_period: 5,
            feature_cap: 30,
            costq_cap: 30,
            persist_frames: 10,
            history_frac: 2.0 / 3.0,
            epsilon_gate: 0.3,
            min_history: 6,
        }
    }
}

fn range_err(field: &'static str, value: impl ToString, expected: &'static str) -> Error {
    Error::ConfigRange {
        field,
        value: value.to_string(),
        expected,
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.alpha) {
            return Err(range_err("alpha", self.alpha, "0 < alpha < 1"));
        }
        if !open_unit(self.d_theta) {
            return Err(range_err("d_theta", self.d_theta, "0 < d_theta < 1"));
        }
        if !(self.rho.is_finite() && self.rho > 1.0) {
            return Err(range_err("rho", self.rho, "finite rho > 1"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(range_err("tau", self.tau, "0 <= tau <= 1"));
        }
        if !(self.t_theta.is_finite() && self.t_theta > 0.0) {
            return Err(range_err("t_theta", self.t_theta, "finite t_theta > 0"));
        }
        if !(self.c_theta > 0.0 && self.c_theta <= 2.0) {
            return Err(range_err("c_theta", self.c_theta, "0 < c_theta <= 2"));
        }
        if self.sample_period == 0 {
            return Err(range_err("sample_period", self.sample_period, ">= 1"));
        }
        if self.feature_cap == 0 {
            return Err(range_err("feature_cap", self.feature_cap, ">= 1"));
        }
        if self.costq_cap == 0 {
            return Err(range_err("costq_cap", self.costq_cap, ">= 1"));
        }
        if !(self.history_frac > 0.0 && self.history_frac <= 1.0) {
            return Err(range_err("history_frac", self.history_frac, "0 < history_frac <= 1"));
        }
        if self.epsilon_gate.is_nan() || self.epsilon_gate < 0.0 {
            return Err(range_err("epsilon_gate", self.epsilon_gate, "epsilon_gate >= 0"));
        }
        if self.min_history == 0
            || self.min_history > self.feature_cap
            || history_count(self.history_frac, self.min_history) == 0
        {
            return Err(range_err(
                "min_history",
                self.min_history,
                "1 <= min_history <= feature_cap with a non-empty history cut",
            ));
        }
        Ok(())
    }

    /// Parses `key=value` text; keys not present keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrackerConfig::default();
        for e in kv::entries(text)? {
            match e.key {
                "alpha" => cfg.alpha = kv::value(&e)?,
                "d_theta" => cfg.d_theta = kv::value(&e)?,
                "rho" => cfg.rho = kv::value(&e)?,
                "tau" => cfg.tau = kv::value(&e)?,
                "t_theta" => cfg.t_theta = kv::value(&e)?,
                "c_theta" => cfg.c_theta = kv::value(&e)?,
                "max_lost" => cfg.max_lost = kv::value(&e)?,
                "sample_period" => cfg.sample_period = kv::value(&e)?,
                "feature_cap" => cfg.feature_cap = kv::value(&e)?,
                "costq_cap" => cfg.costq_cap = kv::value(&e)?,
                "persist_frames" => cfg.persist_frames = kv::value(&e)?,
                "history_frac" => cfg.history_frac = kv::value(&e)?,
                "epsilon_gate" => cfg.epsilon_gate = kv::value(&e)?,
                "min_history" => cfg.min_history = kv::value(&e)?,
                other => return Err(Error::UnknownKey(other.to_string())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "alpha={}", self.alpha);
        let _ = writeln!(s, "d_theta={}", self.d_theta);
        let _ = writeln!(s, "rho={}", self.rho);
        let _ = writeln!(s, "tau={}", self.tau);
        let _ = writeln!(s, "t_theta={}", self.t_theta);
        let _ = writeln!(s, "c_theta={}", self.c_theta);
        let _ = writeln!(s, "max_lost={}", self.max_lost);
        let _ = writeln!(s, "sample_period={}", self.sample_period);
        let _ = writeln!(s, "feature_cap={}", self.feature_cap);
        let _ = writeln!(s, "costq_cap={}", self.costq_cap);
        let _ = writeln!(s, "persist_frames={}", self.persist_frames);
        let _ = writeln!(s, "history_frac={}", self.history_frac);
        let _ = writeln!(s, "epsilon_gate={}", self.epsilon_gate);
        let _ = writeln!(s, "min_history={}", self.min_history);
        s
    }
}

/// Number of oldest features compared against: `floor(frac * len)`.
///
/// The small bias absorbs representation error so that e.g. 2/3 of 9 is 6.
pub fn history_count(frac: f64, len: usize) -> usize {
    (frac * len as f64 + 1e-9).floor() as usize
}

pub fn load_config(path: impl AsRef<Path>) -> Result<TrackerConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrackerConfig::from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = TrackerConfig::from_text("").unwrap();
        assert_eq!(cfg, TrackerConfig::default());
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.d_theta, 0.2);
        assert_eq!(cfg.tau, 0.6);
        assert_eq!(cfg.t_theta, 0.01);
        assert_eq!(cfg.c_theta, 0.1);
        assert_eq!(cfg.max_lost, 30);
        assert_eq!(cfg.sample_period, 5);
        assert_eq!(cfg.feature_cap, 30);
        assert_eq!(cfg.costq_cap, 30);
        assert_eq!(cfg.persist_frames, 10);
    }

    #[test]
    fn alpha_out_of_range_names_field() {
        match TrackerConfig::from_text("alpha=1.5") {
            Err(Error::ConfigRange { field, .. }) => assert_eq!(field, "alpha"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn override_keeps_other_defaults() {
        let cfg = TrackerConfig::from_text("t_theta=0.05\n").unwrap();
        assert_eq!(cfg.t_theta, 0.05);
        assert_eq!(
            cfg,
            TrackerConfig {
                t_theta: 0.05,
                ..TrackerConfig::default()
            }
        );
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            TrackerConfig::from_text("gamma=1"),
            Err(Error::UnknownKey(k)) if k == "gamma"
        ));
    }

    #[test]
    fn malformed_value_carries_line() {
        match TrackerConfig::from_text("# c\nrho=abc") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_config("/nonexistent/tracker.cfg"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn each_range_violation_names_its_field() {
        let cases: &[(&str, &str)] = &[
            ("d_theta=1.0", "d_theta"),
            ("rho=1.0", "rho"),
            ("tau=1.2", "tau"),
            ("t_theta=0", "t_theta"),
            ("c_theta=-0.1", "c_theta"),
            ("sample_period=0", "sample_period"),
            ("feature_cap=0", "feature_cap"),
            ("costq_cap=0", "costq_cap"),
            ("history_frac=0", "history_frac"),
            ("epsilon_gate=-1", "epsilon_gate"),
            ("min_history=40", "min_history"),
            ("min_history=1", "min_history"),
        ];
        for (text, want) in cases {
            match TrackerConfig::from_text(text) {
                Err(Error::ConfigRange { field, .. }) => assert_eq!(&field, want, "{text}"),
                other => panic!("{text}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let cfg = TrackerConfig {
            alpha: 0.35,
            rho: 3.5,
            max_lost: 12,
            ..TrackerConfig::default()
        };
        assert_eq!(TrackerConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        let d = TrackerConfig::default();
        assert_eq!(TrackerConfig::from_text(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn history_cut_is_floor() {
        assert_eq!(history_count(2.0 / 3.0, 9), 6);
        assert_eq!(history_count(2.0 / 3.0, 6), 4);
        assert_eq!(history_count(2.0 / 3.0, 10), 6);
        assert_eq!(history_count(2.0 / 3.0, 1), 0);
    }
}
