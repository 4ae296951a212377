//! Constant-velocity Kalman filter over (cx, cy, aspect, height) and their
//! per-frame velocities.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::types::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
type MeasVector = SVector<f64, 4>;
type MeasMatrix = SMatrix<f64, 4, 8>;

/// Position noise as a fraction of box height.
pub const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
/// Velocity noise as a fraction of box height.
pub const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl MotionState {
    pub fn height(&self) -> f64 {
        self.mean[3]
    }

    /// Current box estimate. Width is aspect times height.
    pub fn bbox(&self) -> BoundingBox {
        let (cx, cy, a, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        let w = a * h;
        BoundingBox {
            left: cx - w / 2.0,
            top: cy - h / 2.0,
            width: w,
            height: h,
        }
    }

    /// (cx, cy, w, h) of the current estimate.
    pub fn cxcywh(&self) -> [f64; 4] {
        [
            self.mean[0],
            self.mean[1],
            self.mean[2] * self.mean[3],
            self.mean[3],
        ]
    }
}

fn measurement(b: &BoundingBox) -> MeasVector {
    let (cx, cy) = b.center();
    MeasVector::new(cx, cy, b.width / b.height, b.height)
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> MeasMatrix {
    MeasMatrix::identity()
}

fn symmetrize(m: &StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}

pub fn kf_init(b: &BoundingBox) -> MotionState {
    let z = measurement(b);
    let mut mean = StateVector::zeros();
    mean.fixed_rows_mut::<4>(0).copy_from(&z);
    let h = b.height;
    let std = [
        2.0 * STD_WEIGHT_POSITION * h,
        2.0 * STD_WEIGHT_POSITION * h,
        1e-2,
        2.0 * STD_WEIGHT_POSITION * h,
        10.0 * STD_WEIGHT_VELOCITY * h,
        10.0 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        10.0 * STD_WEIGHT_VELOCITY * h,
    ];
    let covariance = StateCovariance::from_diagonal(&StateVector::from_iterator(
        std.iter().map(|s| s * s),
    ));
    MotionState { mean, covariance }
}

pub fn kf_predict(state: &MotionState) -> MotionState {
    let h = state.height();
    let std = [
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_POSITION * h,
        1e-2,
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h,
        STD_WEIGHT_VELOCITY * h,
        1e-5,
        STD_WEIGHT_VELOCITY * h,
    ];
    let q = StateCovariance::from_diagonal(&StateVector::from_iterator(std.iter().map(|s| s * s)));
    let f = transition();
    MotionState {
        mean: f * state.mean,
        covariance: symmetrize(&(f * state.covariance * f.transpose() + q)),
    }
}

/// Kalman correction against a box measurement.
///
/// Uses the Joseph form so the posterior stays symmetric PSD. Fails when the
/// innovation covariance cannot be Cholesky-factored; the caller is expected to
/// re-initialize the track from the box.
pub fn kf_update(state: &MotionState, b: &BoundingBox) -> Result<MotionState> {
    let h_mat = observation();
    let ht = state.height();
    let r_std = [
        STD_WEIGHT_POSITION * ht,
        STD_WEIGHT_POSITION * ht,
        1e-1,
        STD_WEIGHT_POSITION * ht,
    ];
    let r = SMatrix::<f64, 4, 4>::from_diagonal(&MeasVector::from_iterator(
        r_std.iter().map(|s| s * s),
    ));
    let s = h_mat * state.covariance * h_mat.transpose() + r;
    let chol = s.cholesky().ok_or(Error::DegenerateCovariance)?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T since S is symmetric.
    let gain = chol.solve(&(h_mat * state.covariance)).transpose();
    let innovation = measurement(b) - h_mat * state.mean;
    let mean = state.mean + gain * innovation;
    let i_kh = StateCovariance::identity() - gain * h_mat;
    let covariance =
        i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose();
    if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateCovariance);
    }
    Ok(MotionState {
        mean,
        covariance: symmetrize(&covariance),
    })
}
