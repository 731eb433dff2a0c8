//! Target state, constant-velocity dynamics and Gaussian beliefs.
//!
//! The state is a cylinder on the ground plane, `(x, y, w, h, vx, vy)`, with
//! velocities expressed per frame. Only the position follows a constant
//! velocity model; size and velocity are random walks driven by `Q`.

use nalgebra::{Matrix4, Matrix4x6, Matrix6, SMatrix, Vector4, Vector6};
use serde::{Deserialize, Serialize};

use crate::appearance::Embedding;
use crate::{Error, Result};

pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Vec4 = Vector4<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Mat4x6 = Matrix4x6<f64>;

pub const STATE_DIM: usize = 6;
pub const MEAS_DIM: usize = 4;

/// Eigenvalue floor used when checking positive definiteness.
pub const PD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub vx: f64,
    pub vy: f64,
}

impl TargetState {
    pub fn new(x: f64, y: f64, w: f64, h: f64, vx: f64, vy: f64) -> Result<Self> {
        let s = Self { x, y, w, h, vx, vy };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_vector().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("target state"));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cylinder size must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(self.x, self.y, self.w, self.h, self.vx, self.vy)
    }

    /// Unchecked conversion; filter outputs are not re-validated on every step.
    pub fn from_vector(v: &Vec6) -> Self {
        Self { x: v[0], y: v[1], w: v[2], h: v[3], vx: v[4], vy: v[5] }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }
}

/// A single ground-plane cylinder observation reported by one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub z: Vec4,
    pub r: Mat4,
    pub embedding: Embedding,
    pub frame: u64,
    pub camera_id: usize,
}

impl Measurement {
    pub fn new(z: Vec4, r: Mat4, embedding: Embedding, frame: u64, camera_id: usize) -> Result<Self> {
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("measurement"));
        }
        if z[2] <= 0.0 || z[3] <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "measured cylinder size must be positive, got w={} h={}",
                z[2], z[3]
            )));
        }
        check_spd(&r, "measurement covariance")?;
        Ok(Self { z, r, embedding, frame, camera_id })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.z[0], self.z[1])
    }
}

/// Linear dynamics `x(k+1) = A x(k) + w`, `z = H x + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub a: Mat6,
    pub h: Mat4x6,
    pub q: Mat6,
    pub dt: f64,
}

impl DynamicsModel {
    pub const DEFAULT_Q_POS: f64 = 0.05;
    pub const DEFAULT_Q_VEL: f64 = 0.01;
    pub const DEFAULT_Q_SIZE: f64 = 0.01;

    /// Builds the constant-velocity model with a diagonal process covariance
    /// `diag(q_pos, q_pos, q_size, q_size, q_vel, q_vel)`.
    pub fn new(dt: f64, q_pos: f64, q_vel: f64, q_size: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        for (name, q) in [("q_pos", q_pos), ("q_vel", q_vel), ("q_size", q_size)] {
            if !(q >= 0.0) || !q.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {q}")));
            }
        }
        let mut a = Mat6::identity();
        a[(0, 4)] = dt;
        a[(1, 5)] = dt;
        let mut h = Mat4x6::zeros();
        for i in 0..MEAS_DIM {
            h[(i, i)] = 1.0;
        }
        let q = Mat6::from_diagonal(&Vec6::new(q_pos, q_pos, q_size, q_size, q_vel, q_vel));
        Ok(Self { a, h, q, dt })
    }
}

impl Default for DynamicsModel {
    fn default() -> Self {
        Self::new(1.0, Self::DEFAULT_Q_POS, Self::DEFAULT_Q_VEL, Self::DEFAULT_Q_SIZE)
            .expect("default dynamics are valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vec6,
    pub cov: Mat6,
}

impl GaussianBelief {
    pub fn new(mean: Vec6, cov: Mat6) -> Result<Self> {
        let b = Self { mean, cov };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("belief mean"));
        }
        check_spd(&self.cov, "belief covariance")
    }

    pub fn state(&self) -> TargetState {
        TargetState::from_vector(&self.mean)
    }

    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }
}

/// Propagates the mean through `A`. The covariance is left untouched; its
/// propagation happens at the end of the consensus update.
pub fn predict(belief: &GaussianBelief, dynamics: &DynamicsModel) -> Result<GaussianBelief> {
    if !belief.mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("belief mean"));
    }
    Ok(GaussianBelief { mean: dynamics.a * belief.mean, cov: belief.cov })
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Checks symmetry (relative 1e-9) and that every eigenvalue exceeds [`PD_TOLERANCE`].
pub fn check_spd<const N: usize>(m: &SMatrix<f64, N, N>, what: &'static str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::NotPositiveDefinite(what));
    }
    let eig = nalgebra::DMatrix::from_column_slice(N, N, symmetrize(m).as_slice()).symmetric_eigenvalues();
    if eig.iter().any(|&e| e <= PD_TOLERANCE) {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(())
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse<const N: usize>(m: &SMatrix<f64, N, N>, what: &'static str) -> Result<SMatrix<f64, N, N>> {
    let chol = symmetrize(m).cholesky().ok_or(Error::Singular(what))?;
    let inv = chol.inverse();
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular(what));
    }
    Ok(symmetrize(&inv))
}
