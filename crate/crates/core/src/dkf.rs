//! Information-form measurement encoding and the Kalman-consensus update.
//!
//! Each camera turns its associated measurement into an information pair
//! `(u, U) = (Hᵀ R⁻¹ z, Hᵀ R⁻¹ H)`. Pairs from the closed neighbourhood are
//! summed, and the fused information corrects the camera's own prediction
//! while a consensus term pulls it towards the neighbours' predictions.

use crate::model::{spd_inverse, symmetrize, DynamicsModel, GaussianBelief, Mat4x6, Mat6, Measurement, Vec6};
use crate::{Error, Result};

/// Sensor information vector and matrix. `(0, 0)` encodes "no measurement".
#[derive(Debug, Clone, PartialEq)]
pub struct InformationPair {
    pub u: Vec6,
    pub big_u: Mat6,
}

impl InformationPair {
    pub fn zero() -> Self {
        Self { u: Vec6::zeros(), big_u: Mat6::zeros() }
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|v| *v == 0.0) && self.big_u.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusInput {
    pub own_pair: InformationPair,
    pub neighbor_pairs: Vec<InformationPair>,
    pub own_prediction: Vec6,
    pub neighbor_predictions: Vec<Vec6>,
}

impl ConsensusInput {
    /// Input for a camera with no neighbours.
    pub fn isolated(own_pair: InformationPair, own_prediction: Vec6) -> Self {
        Self { own_pair, neighbor_pairs: Vec::new(), own_prediction, neighbor_predictions: Vec::new() }
    }
}

pub fn encode_measurement(z: &Measurement, h: &Mat4x6) -> Result<InformationPair> {
    let r_inv = spd_inverse(&z.r, "measurement covariance R")?;
    let ht_rinv = h.transpose() * r_inv;
    Ok(InformationPair { u: ht_rinv * z.z, big_u: symmetrize(&(ht_rinv * h)) })
}

/// Sums the own pair with every neighbour pair.
pub fn fuse(input: &ConsensusInput) -> (Vec6, Mat6) {
    input.neighbor_pairs.iter().fold(
        (input.own_pair.u, input.own_pair.big_u),
        |(y, s), p| (y + p.u, s + p.big_u),
    )
}

/// Consensus gain `1 / (‖M‖_F + 1)`.
pub fn consensus_gain(m: &Mat6) -> f64 {
    1.0 / (m.norm() + 1.0)
}

/// Kalman-consensus correction of the prediction carried in `input`.
///
/// `belief.cov` is the predicted covariance `P(k)`. The returned belief holds the
/// corrected mean `x̂(k)` and the already propagated covariance
/// `P(k+1) = A M Aᵀ + Q`, so the next frame only needs to predict the mean.
pub fn consensus_update(belief: &GaussianBelief, input: &ConsensusInput, dynamics: &DynamicsModel) -> Result<GaussianBelief> {
    let x_bar = input.own_prediction;
    if !x_bar.iter().all(|v| v.is_finite()) || input.neighbor_predictions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("prediction"));
    }
    let (y, s) = fuse(input);
    let p_inv = spd_inverse(&belief.cov, "prior covariance P")?;
    let m = spd_inverse(&(p_inv + s), "P⁻¹ + S")?;
    let gamma = consensus_gain(&m);
    let disagreement = input
        .neighbor_predictions
        .iter()
        .fold(Vec6::zeros(), |acc, xj| acc + (xj - x_bar));
    let mean = x_bar + m * (y - s * x_bar) + m * disagreement * gamma;
    let cov = symmetrize(&(dynamics.a * m * dynamics.a.transpose() + dynamics.q));
    if !mean.iter().all(|v| v.is_finite()) || !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("consensus update"));
    }
    Ok(GaussianBelief { mean, cov })
}
