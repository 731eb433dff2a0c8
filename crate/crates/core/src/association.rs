//! Local data association between detections and trackers.
//!
//! Each candidate pair is scored by the product of a gated geometric score
//! (Mahalanobis distance on the ground position, divided by `alpha`) and the
//! appearance score (minimum cosine distance to the tracker's gallery).
//! Gated pairs are excluded and the remaining ones are solved as a global
//! one-to-one minimum-cost assignment.

use nalgebra::Matrix2;

use crate::appearance::{appearance_similarity, Gallery};
use crate::assignment::{hungarian, Lex};
use crate::manager::TrackerId;
use crate::model::{spd_inverse, GaussianBelief, Measurement};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationParams {
    pub alpha: f64,
    pub tau: f64,
    /// When false the appearance score is fixed to 1 (geometry only).
    pub use_appearance: bool,
}

impl AssociationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha and tau must be positive, got alpha={} tau={}",
                self.alpha, self.tau
            )));
        }
        Ok(())
    }
}

/// A tracker as seen by the association step.
#[derive(Debug, Clone, Copy)]
pub struct TrackCandidate<'a> {
    pub id: TrackerId,
    pub belief: &'a GaussianBelief,
    pub gallery: Option<&'a Gallery>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationCandidate {
    pub measurement_index: usize,
    pub tracker_id: TrackerId,
    pub distance: f64,
    pub s_d: f64,
    pub s_a: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssociationResult {
    pub matches: Vec<AssociationCandidate>,
    pub unmatched_measurements: Vec<usize>,
    pub unmatched_trackers: Vec<TrackerId>,
}

/// Mahalanobis distance between measured and predicted ground positions, with
/// `V = P_xy + R_xy`.
pub fn mahalanobis(z: &Measurement, prediction: &GaussianBelief) -> Result<f64> {
    let v: Matrix2<f64> = prediction.cov.fixed_view::<2, 2>(0, 0) + z.r.fixed_view::<2, 2>(0, 0);
    let v_inv = spd_inverse(&v, "position innovation covariance V")?;
    let diff = nalgebra::Vector2::new(z.z[0] - prediction.mean[0], z.z[1] - prediction.mean[1]);
    Ok((diff.transpose() * v_inv * diff)[(0, 0)].max(0.0).sqrt())
}

/// Geometric score: `d / alpha` inside the gate, 1 outside.
pub fn geometric_score(d: f64, alpha: f64, tau: f64) -> f64 {
    if d < tau {
        d / alpha
    } else {
        1.0
    }
}

pub fn associate(measurements: &[Measurement], trackers: &[TrackCandidate<'_>], params: &AssociationParams) -> Result<AssociationResult> {
    params.validate()?;
    // Tracker rank for the final tie-break on smaller id.
    let mut order: Vec<usize> = (0..trackers.len()).collect();
    order.sort_by_key(|&i| trackers[i].id);
    let mut rank = vec![0.0; trackers.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r as f64;
    }

    let mut candidates: Vec<Vec<Option<AssociationCandidate>>> = Vec::with_capacity(measurements.len());
    for (j, z) in measurements.iter().enumerate() {
        let mut row = Vec::with_capacity(trackers.len());
        for t in trackers {
            let d = mahalanobis(z, t.belief)?;
            if d >= params.tau {
                row.push(None);
                continue;
            }
            let s_d = geometric_score(d, params.alpha, params.tau);
            let s_a = match (params.use_appearance, t.gallery) {
                (true, Some(g)) if !g.is_empty() => appearance_similarity(&z.embedding, g)?,
                _ => 1.0,
            };
            row.push(Some(AssociationCandidate { measurement_index: j, tracker_id: t.id, distance: d, s_d, s_a, combined: s_d * s_a }));
        }
        candidates.push(row);
    }

    let cost: Vec<Vec<Lex<4>>> = candidates
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, c)| match c {
                    Some(c) => Lex([0.0, c.combined, c.distance, rank[i]]),
                    None => Lex([1.0, 0.0, 0.0, 0.0]),
                })
                .collect()
        })
        .collect();

    let assignment = hungarian(&cost);
    let mut result = AssociationResult::default();
    let mut tracker_used = vec![false; trackers.len()];
    for (j, assigned) in assignment.into_iter().enumerate() {
        match assigned.and_then(|i| candidates[j][i].clone().map(|c| (i, c))) {
            Some((i, c)) => {
                tracker_used[i] = true;
                result.matches.push(c);
            }
            None => result.unmatched_measurements.push(j),
        }
    }
    result.unmatched_trackers = trackers
        .iter()
        .zip(&tracker_used)
        .filter(|(_, used)| !**used)
        .map(|(t, _)| t.id)
        .collect();
    Ok(result)
}
