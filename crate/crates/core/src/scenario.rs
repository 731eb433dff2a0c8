//! Synthetic ground truth, camera models and detection generation.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::appearance::{random_embedding, synthetic_embedding, DEFAULT_EMBEDDING_DIM};
use crate::model::{check_spd, symmetrize, Mat4, Measurement, Vec4};
use crate::{Error, Result};

/// Added to a zero or singular detection noise so the reported covariance
/// stays positive definite.
pub const NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTrack {
    pub identity_seed: u64,
    pub waypoints: Vec<Waypoint>,
    /// Cylinder `(w, h)` in metres.
    pub size: (f64, f64),
    /// Inclusive frame intervals.
    pub presence: Vec<(u64, u64)>,
}

impl GroundTruthTrack {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::InvalidParameter(format!("track {} has no waypoints", self.identity_seed)));
        }
        if self.waypoints.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return Err(Error::InvalidParameter(format!("track {} waypoints must increase strictly in frame", self.identity_seed)));
        }
        if self.waypoints.iter().any(|w| !w.x.is_finite() || !w.y.is_finite()) {
            return Err(Error::NonFinite("waypoint"));
        }
        if !(self.size.0 > 0.0 && self.size.1 > 0.0) {
            return Err(Error::InvalidParameter(format!("track {} size must be positive", self.identity_seed)));
        }
        if self.presence.iter().any(|(a, b)| a > b) {
            return Err(Error::InvalidParameter(format!("track {} has an empty presence interval", self.identity_seed)));
        }
        Ok(())
    }

    pub fn is_present(&self, frame: u64) -> bool {
        let (first, last) = (self.waypoints[0].frame, self.waypoints[self.waypoints.len() - 1].frame);
        frame >= first && frame <= last && self.presence.iter().any(|&(a, b)| frame >= a && frame <= b)
    }

    /// Interpolated ground position, `None` when absent.
    pub fn position(&self, frame: u64) -> Option<(f64, f64)> {
        if !self.is_present(frame) {
            return None;
        }
        let i = self.waypoints.partition_point(|w| w.frame <= frame);
        let a = self.waypoints[i - 1];
        if a.frame == frame || i == self.waypoints.len() {
            return Some((a.x, a.y));
        }
        let b = self.waypoints[i];
        let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
        Some((a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
    }

    pub fn state(&self, frame: u64) -> Option<Vec4> {
        self.position(frame).map(|(x, y)| Vec4::new(x, y, self.size.0, self.size.1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub camera_id: usize,
    /// Convex ground polygon, either winding.
    pub fov: Vec<(f64, f64)>,
    pub detection_noise: Mat4,
    pub miss_probability: f64,
    pub false_positive_rate: f64,
    #[serde(default)]
    pub homography: Option<Matrix3<f64>>,
    /// Ground point the camera looks from; needed for occlusion.
    #[serde(default)]
    pub viewpoint: Option<(f64, f64)>,
    /// A target is hidden when a target nearer to the viewpoint stands
    /// within this ground distance. Zero disables occlusion.
    #[serde(default)]
    pub occlusion_radius: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.fov.len() < 3 {
            return Err(Error::InvalidParameter(format!("camera {} fov needs at least 3 vertices", self.camera_id)));
        }
        if !is_convex(&self.fov) {
            return Err(Error::InvalidParameter(format!("camera {} fov is not convex", self.camera_id)));
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err(Error::InvalidParameter(format!("camera {} miss probability {} outside [0, 1]", self.camera_id, self.miss_probability)));
        }
        if !(self.false_positive_rate >= 0.0) || !self.false_positive_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("camera {} false positive rate must be non-negative", self.camera_id)));
        }
        if !(self.occlusion_radius >= 0.0) || !self.occlusion_radius.is_finite() {
            return Err(Error::InvalidParameter(format!("camera {} occlusion radius must be non-negative", self.camera_id)));
        }
        check_spd(&(self.detection_noise + Mat4::identity() * NOISE_FLOOR), "detection noise")?;
        if let Some(h) = &self.homography {
            if h.determinant().abs() < 1e-12 || !h.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidParameter(format!("camera {} homography is not invertible", self.camera_id)));
            }
        }
        Ok(())
    }

    pub fn sees(&self, x: f64, y: f64) -> bool {
        polygon_contains(&self.fov, (x, y))
    }

    /// Whether `target` is hidden behind any of `others`.
    pub fn occluded(&self, target: (f64, f64), others: &[(f64, f64)]) -> bool {
        let Some(eye) = self.viewpoint else { return false };
        if self.occlusion_radius <= 0.0 {
            return false;
        }
        let range = (target.0 - eye.0).hypot(target.1 - eye.1);
        others.iter().any(|&o| {
            let gap = (o.0 - target.0).hypot(o.1 - target.1);
            gap > 0.0 && gap < self.occlusion_radius && (o.0 - eye.0).hypot(o.1 - eye.1) < range
        })
    }

    /// Covariance reported with each detection.
    pub fn reported_noise(&self) -> Mat4 {
        let r = symmetrize(&self.detection_noise);
        if check_spd(&r, "detection noise").is_ok() {
            r
        } else {
            r + Mat4::identity() * NOISE_FLOOR
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        self.fov.iter().fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |(a, b, c, d), &(x, y)| {
            (a.min(x), b.min(y), c.max(x), d.max(y))
        })
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn is_convex(poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]);
        if c.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = c.signum();
        } else if c.signum() != sign {
            return false;
        }
    }
    sign != 0.0
}

/// Point-in-convex-polygon test, boundary inclusive.
pub fn polygon_contains(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = poly.len();
    let (mut pos, mut neg) = (false, false);
    for i in 0..n {
        let c = cross(poly[i], poly[(i + 1) % n], p);
        if c > 1e-12 {
            pos = true;
        } else if c < -1e-12 {
            neg = true;
        }
        if pos && neg {
            return false;
        }
    }
    true
}

fn default_embedding_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub tracks: Vec<GroundTruthTrack>,
    pub cameras: Vec<CameraModel>,
    pub frame_count: u64,
    pub embedding_noise: f64,
    pub seed: u64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::InvalidParameter("frame count must be positive".into()));
        }
        if !(self.embedding_noise >= 0.0) || !self.embedding_noise.is_finite() {
            return Err(Error::InvalidParameter("embedding noise must be non-negative".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        if self.cameras.is_empty() {
            return Err(Error::InvalidParameter("scenario needs at least one camera".into()));
        }
        for t in &self.tracks {
            t.validate()?;
        }
        let mut ids: Vec<usize> = self.cameras.iter().map(|c| c.camera_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("camera ids must be unique".into()));
        }
        for c in &self.cameras {
            c.validate()?;
        }
        Ok(())
    }

    pub fn camera(&self, camera_id: usize) -> Result<&CameraModel> {
        self.cameras
            .iter()
            .find(|c| c.camera_id == camera_id)
            .ok_or(Error::CameraOutOfRange { index: camera_id, count: self.cameras.len() })
    }

    /// Ground truth visible to a camera: `(identity_seed, x, y)`.
    pub fn visible_truth(&self, frame: u64, camera_id: usize) -> Result<Vec<(u64, f64, f64)>> {
        let cam = self.camera(camera_id)?;
        Ok(self
            .tracks
            .iter()
            .filter_map(|t| t.position(frame).map(|(x, y)| (t.identity_seed, x, y)))
            .filter(|&(_, x, y)| cam.sees(x, y))
            .collect())
    }

    /// [`Scenario::visible_truth`] minus targets hidden by nearer ones.
    pub fn detectable_truth(&self, frame: u64, camera_id: usize) -> Result<Vec<(u64, f64, f64)>> {
        let cam = self.camera(camera_id)?;
        let visible = self.visible_truth(frame, camera_id)?;
        let points: Vec<(f64, f64)> = visible.iter().map(|&(_, x, y)| (x, y)).collect();
        Ok(visible.into_iter().filter(|&(_, x, y)| !cam.occluded((x, y), &points)).collect())
    }

    /// Number of tracks present at `frame`.
    pub fn present_count(&self, frame: u64) -> usize {
        self.tracks.iter().filter(|t| t.is_present(frame)).count()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a tuple of integers into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243f_6a88_85a3_08d3, |h, &p| splitmix(h ^ p))
}

/// Independent random stream for one `(seed, frame, camera)` triple.
pub fn detection_rng(seed: u64, frame: u64, camera_id: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, frame, camera_id as u64]))
}

/// Square root of a symmetric positive semi-definite matrix, `L Lᵀ = m`.
fn psd_factor(m: &Mat4) -> Mat4 {
    if let Some(c) = m.cholesky() {
        return c.l();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Mat4::from_diagonal(&sqrt)
}

fn sample_gaussian<R: Rng + ?Sized>(factor: &Mat4, rng: &mut R) -> Vec4 {
    let n = Vec4::from_fn(|_, _| rng.sample(StandardNormal));
    factor * n
}

/// Detections of one camera at one frame.
///
/// True detections come first in track order, followed by false positives.
pub fn generate_detections<R: Rng + ?Sized>(scenario: &Scenario, frame: u64, camera_id: usize, rng: &mut R) -> Result<Vec<Measurement>> {
    if frame >= scenario.frame_count {
        return Err(Error::InvalidParameter(format!("frame {frame} beyond frame count {}", scenario.frame_count)));
    }
    let cam = scenario.camera(camera_id)?;
    let factor = psd_factor(&symmetrize(&cam.detection_noise));
    let reported = cam.reported_noise();
    let visible: Vec<(f64, f64)> = scenario
        .tracks
        .iter()
        .filter_map(|t| t.position(frame))
        .filter(|&(x, y)| cam.sees(x, y))
        .collect();
    let mut out = Vec::new();
    for track in &scenario.tracks {
        let Some(truth) = track.state(frame) else { continue };
        if !cam.sees(truth[0], truth[1]) || cam.occluded((truth[0], truth[1]), &visible) {
            continue;
        }
        let miss: f64 = rng.random();
        if miss < cam.miss_probability {
            continue;
        }
        let mut z = truth + sample_gaussian(&factor, rng);
        z[2] = z[2].max(1e-3);
        z[3] = z[3].max(1e-3);
        let emb = synthetic_embedding(track.identity_seed, scenario.embedding_noise, rng, scenario.embedding_dim)?;
        out.push(Measurement::new(z, reported, emb, frame, camera_id)?);
    }
    if cam.false_positive_rate > 0.0 {
        let count = Poisson::new(cam.false_positive_rate).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng) as usize;
        let (x0, y0, x1, y1) = cam.bounds();
        let typical = scenario.tracks.first().map_or((0.5, 1.7), |t| t.size);
        for _ in 0..count {
            let (x, y) = loop {
                let p = (rng.random_range(x0..=x1), rng.random_range(y0..=y1));
                if cam.sees(p.0, p.1) {
                    break p;
                }
            };
            let z = Vec4::new(x, y, typical.0, typical.1);
            let emb = random_embedding(rng, scenario.embedding_dim);
            out.push(Measurement::new(z, reported, emb, frame, camera_id)?);
        }
    }
    Ok(out)
}

/// [`generate_detections`] with the canonical stream for this triple.
pub fn detections_for(scenario: &Scenario, frame: u64, camera_id: usize) -> Result<Vec<Measurement>> {
    generate_detections(scenario, frame, camera_id, &mut detection_rng(scenario.seed, frame, camera_id))
}

/// Image rectangle: left `u`, top `v`, width and height in pixels (y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageBox {
    pub u: f64,
    pub v: f64,
    pub width: f64,
    pub height: f64,
}

impl ImageBox {
    pub fn bottom_center(&self) -> (f64, f64) {
        (self.u + 0.5 * self.width, self.v + self.height)
    }
}

fn apply_homography(h: &Matrix3<f64>, p: (f64, f64)) -> Result<(f64, f64)> {
    let q = h * Vector3::new(p.0, p.1, 1.0);
    if q[2].abs() < 1e-12 {
        return Err(Error::PointAtInfinity);
    }
    Ok((q[0] / q[2], q[1] / q[2]))
}

/// Maps an image box to a ground cylinder `(x, y, w, h)`.
///
/// `(x, y)` is the projected bottom centre, `w` the ground distance between
/// the projected bottom corners and `h = w · height / width`.
pub fn project_to_ground(bbox: &ImageBox, homography: &Matrix3<f64>) -> Result<Vec4> {
    if homography.determinant().abs() < 1e-12 {
        return Err(Error::Singular("homography"));
    }
    if !(bbox.width > 0.0 && bbox.height > 0.0) {
        return Err(Error::InvalidParameter("box width and height must be positive".into()));
    }
    let bottom = bbox.v + bbox.height;
    let (x, y) = apply_homography(homography, bbox.bottom_center())?;
    let left = apply_homography(homography, (bbox.u, bottom))?;
    let right = apply_homography(homography, (bbox.u + bbox.width, bottom))?;
    let w = (right.0 - left.0).hypot(right.1 - left.1);
    Ok(Vec4::new(x, y, w, w * bbox.height / bbox.width))
}

/// Inverse mapping of a ground point into the image.
pub fn ground_to_image(point: (f64, f64), homography: &Matrix3<f64>) -> Result<(f64, f64)> {
    let inv = homography.try_inverse().ok_or(Error::Singular("homography"))?;
    apply_homography(&inv, point)
}

/// Knobs of the crossing generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossingParams {
    pub camera_count: usize,
    pub target_count: usize,
    pub frame_count: u64,
    /// Arena is the square `[-half, half]²`.
    pub arena_half_size: f64,
    /// Each camera sees its half of the arena plus this margin past the centre line.
    pub fov_margin: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Crossing points are drawn within this radius of the centre.
    pub crossing_radius: f64,
    pub first_crossing: u64,
    pub crossing_stagger: u64,
    /// Ground distance below which a nearer target hides a farther one.
    pub occlusion_radius: f64,
    pub position_sigma: f64,
    pub size_sigma: f64,
    pub miss_probability: f64,
    pub false_positive_rate: f64,
    pub embedding_noise: f64,
    pub embedding_dim: usize,
}

impl Default for CrossingParams {
    fn default() -> Self {
        Self {
            camera_count: 4,
            target_count: 6,
            frame_count: 300,
            arena_half_size: 5.0,
            fov_margin: 1.0,
            min_speed: 0.04,
            max_speed: 0.07,
            crossing_radius: 1.0,
            first_crossing: 40,
            crossing_stagger: 25,
            occlusion_radius: 0.4,
            position_sigma: 0.03,
            size_sigma: 0.02,
            miss_probability: 0.05,
            false_positive_rate: 0.02,
            embedding_noise: 0.02,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl CrossingParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_count < 2 {
            return Err(Error::InvalidParameter(format!("crossing scenario needs at least 2 targets, got {}", self.target_count)));
        }
        if self.camera_count == 0 {
            return Err(Error::InvalidParameter("camera count must be positive".into()));
        }
        if !(self.min_speed > 0.0 && self.max_speed >= self.min_speed) {
            return Err(Error::InvalidParameter("speeds must satisfy 0 < min <= max".into()));
        }
        if !(self.arena_half_size > 0.0 && self.crossing_radius >= 0.0 && self.crossing_radius < self.arena_half_size) {
            return Err(Error::InvalidParameter("crossing radius must lie inside the arena".into()));
        }
        if !(self.occlusion_radius >= 0.0) {
            return Err(Error::InvalidParameter("occlusion radius must be non-negative".into()));
        }
        if !(self.position_sigma >= 0.0 && self.size_sigma >= 0.0) {
            return Err(Error::InvalidParameter("detection noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Cameras look inward from evenly spaced directions; each fov is the
    /// arena clipped to the half-plane facing the camera, widened by the margin.
    pub fn cameras(&self) -> Vec<CameraModel> {
        let s = self.arena_half_size;
        let square = vec![(-s, -s), (s, -s), (s, s), (-s, s)];
        let (p2, s2) = (self.position_sigma.powi(2), self.size_sigma.powi(2));
        (0..self.camera_count)
            .map(|i| {
                let theta = 2.0 * PI * i as f64 / self.camera_count as f64;
                let d = (theta.cos(), theta.sin());
                let fov = if self.camera_count == 1 { square.clone() } else { clip_half_plane(&square, d, -self.fov_margin) };
                CameraModel {
                    camera_id: i,
                    fov,
                    detection_noise: Mat4::from_diagonal(&Vec4::new(p2, p2, s2, s2)),
                    miss_probability: self.miss_probability,
                    false_positive_rate: self.false_positive_rate,
                    homography: None,
                    viewpoint: Some((-d.0 * 2.0 * s, -d.1 * 2.0 * s)),
                    occlusion_radius: self.occlusion_radius,
                }
            })
            .collect()
    }

    pub fn build(&self, seed: u64) -> Result<Scenario> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0xc055]));
        let identity_base = mix_seed(&[seed, 0x1d]) & 0xffff_ffff_0000_0000;
        let s = self.arena_half_size;
        let mut tracks = Vec::with_capacity(self.target_count);
        for group in 0..self.target_count.div_ceil(2) {
            let r = self.crossing_radius * rng.random::<f64>().sqrt();
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let center = (r * phi.cos(), r * phi.sin());
            // Paths meet half-way between two frames.
            let t_cross = (self.first_crossing + group as u64 * self.crossing_stagger) as f64 + 0.5;
            let heading: f64 = rng.random_range(0.0..2.0 * PI);
            let turn: f64 = rng.random_range(PI / 3.0..2.0 * PI / 3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            for (k, angle) in [heading, heading + turn].into_iter().enumerate() {
                let index = 2 * group + k;
                if index >= self.target_count {
                    break;
                }
                let speed = rng.random_range(self.min_speed..=self.max_speed);
                let v = (speed * angle.cos(), speed * angle.sin());
                let (lo, hi) = inside_interval(center, v, t_cross, s);
                let first = lo.ceil().max(0.0) as u64;
                let last = (hi.floor().min((self.frame_count - 1) as f64)).max(0.0) as u64;
                if first >= last {
                    continue;
                }
                let at = |t: u64| Waypoint { frame: t, x: center.0 + v.0 * (t as f64 - t_cross), y: center.1 + v.1 * (t as f64 - t_cross) };
                let w = 0.5 + rng.random_range(-0.05..=0.05);
                let h = 1.7 + rng.random_range(-0.1..=0.1);
                tracks.push(GroundTruthTrack {
                    identity_seed: identity_base + index as u64,
                    waypoints: vec![at(first), at(last)],
                    size: (w, h),
                    presence: vec![(first, last)],
                });
            }
        }
        let scenario = Scenario {
            tracks,
            cameras: self.cameras(),
            frame_count: self.frame_count,
            embedding_noise: self.embedding_noise,
            seed,
            embedding_dim: self.embedding_dim,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Time interval during which `c + v (t - t0)` stays in `[-s, s]²`.
fn inside_interval(c: (f64, f64), v: (f64, f64), t0: f64, s: f64) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, dv) in [(c.0, v.0), (c.1, v.1)] {
        if dv.abs() < 1e-15 {
            continue;
        }
        let (a, b) = ((-s - p) / dv + t0, (s - p) / dv + t0);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (lo, hi)
}

/// Keeps the part of a convex polygon where `p · d >= offset`.
fn clip_half_plane(poly: &[(f64, f64)], d: (f64, f64), offset: f64) -> Vec<(f64, f64)> {
    let f = |p: (f64, f64)| p.0 * d.0 + p.1 * d.1 - offset;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fa, fb) = (f(a), f(b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let t = fa / (fa - fb);
            out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
        }
    }
    out.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    out
}

/// Crossing scenario with default knobs.
pub fn crossing_scenario(camera_count: usize, target_count: usize, seed: u64) -> Result<Scenario> {
    CrossingParams { camera_count, target_count, ..Default::default() }.build(seed)
}
