//! Appearance embeddings, bounded galleries and cosine-distance similarity.
//!
//! Galleries hold embedding vectors rather than image patches. The synthetic
//! embedding generator stands in for a re-identification network.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_EMBEDDING_DIM: usize = 512;
pub const DEFAULT_GALLERY_CAPACITY: usize = 20;
pub const DEFAULT_SAVE_PERIOD: u64 = 20;

/// Weight of the seeded dense component mixed into each identity's base vector.
const IDENTITY_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("embedding must not be empty".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        let e = Self(values);
        if e.norm() == 0.0 {
            return Err(Error::InvalidParameter("embedding has zero norm".into()));
        }
        Ok(e)
    }

    /// Builds a unit-norm embedding.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let e = Self::new(values)?;
        let n = e.norm();
        Ok(Self(e.0.into_iter().map(|v| v / n).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }

    /// `1 - cos(self, other)`, in `[0, 2]`.
    pub fn cosine_distance(&self, other: &Embedding) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let cos = dot / (self.norm() * other.norm());
        (1.0 - cos).clamp(0.0, 2.0)
    }
}

/// Bounded FIFO of embeddings, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gallery {
    entries: VecDeque<Embedding>,
    capacity: usize,
    save_period: u64,
    last_saved: Option<u64>,
}

impl Default for Gallery {
    fn default() -> Self {
        Self::new(DEFAULT_GALLERY_CAPACITY, DEFAULT_SAVE_PERIOD)
    }
}

impl Gallery {
    pub fn new(capacity: usize, save_period: u64) -> Self {
        Self { entries: VecDeque::with_capacity(capacity), capacity: capacity.max(1), save_period, last_saved: None }
    }

    pub fn with_entries(capacity: usize, save_period: u64, entries: impl IntoIterator<Item = Embedding>) -> Self {
        let mut g = Self::new(capacity, save_period);
        for e in entries {
            g.push(e);
        }
        g
    }

    pub fn entries(&self) -> impl ExactSizeIterator<Item = &Embedding> + Clone {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last_saved(&self) -> Option<u64> {
        self.last_saved
    }

    /// Frames since the last store, if any.
    pub fn frames_since_last_save(&self, frame: u64) -> Option<u64> {
        self.last_saved.map(|f| frame.saturating_sub(f))
    }

    fn push(&mut self, e: Embedding) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(e);
    }

    /// Stores `embedding` when at least one save period has elapsed since the
    /// last store. The first two observations are always kept. Returns whether
    /// the embedding was stored.
    pub fn maybe_store(&mut self, embedding: Embedding, frame: u64) -> bool {
        let due = match self.last_saved {
            None => true,
            Some(last) => frame.saturating_sub(last) >= self.save_period,
        };
        if self.entries.len() < 2 || due {
            self.push(embedding);
            self.last_saved = Some(frame);
            true
        } else {
            false
        }
    }

    /// Appends every entry of `other`, keeping the capacity bound.
    pub fn absorb(&mut self, other: &Gallery) {
        for e in other.entries() {
            self.push(e.clone());
        }
        self.last_saved = match (self.last_saved, other.last_saved) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
}

/// Minimum cosine distance between `query` and the gallery entries.
pub fn appearance_similarity(query: &Embedding, gallery: &Gallery) -> Result<f64> {
    gallery
        .entries()
        .map(|e| query.cosine_distance(e))
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyGallery)
}

/// Minimum cosine distance over all cross pairs of two embedding sets.
pub fn set_similarity<'a>(
    a: impl IntoIterator<Item = &'a Embedding>,
    b: &Gallery,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for q in a {
        let s = appearance_similarity(q, b)?;
        best = Some(best.map_or(s, |v: f64| v.min(s)));
    }
    best.ok_or(Error::EmptyGallery)
}

/// Deterministic unit base vector for an identity.
///
/// A one-hot component selected by `identity_seed mod dim` is blended with a
/// dense Gaussian direction seeded by the identity, so distinct identities are
/// close to orthogonal.
pub fn identity_base(identity_seed: u64, dim: usize) -> Embedding {
    let mut rng = ChaCha8Rng::seed_from_u64(identity_seed ^ 0x9e37_79b9_7f4a_7c15);
    let dense: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let dense_norm = dense.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let hot = (identity_seed % dim as u64) as usize;
    let values = dense
        .iter()
        .enumerate()
        .map(|(i, v)| IDENTITY_SPREAD * v / dense_norm + if i == hot { 1.0 } else { 0.0 })
        .collect();
    Embedding::normalized(values).expect("identity base vector is non-zero")
}

/// `normalize(base(identity) + noise)` with `noise ~ N(0, sigma^2 I)`.
///
/// Always consumes `dim` normal draws from `rng`, independent of `noise_sigma`.
pub fn synthetic_embedding<R: Rng + ?Sized>(identity_seed: u64, noise_sigma: f64, rng: &mut R, dim: usize) -> Result<Embedding> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma must be non-negative, got {noise_sigma}")));
    }
    let base = identity_base(identity_seed, dim);
    let values = base
        .values()
        .iter()
        .map(|b| b + noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Embedding::normalized(values)
}

/// Fresh random unit vector with no persistent identity.
pub fn random_embedding<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Embedding {
    loop {
        let values: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(e) = Embedding::normalized(values) {
            return e;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest, Strategy};

    fn unit(dim: usize, axis: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Embedding::new(v).unwrap()
    }

    #[test]
    fn identical_entry_gives_zero() {
        let g = Gallery::with_entries(20, 20, [unit(4, 0), unit(4, 1)]);
        assert_eq!(appearance_similarity(&unit(4, 1), &g).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_entry_gives_one() {
        let g = Gallery::with_entries(20, 20, [unit(4, 2)]);
        assert_eq!(appearance_similarity(&unit(4, 0), &g).unwrap(), 1.0);
    }

    #[test]
    fn opposite_pair_selects_minimum() {
        let v = unit(4, 0);
        let g = Gallery::with_entries(20, 20, [v.clone(), v.scaled(-1.0).unwrap()]);
        assert_eq!(appearance_similarity(&v, &g).unwrap(), 0.0);
        let single = Gallery::with_entries(20, 20, [v.scaled(-1.0).unwrap()]);
        assert_eq!(appearance_similarity(&v, &single).unwrap(), 2.0);
    }

    #[test]
    fn empty_gallery_is_an_error() {
        assert_eq!(appearance_similarity(&unit(4, 0), &Gallery::default()), Err(Error::EmptyGallery));
    }

    #[test]
    fn bootstrap_stores_first_two() {
        let mut g = Gallery::new(20, 20);
        assert!(g.maybe_store(unit(4, 0), 5));
        assert_eq!(g.len(), 1);
        assert!(g.maybe_store(unit(4, 1), 6));
        assert_eq!(g.len(), 2);
        assert!(!g.maybe_store(unit(4, 2), 7));
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn period_gate() {
        let mut g = Gallery::new(20, 20);
        g.maybe_store(unit(4, 0), 80);
        g.maybe_store(unit(4, 1), 100);
        assert!(!g.maybe_store(unit(4, 2), 110));
        assert_eq!(g.len(), 2);
        assert_eq!(g.frames_since_last_save(110), Some(10));
        assert!(g.maybe_store(unit(4, 2), 120));
    }

    #[test]
    fn full_gallery_evicts_oldest() {
        let mut g = Gallery::new(20, 20);
        for i in 0..20u64 {
            assert!(g.maybe_store(unit(32, i as usize), i * 20));
        }
        assert_eq!(g.len(), 20);
        assert!(g.maybe_store(unit(32, 25), 400));
        assert_eq!(g.len(), 20);
        assert_eq!(g.entries().next().unwrap(), &unit(32, 1));
        assert_eq!(g.entries().last().unwrap(), &unit(32, 25));
    }

    #[test]
    fn noiseless_synthetic_is_base_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = synthetic_embedding(7, 0.0, &mut rng, 512).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-12);
        assert!(e.cosine_distance(&identity_base(7, 512)) < 1e-12);
        let mut rng2 = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(synthetic_embedding(7, 0.0, &mut rng2, 512).unwrap(), e);
    }

    #[test]
    fn synthetic_is_deterministic_in_rng_state() {
        let a = synthetic_embedding(3, 0.2, &mut ChaCha8Rng::seed_from_u64(5), 64).unwrap();
        let b = synthetic_embedding(3, 0.2, &mut ChaCha8Rng::seed_from_u64(5), 64).unwrap();
        assert_eq!(a, b);
        assert!(synthetic_embedding(3, -0.1, &mut ChaCha8Rng::seed_from_u64(5), 64).is_err());
    }

    #[test]
    fn distinct_identities_are_nearly_orthogonal() {
        // Monte-Carlo over random seed pairs; threshold is the cosine distance 0.9.
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut far = 0;
        let trials = 1000;
        for _ in 0..trials {
            let a: u64 = rng.random();
            let mut b: u64 = rng.random();
            while b == a {
                b = rng.random();
            }
            if identity_base(a, 512).cosine_distance(&identity_base(b, 512)) > 0.9 {
                far += 1;
            }
        }
        assert!(far as f64 / trials as f64 >= 0.99, "only {far}/{trials} pairs separated");
    }

    fn arb_embedding(dim: usize) -> impl Strategy<Value = Embedding> {
        prop::collection::vec(-1.0f64..1.0, dim)
            .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
            .prop_map(|v| Embedding::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn adding_entries_never_increases_minimum(
            q in arb_embedding(8),
            entries in prop::collection::vec(arb_embedding(8), 1..6),
            extra in arb_embedding(8),
        ) {
            let g = Gallery::with_entries(20, 20, entries.clone());
            let mut bigger = g.clone();
            bigger.absorb(&Gallery::with_entries(20, 20, [extra]));
            prop_assert!(appearance_similarity(&q, &bigger).unwrap() <= appearance_similarity(&q, &g).unwrap());
        }

        #[test]
        fn similarity_is_scale_invariant(
            q in arb_embedding(8),
            entries in prop::collection::vec(arb_embedding(8), 1..6),
            lambda in 0.01f64..100.0,
        ) {
            let g = Gallery::with_entries(20, 20, entries);
            let a = appearance_similarity(&q, &g).unwrap();
            let b = appearance_similarity(&q.scaled(lambda).unwrap(), &g).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&a));
        }

        #[test]
        fn gallery_never_exceeds_capacity(
            cap in 1usize..6,
            period in 0u64..5,
            frames in prop::collection::vec(0u64..4, 0..60),
        ) {
            let mut g = Gallery::new(cap, period);
            let mut frame = 0;
            for (i, step) in frames.into_iter().enumerate() {
                frame += step;
                g.maybe_store(unit(8, i % 8), frame);
                prop_assert!(g.len() <= cap);
            }
        }
    }
}
