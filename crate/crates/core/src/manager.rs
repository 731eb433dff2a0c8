//! Distributed tracker manager.
//!
//! Owns one camera's tracker table and drives the per-frame cycle:
//!
//! 1. [`CameraTracker::compose`] predicts every tracker, associates the local
//!    detections, encodes the associated measurements, runs local
//!    initialization and builds the single outgoing [`CameraMessage`].
//! 2. [`CameraTracker::consume`] reads the neighbours' messages, instantiates
//!    or merges new trackers, links identities learnt over several hops, runs
//!    the consensus update, propagates the last-seen counter by
//!    min-consensus and archives trackers that nobody has seen for `κ` frames.
//!
//! Identities are `(camera, counter)` pairs. When several identities turn out
//! to describe one target the lexicographically smallest survives and the
//! others are kept as aliases so that neighbours' records still route.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::appearance::{set_similarity, Embedding, Gallery};
use crate::association::{associate, AssociationParams, TrackCandidate};
use crate::dkf::{consensus_update, encode_measurement, ConsensusInput, InformationPair};
use crate::model::{predict, symmetrize, DynamicsModel, GaussianBelief, Mat6, Measurement, Vec6};
use crate::network::{AppearanceAttachment, CameraMessage, TrackerWire};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackerId {
    pub camera: usize,
    pub counter: u64,
}

impl TrackerId {
    pub fn new(camera: usize, counter: u64) -> Self {
        Self { camera, counter }
    }
}

impl fmt::Display for TrackerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.camera, self.counter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Tentative,
    Active,
    Archived,
}

/// Which parts of the pipeline are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PipelineMode {
    /// Geometry-only association, per-camera initialization and drop.
    #[serde(rename = "dkf")]
    Dkf,
    /// Adds appearance to the local association.
    #[serde(rename = "dkf+lda")]
    DkfLda,
    /// Full pipeline with distributed tracker management.
    #[serde(rename = "dkf+lda+dtm")]
    DkfLdaDtm,
}

impl PipelineMode {
    pub fn uses_appearance(self) -> bool {
        !matches!(self, PipelineMode::Dkf)
    }

    pub fn uses_dtm(self) -> bool {
        matches!(self, PipelineMode::DkfLdaDtm)
    }

    pub fn all() -> [PipelineMode; 3] {
        [PipelineMode::Dkf, PipelineMode::DkfLda, PipelineMode::DkfLdaDtm]
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineMode::Dkf => "dkf",
            PipelineMode::DkfLda => "dkf+lda",
            PipelineMode::DkfLdaDtm => "dkf+lda+dtm",
        })
    }
}

impl std::str::FromStr for PipelineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dkf" => Ok(PipelineMode::Dkf),
            "dkf+lda" => Ok(PipelineMode::DkfLda),
            "dkf+lda+dtm" => Ok(PipelineMode::DkfLdaDtm),
            other => Err(Error::Config(format!("unknown pipeline mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManagerParams {
    pub alpha_lda: f64,
    pub alpha_gda: f64,
    pub tau: f64,
    pub tau_gda: f64,
    pub kappa: u64,
    pub epsilon: f64,
    pub gallery_capacity: usize,
    pub gallery_period: u64,
    /// Frames a tentative may wait for its second observation.
    pub tentative_max_gap: u64,
    /// Prior variances for trackers instantiated from a neighbour's state.
    pub init_pos_var: f64,
    pub init_size_var: f64,
    pub init_vel_var: f64,
    pub mode: PipelineMode,
}

impl Default for ManagerParams {
    fn default() -> Self {
        Self {
            alpha_lda: 2000.0,
            alpha_gda: 50.0,
            tau: 0.5,
            tau_gda: 1.0,
            kappa: 15,
            epsilon: 0.25,
            gallery_capacity: 20,
            gallery_period: 20,
            tentative_max_gap: 2,
            init_pos_var: 0.05,
            init_size_var: 0.05,
            init_vel_var: 0.1,
            mode: PipelineMode::DkfLdaDtm,
        }
    }
}

impl ManagerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_lda", self.alpha_lda),
            ("alpha_gda", self.alpha_gda),
            ("tau", self.tau),
            ("tau_gda", self.tau_gda),
            ("epsilon", self.epsilon),
            ("init_pos_var", self.init_pos_var),
            ("init_size_var", self.init_size_var),
            ("init_vel_var", self.init_vel_var),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.kappa == 0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        if self.gallery_capacity < 2 {
            return Err(Error::Config(format!("gallery size must be at least 2, got {}", self.gallery_capacity)));
        }
        if self.gallery_period == 0 {
            return Err(Error::Config("gallery period must be positive".into()));
        }
        Ok(())
    }

    fn lda(&self) -> AssociationParams {
        AssociationParams { alpha: self.alpha_lda, tau: self.tau, use_appearance: self.mode.uses_appearance() }
    }

    fn new_gallery(&self) -> Gallery {
        Gallery::new(self.gallery_capacity, self.gallery_period)
    }

    fn received_prior(&self) -> Mat6 {
        let (p, s, v) = (self.init_pos_var, self.init_size_var, self.init_vel_var);
        Mat6::from_diagonal(&Vec6::new(p, p, s, s, v, v))
    }
}

/// Scratch state for the frame in flight.
#[derive(Debug, Clone, PartialEq)]
struct RoundState {
    prediction: Vec6,
    pair: InformationPair,
    detected: bool,
    /// Created during this frame; skips the consensus correction.
    created: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerRecord {
    pub id: TrackerId,
    /// Mean is the latest corrected state, covariance is already propagated
    /// to the next frame.
    pub belief: GaussianBelief,
    pub gallery: Gallery,
    pub last_seen: u64,
    pub phase: Phase,
    pub aliases: BTreeSet<TrackerId>,
    round: RoundState,
}

impl TrackerRecord {
    pub fn new(id: TrackerId, belief: GaussianBelief, gallery: Gallery) -> Self {
        let prediction = belief.mean;
        Self {
            id,
            belief,
            gallery,
            last_seen: 0,
            phase: Phase::Active,
            aliases: BTreeSet::new(),
            round: RoundState { prediction, pair: InformationPair::zero(), detected: false, created: true },
        }
    }

    pub fn position(&self) -> (f64, f64) {
        self.belief.position()
    }

    /// Prediction broadcast during the current frame.
    pub fn prediction(&self) -> Vec6 {
        self.round.prediction
    }

    pub fn answers_to(&self, id: TrackerId) -> bool {
        self.id == id || self.aliases.contains(&id)
    }
}

/// Two-observation candidate awaiting activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tentative {
    pub observations: Vec<Measurement>,
    pub gallery: Gallery,
    pub last_frame: u64,
}

impl Tentative {
    fn last(&self) -> &Measurement {
        self.observations.last().expect("tentative holds at least one observation")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArchivedTracker {
    pub gallery: Gallery,
    pub aliases: BTreeSet<TrackerId>,
}

/// Dropped trackers kept for re-identification. Ids are never reassigned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Archive {
    entries: BTreeMap<TrackerId, ArchivedTracker>,
    alias_index: BTreeMap<TrackerId, TrackerId>,
}

impl Archive {
    pub fn insert(&mut self, id: TrackerId, tracker: ArchivedTracker) {
        for a in &tracker.aliases {
            self.alias_index.insert(*a, id);
        }
        self.entries.insert(id, tracker);
    }

    pub fn insert_gallery(&mut self, id: TrackerId, gallery: Gallery) {
        self.insert(id, ArchivedTracker { gallery, aliases: BTreeSet::new() });
    }

    /// Primary id of an archived tracker known under `id`.
    pub fn resolve(&self, id: TrackerId) -> Option<TrackerId> {
        if self.entries.contains_key(&id) {
            Some(id)
        } else {
            self.alias_index.get(&id).copied().filter(|p| self.entries.contains_key(p))
        }
    }

    pub fn take(&mut self, id: TrackerId) -> Option<ArchivedTracker> {
        let t = self.entries.remove(&id)?;
        for a in &t.aliases {
            self.alias_index.remove(a);
        }
        Some(t)
    }

    pub fn get(&self, id: TrackerId) -> Option<&ArchivedTracker> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: TrackerId) -> bool {
        self.resolve(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TrackerId> + '_ {
        self.entries.keys().copied()
    }

    /// Archived tracker whose gallery best matches `query`, if below `epsilon`.
    pub fn best_match<'a>(&self, query: impl IntoIterator<Item = &'a Embedding> + Clone, epsilon: f64) -> Option<(TrackerId, f64)> {
        let mut best: Option<(TrackerId, f64)> = None;
        for (id, t) in &self.entries {
            if t.gallery.is_empty() {
                continue;
            }
            let Ok(s) = set_similarity(query.clone(), &t.gallery) else { continue };
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((*id, s));
            }
        }
        best.filter(|(_, s)| *s < epsilon)
    }
}

/// Min-consensus update of the last-seen counter.
pub fn update_last_seen(detected: bool, own: u64, neighbor_values: &[u64]) -> u64 {
    if detected {
        0
    } else {
        neighbor_values.iter().copied().fold(own, u64::min) + 1
    }
}

/// Archives the record when its counter exceeds `kappa`.
pub fn maybe_drop(mut record: TrackerRecord, kappa: u64, archive: &mut Archive) -> TrackerRecord {
    if record.last_seen > kappa && record.phase == Phase::Active {
        record.phase = Phase::Archived;
        archive.insert(record.id, ArchivedTracker { gallery: record.gallery.clone(), aliases: record.aliases.clone() });
    }
    record
}

/// Settings for [`try_local_init`].
#[derive(Debug, Clone, Copy)]
pub struct InitContext {
    pub camera: usize,
    pub frame: u64,
    pub tau_gda: f64,
    pub gallery_capacity: usize,
    pub gallery_period: u64,
    pub max_gap: u64,
    pub use_archive: bool,
    pub vel_var_floor: f64,
}

impl InitContext {
    pub fn from_params(camera: usize, frame: u64, params: &ManagerParams) -> Self {
        Self {
            camera,
            frame,
            tau_gda: params.tau_gda,
            gallery_capacity: params.gallery_capacity,
            gallery_period: params.gallery_period,
            max_gap: params.tentative_max_gap,
            use_archive: params.mode.uses_dtm(),
            vel_var_floor: params.init_vel_var,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalInit {
    /// Freshly created and re-activated trackers.
    pub activated: Vec<TrackerRecord>,
    /// One attachment per freshly created tracker.
    pub attachments: Vec<AppearanceAttachment>,
    pub reactivated: Vec<TrackerId>,
}

fn planar_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Belief from the last two observations of a tentative: position and size
/// from the newest one, velocity from their finite difference.
fn belief_from_pair(first: &Measurement, second: &Measurement, vel_var_floor: f64) -> Result<GaussianBelief> {
    let dt = second.frame.saturating_sub(first.frame).max(1) as f64;
    let mut mean = Vec6::zeros();
    mean.fixed_rows_mut::<4>(0).copy_from(&second.z);
    mean[4] = (second.z[0] - first.z[0]) / dt;
    mean[5] = (second.z[1] - first.z[1]) / dt;
    let mut cov = Mat6::zeros();
    cov.fixed_view_mut::<4, 4>(0, 0).copy_from(&second.r);
    for (p, v) in [(0usize, 4usize), (1, 5)] {
        for (q, w) in [(0usize, 4usize), (1, 5)] {
            cov[(p, w)] = second.r[(p, q)] / dt;
            cov[(v, q)] = second.r[(p, q)] / dt;
            cov[(v, w)] = (first.r[(p, q)] + second.r[(p, q)]) / (dt * dt);
        }
    }
    cov[(4, 4)] += vel_var_floor;
    cov[(5, 5)] += vel_var_floor;
    GaussianBelief::new(mean, symmetrize(&cov))
}

/// Extends or creates tentatives with unmatched detections and activates
/// those holding two observations, re-using an archived identity when the
/// appearance matches within `epsilon`.
pub fn try_local_init(
    unmatched: &[Measurement],
    tentatives: &mut Vec<Tentative>,
    archive: &mut Archive,
    epsilon: f64,
    ctx: &InitContext,
    next_counter: &mut u64,
) -> Result<LocalInit> {
    let frame = ctx.frame;
    tentatives.retain(|t| frame.saturating_sub(t.last_frame) <= ctx.max_gap);

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (mi, m) in unmatched.iter().enumerate() {
        for (ti, t) in tentatives.iter().enumerate() {
            if t.last_frame >= frame {
                continue;
            }
            let d = planar_distance(m.position(), t.last().position());
            if d < ctx.tau_gda {
                pairs.push((d, mi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_m = vec![false; unmatched.len()];
    let mut used_t = vec![false; tentatives.len()];
    for (_, mi, ti) in pairs {
        if used_m[mi] || used_t[ti] {
            continue;
        }
        used_m[mi] = true;
        used_t[ti] = true;
        let m = &unmatched[mi];
        let t = &mut tentatives[ti];
        t.gallery.maybe_store(m.embedding.clone(), frame);
        t.observations.push(m.clone());
        t.last_frame = frame;
    }
    for (mi, m) in unmatched.iter().enumerate() {
        if !used_m[mi] {
            let mut gallery = Gallery::new(ctx.gallery_capacity, ctx.gallery_period);
            gallery.maybe_store(m.embedding.clone(), frame);
            tentatives.push(Tentative { observations: vec![m.clone()], gallery, last_frame: frame });
        }
    }

    let mut out = LocalInit::default();
    let (ready, waiting): (Vec<Tentative>, Vec<Tentative>) = tentatives.drain(..).partition(|t| t.observations.len() >= 2);
    *tentatives = waiting;
    for t in ready {
        let n = t.observations.len();
        let belief = belief_from_pair(&t.observations[n - 2], &t.observations[n - 1], ctx.vel_var_floor)?;
        let reuse = if ctx.use_archive { archive.best_match(t.gallery.entries(), epsilon) } else { None };
        if let Some((old, _)) = reuse {
            let archived = archive.take(old).expect("matched id is archived");
            let mut gallery = archived.gallery;
            gallery.absorb(&t.gallery);
            let mut rec = TrackerRecord::new(old, belief, gallery);
            rec.aliases = archived.aliases;
            out.reactivated.push(old);
            out.activated.push(rec);
        } else {
            let id = TrackerId::new(ctx.camera, *next_counter);
            *next_counter += 1;
            let embeddings: Vec<Embedding> = t.gallery.entries().take(2).cloned().collect();
            out.attachments.push(AppearanceAttachment::new(id, embeddings)?);
            out.activated.push(TrackerRecord::new(id, belief, t.gallery));
        }
    }
    Ok(out)
}

/// A new tracker announced by a neighbour together with its appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedNewTracker {
    pub id: TrackerId,
    pub state: Vec6,
    pub embeddings: Vec<Embedding>,
}

struct Member {
    id: TrackerId,
    position: (f64, f64),
    embeddings: Gallery,
    local: Option<TrackerRecord>,
    state: Vec6,
}

/// Resolves new trackers received in this frame against each other and
/// against the trackers this camera created in the same frame.
///
/// Pairs are admissible when their Euclidean ground distance is below
/// `tau_gda`; they are merged greedily by ascending `(d / alpha_gda) · s_a`,
/// never joining two trackers created by the same camera. Each cluster keeps
/// the smallest id and the union of the galleries.
pub fn handle_neighbor_new_trackers(
    received: &[ReceivedNewTracker],
    local_new: Vec<TrackerRecord>,
    alpha_gda: f64,
    tau_gda: f64,
    params: &ManagerParams,
) -> Result<Vec<TrackerRecord>> {
    let mut members: Vec<Member> = Vec::new();
    for rec in local_new {
        members.push(Member { id: rec.id, position: rec.position(), embeddings: rec.gallery.clone(), state: rec.belief.mean, local: Some(rec) });
    }
    for r in received {
        if r.embeddings.len() != 2 {
            warn!("rejecting attachment for {}: {} embeddings", r.id, r.embeddings.len());
            continue;
        }
        if members.iter().any(|m| m.id == r.id) {
            continue;
        }
        let gallery = Gallery::with_entries(params.gallery_capacity, params.gallery_period, r.embeddings.iter().cloned());
        members.push(Member { id: r.id, position: (r.state[0], r.state[1]), embeddings: gallery, state: r.state, local: None });
    }

    let mut scored: Vec<(f64, f64, usize, usize)> = Vec::new();
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let d = planar_distance(members[a].position, members[b].position);
            if d >= tau_gda {
                continue;
            }
            let s_a = match (members[a].embeddings.is_empty(), members[b].embeddings.is_empty()) {
                (false, false) => set_similarity(members[a].embeddings.entries(), &members[b].embeddings)?,
                _ => 1.0,
            };
            scored.push(((d / alpha_gda) * s_a, d, a, b));
        }
    }
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then((x.2, x.3).cmp(&(y.2, y.3))));

    let mut cluster: Vec<usize> = (0..members.len()).collect();
    fn root(c: &mut [usize], mut i: usize) -> usize {
        while c[i] != i {
            c[i] = c[c[i]];
            i = c[i];
        }
        i
    }
    let mut cameras: Vec<BTreeSet<usize>> = members.iter().map(|m| BTreeSet::from([m.id.camera])).collect();
    for (_, _, a, b) in scored {
        let (ra, rb) = (root(&mut cluster, a), root(&mut cluster, b));
        if ra == rb || !cameras[ra].is_disjoint(&cameras[rb]) {
            continue;
        }
        let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
        cluster[gone] = keep;
        let moved = std::mem::take(&mut cameras[gone]);
        cameras[keep].extend(moved);
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..members.len() {
        let r = root(&mut cluster, i);
        groups.entry(r).or_default().push(i);
    }
    let mut slots: Vec<Option<Member>> = members.into_iter().map(Some).collect();
    let mut out = Vec::new();
    for (_, idx) in groups {
        let group: Vec<Member> = idx.iter().map(|&i| slots[i].take().expect("member used once")).collect();
        let survivor = group.iter().map(|m| m.id).min().expect("non-empty cluster");
        let mut gallery = params.new_gallery();
        let mut aliases = BTreeSet::new();
        let mut base: Option<TrackerRecord> = None;
        let mut survivor_state = None;
        for m in group {
            gallery.absorb(&m.embeddings);
            if m.id != survivor {
                aliases.insert(m.id);
            } else {
                survivor_state = Some(m.state);
            }
            if let Some(rec) = m.local {
                aliases.extend(rec.aliases.iter().copied());
                base = Some(rec);
            }
        }
        aliases.remove(&survivor);
        let mut rec = match base {
            Some(rec) => rec,
            None => {
                let belief = GaussianBelief::new(survivor_state.expect("survivor is a member"), params.received_prior())?;
                TrackerRecord::new(survivor, belief, params.new_gallery())
            }
        };
        rec.id = survivor;
        rec.gallery = gallery;
        rec.aliases = aliases;
        rec.last_seen = 0;
        rec.phase = Phase::Active;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Fresh local identity.
    Init(TrackerId),
    /// Archived identity brought back.
    Reactivate(TrackerId),
    /// Identity instantiated from a neighbour.
    Adopt(TrackerId),
    /// `merged` now routes to `survivor`.
    Merge { survivor: TrackerId, merged: TrackerId },
    /// A tentative was folded into a live record that had lost its target.
    Recover { record: TrackerId, tentative: TrackerId },
    Drop(TrackerId),
    AttachmentSent(TrackerId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManagerEvent {
    pub frame: u64,
    pub camera: usize,
    pub kind: EventKind,
}

impl fmt::Display for ManagerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "frame={} camera={} ", self.frame, self.camera)?;
        match &self.kind {
            EventKind::Init(id) => write!(f, "init {id}"),
            EventKind::Reactivate(id) => write!(f, "re-activation {id}"),
            EventKind::Adopt(id) => write!(f, "adopt {id}"),
            EventKind::Merge { survivor, merged } => write!(f, "merge {merged} -> {survivor}"),
            EventKind::Recover { record, tentative } => write!(f, "recover {tentative} -> {record}"),
            EventKind::Drop(id) => write!(f, "drop {id}"),
            EventKind::AttachmentSent(id) => write!(f, "attachment {id}"),
        }
    }
}

/// One camera's tracking state.
#[derive(Debug, Clone)]
pub struct CameraTracker {
    camera: usize,
    params: ManagerParams,
    dynamics: DynamicsModel,
    table: BTreeMap<TrackerId, TrackerRecord>,
    alias_index: BTreeMap<TrackerId, TrackerId>,
    tentatives: Vec<Tentative>,
    archive: Archive,
    /// Dropped ids that are never adopted again (modes without management).
    dropped: BTreeSet<TrackerId>,
    next_counter: u64,
    events: Vec<ManagerEvent>,
}

impl CameraTracker {
    pub fn new(camera: usize, params: ManagerParams, dynamics: DynamicsModel) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            camera,
            params,
            dynamics,
            table: BTreeMap::new(),
            alias_index: BTreeMap::new(),
            tentatives: Vec::new(),
            archive: Archive::default(),
            dropped: BTreeSet::new(),
            next_counter: 0,
            events: Vec::new(),
        })
    }

    pub fn camera(&self) -> usize {
        self.camera
    }

    pub fn params(&self) -> &ManagerParams {
        &self.params
    }

    pub fn records(&self) -> impl Iterator<Item = &TrackerRecord> {
        self.table.values()
    }

    pub fn record(&self, id: TrackerId) -> Option<&TrackerRecord> {
        self.resolve(id).and_then(|p| self.table.get(&p))
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn tentatives(&self) -> &[Tentative] {
        &self.tentatives
    }

    pub fn events(&self) -> &[ManagerEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<ManagerEvent> {
        std::mem::take(&mut self.events)
    }

    /// Active tracker positions, `(id, x, y)`.
    pub fn hypotheses(&self) -> Vec<(TrackerId, f64, f64)> {
        self.table.values().map(|r| (r.id, r.belief.mean[0], r.belief.mean[1])).collect()
    }

    fn resolve(&self, id: TrackerId) -> Option<TrackerId> {
        if self.table.contains_key(&id) {
            Some(id)
        } else {
            self.alias_index.get(&id).copied()
        }
    }

    fn emit(&mut self, frame: u64, kind: EventKind) {
        let e = ManagerEvent { frame, camera: self.camera, kind };
        info!("{e}");
        self.events.push(e);
    }

    fn insert(&mut self, rec: TrackerRecord) {
        for a in &rec.aliases {
            self.alias_index.insert(*a, rec.id);
        }
        self.table.insert(rec.id, rec);
    }

    fn remove(&mut self, id: TrackerId) -> Option<TrackerRecord> {
        let rec = self.table.remove(&id)?;
        for a in &rec.aliases {
            self.alias_index.remove(a);
        }
        Some(rec)
    }

    /// Live record that lost its target this frame and sits where a newly
    /// activated tentative appeared with the same appearance.
    fn lost_match(&self, fresh: &TrackerRecord) -> Result<Option<TrackerId>> {
        let mut best: Option<(f64, TrackerId)> = None;
        for rec in self.table.values() {
            if rec.round.detected || rec.gallery.is_empty() {
                continue;
            }
            let p = (rec.round.prediction[0], rec.round.prediction[1]);
            if planar_distance(p, fresh.position()) >= self.params.tau_gda {
                continue;
            }
            let s = set_similarity(fresh.gallery.entries(), &rec.gallery)?;
            if s < self.params.epsilon && best.is_none_or(|(b, _)| s < b) {
                best = Some((s, rec.id));
            }
        }
        Ok(best.map(|(_, id)| id))
    }

    /// First half of the cycle: predict, associate, initialize and compose the
    /// outgoing message.
    pub fn compose(&mut self, frame: u64, detections: &[Measurement]) -> Result<CameraMessage> {
        let mut predicted: Vec<(TrackerId, GaussianBelief)> = Vec::with_capacity(self.table.len());
        for rec in self.table.values_mut() {
            let p = predict(&rec.belief, &self.dynamics)?;
            rec.round = RoundState { prediction: p.mean, pair: InformationPair::zero(), detected: false, created: false };
            predicted.push((rec.id, p));
        }

        let lda = {
            let candidates: Vec<TrackCandidate<'_>> = predicted
                .iter()
                .map(|(id, b)| TrackCandidate { id: *id, belief: b, gallery: self.table.get(id).map(|r| &r.gallery) })
                .collect();
            associate(detections, &candidates, &self.params.lda())?
        };
        for m in &lda.matches {
            let z = &detections[m.measurement_index];
            let pair = encode_measurement(z, &self.dynamics.h)?;
            let rec = self.table.get_mut(&m.tracker_id).expect("matched tracker exists");
            rec.round.pair = pair;
            rec.round.detected = true;
            rec.gallery.maybe_store(z.embedding.clone(), frame);
        }

        let unmatched: Vec<Measurement> = lda.unmatched_measurements.iter().map(|&j| detections[j].clone()).collect();
        let ctx = InitContext::from_params(self.camera, frame, &self.params);
        let init = try_local_init(&unmatched, &mut self.tentatives, &mut self.archive, self.params.epsilon, &ctx, &mut self.next_counter)?;

        let mut message = CameraMessage::new(self.camera, frame);
        let mut recovered = BTreeSet::new();
        for rec in init.activated {
            let id = rec.id;
            if self.params.mode.uses_dtm() && !init.reactivated.contains(&id) {
                if let Some(target) = self.lost_match(&rec)? {
                    let lost = self.table.get_mut(&target).expect("matched record");
                    lost.gallery.absorb(&rec.gallery);
                    lost.belief.cov = rec.belief.cov;
                    lost.round.prediction = rec.belief.mean;
                    lost.round.detected = true;
                    recovered.insert(id);
                    self.emit(frame, EventKind::Recover { record: target, tentative: id });
                    continue;
                }
            }
            if init.reactivated.contains(&id) {
                self.emit(frame, EventKind::Reactivate(id));
            } else {
                self.emit(frame, EventKind::Init(id));
            }
            let mut rec = rec;
            rec.round.detected = true;
            self.insert(rec);
        }
        if self.params.mode.uses_appearance() {
            for a in init.attachments.into_iter().filter(|a| !recovered.contains(&a.id)) {
                self.emit(frame, EventKind::AttachmentSent(a.id));
                message.push_attachment(a);
            }
        }
        for rec in self.table.values() {
            message.push_tracker(TrackerWire { id: rec.id, prediction: rec.round.prediction, info: rec.round.pair.clone(), last_seen: rec.last_seen })?;
        }
        Ok(message)
    }

    /// Second half of the cycle: integrate the neighbours' messages.
    pub fn consume(&mut self, frame: u64, inbox: &[Arc<CameraMessage>]) -> Result<()> {
        let dtm = self.params.mode.uses_dtm();

        // New trackers announced with their appearance.
        let mut received_new: Vec<ReceivedNewTracker> = Vec::new();
        for msg in inbox {
            for att in msg.attachments() {
                if let Err(e) = att.validate() {
                    warn!("frame={frame} camera={} {e}", self.camera);
                    continue;
                }
                if self.resolve(att.id).is_some() || self.archive.contains(att.id) || self.dropped.contains(&att.id) {
                    continue;
                }
                if received_new.iter().any(|r| r.id == att.id) {
                    continue;
                }
                let Some(w) = msg.trackers().iter().find(|w| w.id == att.id) else {
                    warn!("frame={frame} camera={} attachment {} without tracker record", self.camera, att.id);
                    continue;
                };
                received_new.push(ReceivedNewTracker { id: att.id, state: w.prediction, embeddings: att.embeddings.clone() });
            }
        }
        received_new.sort_by_key(|r| r.id);

        if dtm {
            if !received_new.is_empty() {
                let fresh: Vec<TrackerId> = self
                    .table
                    .values()
                    .filter(|r| r.round.created && r.id.camera == self.camera && r.aliases.is_empty() && r.gallery.len() == 2)
                    .map(|r| r.id)
                    .collect();
                let local_new: Vec<TrackerRecord> = fresh.iter().filter_map(|id| self.remove(*id)).collect();
                let merged = handle_neighbor_new_trackers(&received_new, local_new, self.params.alpha_gda, self.params.tau_gda, &self.params)?;
                for mut rec in merged {
                    rec.round.created = true;
                    if !fresh.contains(&rec.id) {
                        self.emit(frame, EventKind::Adopt(rec.id));
                    } else {
                        rec.round.detected = true;
                    }
                    if fresh.iter().any(|f| rec.aliases.contains(f)) {
                        rec.round.detected = true;
                    }
                    let merged_ids: Vec<TrackerId> = rec.aliases.iter().copied().collect();
                    for m in merged_ids {
                        self.emit(frame, EventKind::Merge { survivor: rec.id, merged: m });
                    }
                    self.insert(rec);
                }
            }
        } else {
            for r in &received_new {
                let gallery = Gallery::with_entries(self.params.gallery_capacity, self.params.gallery_period, r.embeddings.iter().cloned());
                let belief = GaussianBelief::new(r.state, self.params.received_prior())?;
                self.insert(TrackerRecord::new(r.id, belief, gallery));
                self.emit(frame, EventKind::Adopt(r.id));
            }
        }

        // Identities learnt without an attachment (several hops away, renamed,
        // or re-activated elsewhere).
        let mut wires: Vec<&TrackerWire> = inbox.iter().flat_map(|m| m.trackers().iter()).collect();
        wires.sort_by_key(|w| w.id);
        for w in &wires {
            if self.resolve(w.id).is_some() {
                continue;
            }
            if !dtm {
                if self.dropped.contains(&w.id) {
                    continue;
                }
                let belief = GaussianBelief::new(w.prediction, self.params.received_prior())?;
                let mut rec = TrackerRecord::new(w.id, belief, self.params.new_gallery());
                rec.last_seen = w.last_seen;
                self.insert(rec);
                self.emit(frame, EventKind::Adopt(w.id));
                continue;
            }
            if let Some(old) = self.archive.resolve(w.id) {
                if w.last_seen == 0 {
                    let archived = self.archive.take(old).expect("resolved archive entry");
                    let belief = GaussianBelief::new(w.prediction, self.params.received_prior())?;
                    let mut rec = TrackerRecord::new(old, belief, archived.gallery);
                    rec.aliases = archived.aliases;
                    self.insert(rec);
                    self.emit(frame, EventKind::Reactivate(old));
                }
                continue;
            }
            let pos = (w.prediction[0], w.prediction[1]);
            let nearest = self
                .table
                .values()
                .map(|r| (planar_distance(pos, (r.round.prediction[0], r.round.prediction[1])), r.id))
                .filter(|(d, _)| *d < self.params.tau_gda)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            match nearest {
                Some((_, local)) if w.id < local => {
                    let mut rec = self.remove(local).expect("nearest record exists");
                    rec.aliases.insert(local);
                    rec.id = w.id;
                    self.insert(rec);
                    self.emit(frame, EventKind::Merge { survivor: w.id, merged: local });
                }
                Some((_, local)) => {
                    let rec = self.table.get_mut(&local).expect("nearest record exists");
                    rec.aliases.insert(w.id);
                    self.alias_index.insert(w.id, local);
                    self.emit(frame, EventKind::Merge { survivor: local, merged: w.id });
                }
                None => {
                    let belief = GaussianBelief::new(w.prediction, self.params.received_prior())?;
                    let mut rec = TrackerRecord::new(w.id, belief, self.params.new_gallery());
                    rec.last_seen = w.last_seen;
                    self.insert(rec);
                    self.emit(frame, EventKind::Adopt(w.id));
                }
            }
        }

        // Group the neighbours' records per local tracker.
        let mut routed: BTreeMap<TrackerId, Vec<&TrackerWire>> = BTreeMap::new();
        for w in &wires {
            if let Some(p) = self.resolve(w.id) {
                routed.entry(p).or_default().push(w);
            }
        }

        let ids: Vec<TrackerId> = self.table.keys().copied().collect();
        let mut to_drop = Vec::new();
        for id in ids {
            let rec = self.table.get_mut(&id).expect("listed id");
            let incoming = routed.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            if rec.round.created {
                rec.belief.cov = symmetrize(&(self.dynamics.a * rec.belief.cov * self.dynamics.a.transpose() + self.dynamics.q));
            } else {
                let input = ConsensusInput {
                    own_pair: rec.round.pair.clone(),
                    neighbor_pairs: incoming.iter().map(|w| w.info.clone()).collect(),
                    own_prediction: rec.round.prediction,
                    neighbor_predictions: incoming.iter().map(|w| w.prediction).collect(),
                };
                let prior = GaussianBelief { mean: rec.round.prediction, cov: rec.belief.cov };
                rec.belief = consensus_update(&prior, &input, &self.dynamics)?;
            }
            let received: Vec<u64> = if dtm { incoming.iter().map(|w| w.last_seen).collect() } else { Vec::new() };
            rec.last_seen = update_last_seen(rec.round.detected, rec.last_seen, &received);
            if rec.last_seen > self.params.kappa {
                to_drop.push(id);
            }
        }

        for id in to_drop {
            let rec = self.remove(id).expect("dropping live record");
            self.emit(frame, EventKind::Drop(id));
            if dtm {
                let rec = maybe_drop(rec, self.params.kappa, &mut self.archive);
                debug_assert_eq!(rec.phase, Phase::Archived);
            } else {
                self.dropped.insert(rec.id);
                self.dropped.extend(rec.aliases.iter().copied());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::identity_base;
    use crate::model::{Mat4, Vec4};

    fn emb(seed: u64) -> Embedding {
        identity_base(seed, 64)
    }

    fn meas(x: f64, y: f64, seed: u64, frame: u64) -> Measurement {
        Measurement::new(Vec4::new(x, y, 0.5, 1.7), Mat4::identity() * 0.001, emb(seed), frame, 0).unwrap()
    }

    fn record(id: TrackerId, x: f64, y: f64, seed: u64) -> TrackerRecord {
        let belief = GaussianBelief::new(Vec6::new(x, y, 0.5, 1.7, 0.0, 0.0), Mat6::identity() * 0.1).unwrap();
        TrackerRecord::new(id, belief, Gallery::with_entries(20, 20, [emb(seed), emb(seed)]))
    }

    fn ctx(frame: u64) -> InitContext {
        InitContext::from_params(3, frame, &ManagerParams::default())
    }

    #[test]
    fn last_seen_rule() {
        assert_eq!(update_last_seen(true, 9, &[3]), 0);
        assert_eq!(update_last_seen(false, 4, &[3, 5]), 4);
        assert_eq!(update_last_seen(false, 7, &[]), 8);
    }

    #[test]
    fn drop_threshold_is_strict() {
        let mut archive = Archive::default();
        let mut r = record(TrackerId::new(0, 1), 0.0, 0.0, 1);
        r.last_seen = 15;
        let r = maybe_drop(r, 15, &mut archive);
        assert_eq!(r.phase, Phase::Active);
        assert!(archive.is_empty());
        let mut r = r;
        r.last_seen = 16;
        let r = maybe_drop(r, 15, &mut archive);
        assert_eq!(r.phase, Phase::Archived);
        assert_eq!(archive.get(r.id).unwrap().gallery.len(), 2);
        let mut fresh = record(TrackerId::new(0, 2), 0.0, 0.0, 1);
        fresh.last_seen = 0;
        assert_eq!(maybe_drop(fresh, 15, &mut archive).phase, Phase::Active);
    }

    #[test]
    fn first_detection_only_creates_tentative() {
        let mut tentatives = Vec::new();
        let mut archive = Archive::default();
        let mut counter = 0;
        let out = try_local_init(&[meas(1.0, 1.0, 5, 0)], &mut tentatives, &mut archive, 0.25, &ctx(0), &mut counter).unwrap();
        assert!(out.activated.is_empty() && out.attachments.is_empty());
        assert_eq!(tentatives.len(), 1);
        assert_eq!(counter, 0);
    }

    #[test]
    fn second_detection_activates_with_attachment() {
        let mut tentatives = Vec::new();
        let mut archive = Archive::default();
        let mut counter = 0;
        try_local_init(&[meas(1.0, 1.0, 5, 0)], &mut tentatives, &mut archive, 0.25, &ctx(0), &mut counter).unwrap();
        let out = try_local_init(&[meas(1.1, 1.0, 5, 1)], &mut tentatives, &mut archive, 0.25, &ctx(1), &mut counter).unwrap();
        assert_eq!(out.activated.len(), 1);
        assert_eq!(out.activated[0].id, TrackerId::new(3, 0));
        assert_eq!(out.attachments.len(), 1);
        assert_eq!(out.attachments[0].embeddings.len(), 2);
        assert!(tentatives.is_empty());
        let b = &out.activated[0].belief;
        assert!((b.mean[4] - 0.1).abs() < 1e-12);
        assert_eq!(counter, 1);
    }

    #[test]
    fn far_or_stale_detections_do_not_extend() {
        let mut tentatives = Vec::new();
        let mut archive = Archive::default();
        let mut counter = 0;
        try_local_init(&[meas(1.0, 1.0, 5, 0)], &mut tentatives, &mut archive, 0.25, &ctx(0), &mut counter).unwrap();
        let out = try_local_init(&[meas(4.0, 1.0, 5, 1)], &mut tentatives, &mut archive, 0.25, &ctx(1), &mut counter).unwrap();
        assert!(out.activated.is_empty());
        assert_eq!(tentatives.len(), 2);
        // Gap of 5 frames exceeds the default of 2: both expire.
        let out = try_local_init(&[meas(1.0, 1.0, 5, 6)], &mut tentatives, &mut archive, 0.25, &ctx(6), &mut counter).unwrap();
        assert!(out.activated.is_empty());
        assert_eq!(tentatives.len(), 1);
    }

    #[test]
    fn matching_archive_reactivates_old_identity() {
        let mut tentatives = Vec::new();
        let mut archive = Archive::default();
        let old = TrackerId::new(1, 4);
        archive.insert_gallery(old, Gallery::with_entries(20, 20, [emb(9)]));
        archive.insert_gallery(TrackerId::new(2, 0), Gallery::with_entries(20, 20, [emb(10)]));
        let mut counter = 7;
        try_local_init(&[meas(0.0, 0.0, 9, 10)], &mut tentatives, &mut archive, 0.25, &ctx(10), &mut counter).unwrap();
        let out = try_local_init(&[meas(0.05, 0.0, 9, 11)], &mut tentatives, &mut archive, 0.25, &ctx(11), &mut counter).unwrap();
        assert_eq!(out.reactivated, vec![old]);
        assert_eq!(out.activated[0].id, old);
        assert!(out.attachments.is_empty());
        assert_eq!(counter, 7);
        assert!(!archive.contains(old));
        assert_eq!(out.activated[0].gallery.len(), 3);
    }

    #[test]
    fn archive_reactivation_threshold() {
        // Query at cosine distance 0.1 from the archived entry: accepted at 0.25.
        let mut archive = Archive::default();
        let a = Embedding::new(vec![1.0, 0.0]).unwrap();
        let cos: f64 = 0.9;
        let q = Embedding::new(vec![cos, (1.0 - cos * cos).sqrt()]).unwrap();
        archive.insert_gallery(TrackerId::new(0, 0), Gallery::with_entries(20, 20, [a]));
        let (id, s) = archive.best_match([&q], 0.25).unwrap();
        assert_eq!(id, TrackerId::new(0, 0));
        assert!((s - 0.1).abs() < 1e-12);
        assert!(archive.best_match([&q], 0.05).is_none());
    }

    #[test]
    fn single_received_tracker_is_instantiated() {
        let r = ReceivedNewTracker { id: TrackerId::new(2, 0), state: Vec6::new(1.0, 1.0, 0.5, 1.7, 0.0, 0.0), embeddings: vec![emb(1), emb(1)] };
        let out = handle_neighbor_new_trackers(&[r], vec![], 50.0, 1.0, &ManagerParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, TrackerId::new(2, 0));
        assert_eq!(out[0].gallery.len(), 2);
        assert!(out[0].aliases.is_empty());
    }

    #[test]
    fn close_received_and_local_merge_to_smaller_id() {
        let r = ReceivedNewTracker { id: TrackerId::new(1, 3), state: Vec6::new(0.0, 0.0, 0.5, 1.7, 0.0, 0.0), embeddings: vec![emb(1), emb(1)] };
        let local = record(TrackerId::new(2, 0), 0.1, 0.0, 1);
        let out = handle_neighbor_new_trackers(&[r], vec![local], 50.0, 1.0, &ManagerParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, TrackerId::new(1, 3));
        assert_eq!(out[0].aliases, BTreeSet::from([TrackerId::new(2, 0)]));
        assert_eq!(out[0].gallery.len(), 4);
        // Local belief is kept.
        assert_eq!(out[0].belief.mean[0], 0.1);
    }

    #[test]
    fn distant_received_trackers_stay_apart() {
        let mk = |cam: usize, x: f64, seed: u64| ReceivedNewTracker { id: TrackerId::new(cam, 0), state: Vec6::new(x, 0.0, 0.5, 1.7, 0.0, 0.0), embeddings: vec![emb(seed), emb(seed)] };
        let out = handle_neighbor_new_trackers(&[mk(0, 0.0, 1), mk(1, 10.0, 2)], vec![], 50.0, 1.0, &ManagerParams::default()).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn malformed_attachment_is_rejected() {
        let r = ReceivedNewTracker { id: TrackerId::new(2, 0), state: Vec6::new(1.0, 1.0, 0.5, 1.7, 0.0, 0.0), embeddings: vec![emb(1)] };
        let out = handle_neighbor_new_trackers(&[r], vec![], 50.0, 1.0, &ManagerParams::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn same_camera_trackers_never_merge() {
        let mk = |counter: u64, x: f64| ReceivedNewTracker { id: TrackerId::new(4, counter), state: Vec6::new(x, 0.0, 0.5, 1.7, 0.0, 0.0), embeddings: vec![emb(1), emb(1)] };
        let out = handle_neighbor_new_trackers(&[mk(0, 0.0), mk(1, 0.2)], vec![], 50.0, 1.0, &ManagerParams::default()).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn three_way_merge_is_transitive() {
        let mk = |cam: usize, x: f64| ReceivedNewTracker { id: TrackerId::new(cam, 0), state: Vec6::new(x, 0.0, 0.5, 1.7, 0.0, 0.0), embeddings: vec![emb(1), emb(1)] };
        // 0 and 2 are 1.2 m apart, each within 1 m of camera 1's tracker.
        let out = handle_neighbor_new_trackers(&[mk(2, 1.2), mk(0, 0.0)], vec![record(TrackerId::new(1, 5), 0.6, 0.0, 1)], 50.0, 1.0, &ManagerParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, TrackerId::new(0, 0));
        assert_eq!(out[0].aliases.len(), 2);
    }

    #[test]
    fn params_validation() {
        assert!(ManagerParams::default().validate().is_ok());
        assert!(ManagerParams { tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(ManagerParams { gallery_capacity: 1, ..Default::default() }.validate().is_err());
        assert_eq!("dkf+lda".parse::<PipelineMode>().unwrap(), PipelineMode::DkfLda);
        assert!("lda".parse::<PipelineMode>().is_err());
    }

    #[test]
    fn stray_first_detection_is_recovered_not_duplicated() {
        let mut cam = CameraTracker::new(0, ManagerParams::default(), DynamicsModel::default()).unwrap();
        // A clutter hit 0.3 m off pairs with the real first detection and
        // gives the newborn a bogus velocity.
        let dets = [meas(-0.3, 0.0, 2, 0), meas(0.0, 0.0, 2, 1), meas(0.0, 0.0, 2, 2), meas(0.0, 0.0, 2, 3)];
        let mut attachments = 0;
        for (f, m) in dets.iter().enumerate() {
            let msg = cam.compose(f as u64, std::slice::from_ref(m)).unwrap();
            attachments += msg.attachments().len();
            cam.consume(f as u64, &[]).unwrap();
        }
        assert_eq!(cam.records().count(), 1);
        assert_eq!(attachments, 1);
        let rec = cam.records().next().unwrap();
        assert_eq!(rec.id, TrackerId::new(0, 0));
        assert!(rec.belief.mean[4].abs() < 0.05, "velocity {}", rec.belief.mean[4]);
        assert!(cam.events().iter().any(|e| matches!(e.kind, EventKind::Recover { record, .. } if record == rec.id)));

        // Without the manager the same stream leaves a duplicate behind.
        let mut plain = CameraTracker::new(0, ManagerParams { mode: PipelineMode::DkfLda, ..Default::default() }, DynamicsModel::default()).unwrap();
        for (f, m) in dets.iter().enumerate() {
            plain.compose(f as u64, std::slice::from_ref(m)).unwrap();
            plain.consume(f as u64, &[]).unwrap();
        }
        assert_eq!(plain.records().count(), 2);
    }

    #[test]
    fn isolated_camera_tracks_and_drops() {
        let params = ManagerParams { kappa: 3, ..Default::default() };
        let mut cam = CameraTracker::new(0, params, DynamicsModel::default()).unwrap();
        for f in 0..10u64 {
            let m = meas(0.05 * f as f64, 0.0, 2, f);
            let msg = cam.compose(f, &[m]).unwrap();
            assert_eq!(msg.trackers().len(), cam.records().count());
            cam.consume(f, &[]).unwrap();
        }
        assert_eq!(cam.records().count(), 1);
        let id = cam.records().next().unwrap().id;
        assert!((cam.records().next().unwrap().belief.mean[4] - 0.05).abs() < 0.01);
        for f in 10..15u64 {
            cam.compose(f, &[]).unwrap();
            cam.consume(f, &[]).unwrap();
        }
        // Last detection at frame 9; counter exceeds 3 at frame 13.
        assert_eq!(cam.records().count(), 0);
        assert!(cam.archive().contains(id));
        let drop = cam.events().iter().find(|e| e.kind == EventKind::Drop(id)).unwrap();
        assert_eq!(drop.frame, 13);
    }
}
