//! Simulated synchronous camera network.
//!
//! Every camera composes exactly one [`CameraMessage`] per frame. A
//! [`SyncRound`] collects them and delivers each one to the sender's graph
//! neighbours at the same instant. The [`BandwidthLedger`] counts wire
//! elements and converts them to bytes.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::appearance::Embedding;
use crate::dkf::InformationPair;
use crate::manager::TrackerId;
use crate::model::{Mat6, Vec6};
use crate::{Error, Result};

/// Elements in a per-tracker wire record: id (2) + prediction (6) + u (6) + U (36) + last seen (1).
pub const TRACKER_WIRE_ELEMENTS: usize = 51;
pub const DEFAULT_ELEMENT_BYTES: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Complete,
    Ring,
    Chain,
    Disconnected,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Complete => "complete",
            TopologyKind::Ring => "ring",
            TopologyKind::Chain => "chain",
            TopologyKind::Disconnected => "disconnected",
        })
    }
}

impl FromStr for TopologyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(TopologyKind::Complete),
            "ring" => Ok(TopologyKind::Ring),
            "chain" => Ok(TopologyKind::Chain),
            "disconnected" => Ok(TopologyKind::Disconnected),
            other => Err(Error::UnknownTopology(other.to_string())),
        }
    }
}

/// Undirected camera adjacency without self loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    camera_count: usize,
    adjacency: Vec<Vec<bool>>,
}

impl TopologyGraph {
    pub fn empty(camera_count: usize) -> Self {
        Self { camera_count, adjacency: vec![vec![false; camera_count]; camera_count] }
    }

    pub fn from_edges(camera_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(camera_count);
        for &(a, b) in edges {
            for c in [a, b] {
                if c >= camera_count {
                    return Err(Error::CameraOutOfRange { index: c, count: camera_count });
                }
            }
            if a != b {
                g.adjacency[a][b] = true;
                g.adjacency[b][a] = true;
            }
        }
        Ok(g)
    }

    pub fn camera_count(&self) -> usize {
        self.camera_count
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn neighbors(&self, camera: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[camera].iter().enumerate().filter(|(_, e)| **e).map(|(j, _)| j)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.camera_count {
            for j in i + 1..self.camera_count {
                if self.adjacency[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Hop distances from `source` (`None` for unreachable cameras).
    pub fn hops_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.camera_count];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(i) = queue.pop_front() {
            let d = dist[i].unwrap_or(0);
            for j in self.neighbors(i) {
                if dist[j].is_none() {
                    dist[j] = Some(d + 1);
                    queue.push_back(j);
                }
            }
        }
        dist
    }

    /// Graph diameter, or `None` when the graph is disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for i in 0..self.camera_count {
            for d in self.hops_from(i) {
                best = best.max(d?);
            }
        }
        Some(best)
    }
}

/// Visits permutations of `0..n` in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Canonical camera orderings for ring or chain layouts, one per distinct
/// edge set, in lexicographic order.
pub fn orderings(kind: TopologyKind, camera_count: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..camera_count).collect();
    let canonical = |p: &[usize]| match kind {
        TopologyKind::Ring => p.len() < 3 || (p[0] == 0 && p[1] < p[p.len() - 1]),
        TopologyKind::Chain => p.len() < 2 || p[0] < p[p.len() - 1],
        _ => false,
    };
    if !matches!(kind, TopologyKind::Ring | TopologyKind::Chain) {
        return Vec::new();
    }
    let mut out = Vec::new();
    loop {
        if canonical(&p) {
            out.push(p.clone());
        }
        if kind == TopologyKind::Ring && camera_count >= 3 && p[0] != 0 {
            break;
        }
        if !next_permutation(&mut p) {
            break;
        }
    }
    if camera_count < 3 && kind == TopologyKind::Ring {
        out.truncate(1);
    }
    out
}

/// Number of variants available for a topology kind.
pub fn variant_count(kind: TopologyKind, camera_count: usize) -> usize {
    match kind {
        TopologyKind::Complete | TopologyKind::Disconnected => 1,
        _ => orderings(kind, camera_count).len(),
    }
}

pub fn build_topology(kind: TopologyKind, camera_count: usize, variant: usize) -> Result<TopologyGraph> {
    if camera_count == 0 {
        return Err(Error::InvalidParameter("camera count must be at least 1".into()));
    }
    let available = variant_count(kind, camera_count);
    if variant >= available {
        return Err(Error::InvalidVariant { variant, available });
    }
    let n = camera_count;
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Complete => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        TopologyKind::Disconnected => Vec::new(),
        TopologyKind::Ring | TopologyKind::Chain => {
            let order = &orderings(kind, n)[variant];
            let mut e: Vec<_> = order.windows(2).map(|w| (w[0], w[1])).collect();
            if kind == TopologyKind::Ring && n >= 3 {
                e.push((order[n - 1], order[0]));
            }
            e
        }
    };
    TopologyGraph::from_edges(n, &edges)
}

/// Per-tracker record sent every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerWire {
    pub id: TrackerId,
    pub prediction: Vec6,
    pub info: InformationPair,
    pub last_seen: u64,
}

impl TrackerWire {
    /// Flat element encoding, `[camera, counter, x̄(6), u(6), U(36, row-major), ℓ]`.
    pub fn to_elements(&self) -> [f64; TRACKER_WIRE_ELEMENTS] {
        let mut out = [0.0; TRACKER_WIRE_ELEMENTS];
        out[0] = self.id.camera as f64;
        out[1] = self.id.counter as f64;
        out[2..8].copy_from_slice(self.prediction.as_slice());
        out[8..14].copy_from_slice(self.info.u.as_slice());
        for i in 0..6 {
            for j in 0..6 {
                out[14 + i * 6 + j] = self.info.big_u[(i, j)];
            }
        }
        out[50] = self.last_seen as f64;
        out
    }

    pub fn from_elements(e: &[f64; TRACKER_WIRE_ELEMENTS]) -> Self {
        Self {
            id: TrackerId::new(e[0] as usize, e[1] as u64),
            prediction: Vec6::from_row_slice(&e[2..8]),
            info: InformationPair { u: Vec6::from_row_slice(&e[8..14]), big_u: Mat6::from_row_slice(&e[14..50]) },
            last_seen: e[50] as u64,
        }
    }

    pub fn element_count(&self) -> usize {
        TRACKER_WIRE_ELEMENTS
    }
}

/// Appearance model sent once, when a tracker is created.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceAttachment {
    pub id: TrackerId,
    pub embeddings: Vec<Embedding>,
}

impl AppearanceAttachment {
    pub fn new(id: TrackerId, embeddings: Vec<Embedding>) -> Result<Self> {
        let a = Self { id, embeddings };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embeddings.len() != 2 {
            return Err(Error::MalformedAttachment { id: self.id.to_string(), count: self.embeddings.len() });
        }
        Ok(())
    }

    pub fn element_count(&self) -> usize {
        self.embeddings.iter().map(Embedding::dim).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CameraMessage {
    pub sender: usize,
    pub frame: u64,
    trackers: Vec<TrackerWire>,
    attachments: Vec<AppearanceAttachment>,
}

impl CameraMessage {
    pub fn new(sender: usize, frame: u64) -> Self {
        Self { sender, frame, trackers: Vec::new(), attachments: Vec::new() }
    }

    /// Adds a tracker record; a second record for the same id is rejected.
    pub fn push_tracker(&mut self, wire: TrackerWire) -> Result<()> {
        if self.trackers.iter().any(|w| w.id == wire.id) {
            return Err(Error::InvalidParameter(format!("duplicate tracker {} in message", wire.id)));
        }
        self.trackers.push(wire);
        Ok(())
    }

    pub fn push_attachment(&mut self, attachment: AppearanceAttachment) {
        self.attachments.push(attachment);
    }

    pub fn trackers(&self) -> &[TrackerWire] {
        &self.trackers
    }

    pub fn attachments(&self) -> &[AppearanceAttachment] {
        &self.attachments
    }
}

/// Messages received by one camera, ordered by sender.
pub type Inbox = Vec<Arc<CameraMessage>>;

/// One synchronous communication round.
#[derive(Debug)]
pub struct SyncRound {
    outbox: Vec<Option<Arc<CameraMessage>>>,
}

impl SyncRound {
    pub fn new(camera_count: usize) -> Self {
        Self { outbox: vec![None; camera_count] }
    }

    pub fn send(&mut self, message: CameraMessage) -> Result<()> {
        let count = self.outbox.len();
        let slot = self
            .outbox
            .get_mut(message.sender)
            .ok_or(Error::CameraOutOfRange { index: message.sender, count })?;
        if slot.is_some() {
            return Err(Error::DuplicateSend(message.sender));
        }
        *slot = Some(Arc::new(message));
        Ok(())
    }

    /// Delivers every message to the sender's neighbours at once.
    pub fn deliver(self, graph: &TopologyGraph) -> Result<Vec<Inbox>> {
        if graph.camera_count() != self.outbox.len() {
            return Err(Error::InvalidParameter(format!(
                "graph has {} cameras, round has {}",
                graph.camera_count(),
                self.outbox.len()
            )));
        }
        let sent: Vec<Arc<CameraMessage>> = self
            .outbox
            .into_iter()
            .enumerate()
            .map(|(i, m)| m.ok_or(Error::MissingSend(i)))
            .collect::<Result<_>>()?;
        Ok((0..graph.camera_count())
            .map(|j| graph.neighbors(j).map(|i| Arc::clone(&sent[i])).collect())
            .collect())
    }
}

/// Runs one round: exactly one message per camera, delivered along graph edges.
pub fn exchange(messages: Vec<CameraMessage>, graph: &TopologyGraph) -> Result<Vec<Inbox>> {
    let mut round = SyncRound::new(graph.camera_count());
    for m in messages {
        round.send(m)?;
    }
    round.deliver(graph)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameBandwidth {
    pub tracker_bytes: u64,
    pub appearance_bytes: u64,
}

impl FrameBandwidth {
    pub fn total(&self) -> u64 {
        self.tracker_bytes + self.appearance_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthLedger {
    pub element_bytes: u64,
    pub per_frame: Vec<FrameBandwidth>,
}

impl Default for BandwidthLedger {
    fn default() -> Self {
        Self::new(DEFAULT_ELEMENT_BYTES)
    }
}

impl BandwidthLedger {
    pub fn new(element_bytes: u64) -> Self {
        Self { element_bytes, per_frame: Vec::new() }
    }

    pub fn start_frame(&mut self) {
        self.per_frame.push(FrameBandwidth::default());
    }

    /// Adds one message to the current frame (opening a frame if none exists).
    pub fn measure(&mut self, message: &CameraMessage) {
        if self.per_frame.is_empty() {
            self.start_frame();
        }
        let eb = self.element_bytes;
        let frame = self.per_frame.last_mut().expect("frame exists");
        frame.tracker_bytes += message.trackers().iter().map(|w| w.element_count() as u64 * eb).sum::<u64>();
        frame.appearance_bytes += message.attachments().iter().map(|a| a.element_count() as u64 * eb).sum::<u64>();
    }

    pub fn total_tracker_bytes(&self) -> u64 {
        self.per_frame.iter().map(|f| f.tracker_bytes).sum()
    }

    pub fn total_appearance_bytes(&self) -> u64 {
        self.per_frame.iter().map(|f| f.appearance_bytes).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_tracker_bytes() + self.total_appearance_bytes()
    }

    pub fn frames(&self) -> usize {
        self.per_frame.len()
    }

    /// Mean bytes per frame over the recorded frames.
    pub fn mean_bytes_per_frame(&self) -> f64 {
        if self.per_frame.is_empty() {
            0.0
        } else {
            self.total_bytes() as f64 / self.per_frame.len() as f64
        }
    }
}

/// Functional form of [`BandwidthLedger::measure`].
pub fn measure_bandwidth(message: &CameraMessage, mut ledger: BandwidthLedger) -> BandwidthLedger {
    ledger.measure(message);
    ledger
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wire(camera: usize, counter: u64) -> TrackerWire {
        TrackerWire {
            id: TrackerId::new(camera, counter),
            prediction: Vec6::from_fn(|i, _| i as f64),
            info: InformationPair { u: Vec6::from_fn(|i, _| -(i as f64)), big_u: Mat6::from_fn(|i, j| (i * 6 + j) as f64) },
            last_seen: 7,
        }
    }

    fn attachment(dim: usize) -> AppearanceAttachment {
        let e = Embedding::normalized(vec![1.0; dim]).unwrap();
        AppearanceAttachment::new(TrackerId::new(0, 0), vec![e.clone(), e]).unwrap()
    }

    #[test]
    fn complete_graph_edges() {
        let g = build_topology(TopologyKind::Complete, 4, 0).unwrap();
        assert_eq!(g.edge_count(), 6);
        assert_eq!(g.diameter(), Some(1));
    }

    #[test]
    fn ring_of_three_is_complete() {
        let ring = build_topology(TopologyKind::Ring, 3, 0).unwrap();
        let complete = build_topology(TopologyKind::Complete, 3, 0).unwrap();
        assert_eq!(ring.edges(), complete.edges());
        assert_eq!(variant_count(TopologyKind::Ring, 3), 1);
    }

    #[test]
    fn disconnected_has_no_edges() {
        let g = build_topology(TopologyKind::Disconnected, 4, 0).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.diameter(), None);
    }

    #[test]
    fn ring_and_chain_variants_for_four_cameras() {
        assert_eq!(variant_count(TopologyKind::Ring, 4), 3);
        assert_eq!(variant_count(TopologyKind::Chain, 4), 12);
        let mut seen = std::collections::HashSet::new();
        for v in 0..3 {
            let g = build_topology(TopologyKind::Ring, 4, v).unwrap();
            assert_eq!(g.edge_count(), 4);
            assert!((0..4).all(|i| g.neighbors(i).count() == 2));
            assert!(seen.insert(g.edges()));
        }
        let chain = build_topology(TopologyKind::Chain, 4, 0).unwrap();
        assert_eq!(chain.edges(), vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(chain.diameter(), Some(3));
        assert!(matches!(build_topology(TopologyKind::Ring, 4, 3), Err(Error::InvalidVariant { .. })));
        assert!(build_topology(TopologyKind::Complete, 0, 0).is_err());
        assert!("star".parse::<TopologyKind>().is_err());
        assert_eq!("Ring".parse::<TopologyKind>().unwrap(), TopologyKind::Ring);
    }

    #[test]
    fn small_rings_and_chains() {
        assert_eq!(build_topology(TopologyKind::Ring, 1, 0).unwrap().edge_count(), 0);
        assert_eq!(build_topology(TopologyKind::Ring, 2, 0).unwrap().edge_count(), 1);
        assert_eq!(build_topology(TopologyKind::Chain, 2, 0).unwrap().edge_count(), 1);
        assert_eq!(build_topology(TopologyKind::Chain, 1, 0).unwrap().edge_count(), 0);
    }

    #[test]
    fn chain_delivers_to_both_sides_only() {
        let g = build_topology(TopologyKind::Chain, 3, 0).unwrap();
        let msgs = (0..3).map(|i| CameraMessage::new(i, 0)).collect();
        let inbox = exchange(msgs, &g).unwrap();
        let senders = |i: usize| inbox[i].iter().map(|m| m.sender).collect::<Vec<_>>();
        assert_eq!(senders(0), vec![1]);
        assert_eq!(senders(1), vec![0, 2]);
        assert_eq!(senders(2), vec![1]);
    }

    #[test]
    fn disconnected_and_complete_inboxes() {
        let g = build_topology(TopologyKind::Disconnected, 4, 0).unwrap();
        let inbox = exchange((0..4).map(|i| CameraMessage::new(i, 0)).collect(), &g).unwrap();
        assert!(inbox.iter().all(Vec::is_empty));
        let g = build_topology(TopologyKind::Complete, 4, 0).unwrap();
        let inbox = exchange((0..4).map(|i| CameraMessage::new(i, 0)).collect(), &g).unwrap();
        assert!(inbox.iter().all(|b| b.len() == 3));
    }

    #[test]
    fn second_send_is_a_contract_violation() {
        let mut round = SyncRound::new(2);
        round.send(CameraMessage::new(1, 0)).unwrap();
        assert_eq!(round.send(CameraMessage::new(1, 0)), Err(Error::DuplicateSend(1)));
        let g = build_topology(TopologyKind::Complete, 2, 0).unwrap();
        assert_eq!(round.deliver(&g).unwrap_err(), Error::MissingSend(0));
    }

    #[test]
    fn message_rejects_duplicate_tracker() {
        let mut m = CameraMessage::new(0, 0);
        m.push_tracker(wire(0, 1)).unwrap();
        assert!(m.push_tracker(wire(0, 1)).is_err());
        m.push_tracker(wire(1, 1)).unwrap();
        assert_eq!(m.trackers().len(), 2);
    }

    #[test]
    fn wire_is_51_elements() {
        let w = wire(2, 9);
        assert_eq!(w.to_elements().len(), 51);
        assert_eq!(TrackerWire::from_elements(&w.to_elements()), w);
    }

    #[test]
    fn single_wire_bandwidth() {
        let mut m = CameraMessage::new(0, 0);
        m.push_tracker(wire(0, 0)).unwrap();
        let ledger = measure_bandwidth(&m, BandwidthLedger::default());
        assert_eq!(ledger.total_tracker_bytes(), 816);
        assert!(ledger.total_tracker_bytes() < 1000);
    }

    #[test]
    fn attachment_bandwidth() {
        let mut m = CameraMessage::new(0, 0);
        m.push_attachment(attachment(512));
        let ledger = measure_bandwidth(&m, BandwidthLedger::default());
        assert_eq!(ledger.total_appearance_bytes(), 16_384);
        assert!(AppearanceAttachment::new(TrackerId::new(0, 0), vec![]).is_err());
    }

    #[test]
    fn four_cameras_nine_trackers() {
        let mut ledger = BandwidthLedger::default();
        ledger.start_frame();
        for cam in 0..4 {
            let mut m = CameraMessage::new(cam, 0);
            for t in 0..9 {
                m.push_tracker(wire(cam, t)).unwrap();
            }
            ledger.measure(&m);
        }
        assert_eq!(ledger.per_frame[0].tracker_bytes, 29_376);
        let paper_kb: f64 = 28.08;
        assert!(((29_376.0 / 1000.0) - paper_kb).abs() / paper_kb < 0.05);
    }

    proptest! {
        #[test]
        fn exchange_respects_adjacency(n in 1usize..7, mask in prop::collection::vec(any::<bool>(), 21)) {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if mask[k] { edges.push((i, j)); }
                    k += 1;
                }
            }
            let g = TopologyGraph::from_edges(n, &edges).unwrap();
            let inbox = exchange((0..n).map(|i| CameraMessage::new(i, 3)).collect(), &g).unwrap();
            for (j, received) in inbox.iter().enumerate() {
                for i in 0..n {
                    let got = received.iter().any(|m| m.sender == i);
                    prop_assert_eq!(got, g.is_adjacent(i, j));
                }
            }
        }

        #[test]
        fn ledger_total_is_sum_of_frames(frames in prop::collection::vec(prop::collection::vec((0usize..4, 0usize..2), 0..4), 0..6)) {
            let mut ledger = BandwidthLedger::default();
            let mut expected = 0u64;
            for f in &frames {
                ledger.start_frame();
                for (cam, &(trackers, atts)) in f.iter().enumerate() {
                    let mut m = CameraMessage::new(cam, 0);
                    for t in 0..trackers { m.push_tracker(wire(cam, t as u64)).unwrap(); }
                    for _ in 0..atts { m.push_attachment(attachment(8)); }
                    ledger.measure(&m);
                    expected += (trackers as u64 * 51 + atts as u64 * 16) * 16;
                }
            }
            prop_assert_eq!(ledger.total_bytes(), expected);
            prop_assert_eq!(ledger.per_frame.iter().map(FrameBandwidth::total).sum::<u64>(), expected);
        }
    }
}
