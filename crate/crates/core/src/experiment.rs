//! Experiment configuration, the synchronous simulation loop, sweeps and CSV.

use std::path::Path;
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manager::{CameraTracker, ManagerEvent, ManagerParams, PipelineMode, TrackerId};
use crate::metrics::{aggregate_across_cameras, evaluate_sequence, median, FrameAnnotations, MotReport, DEFAULT_MATCH_RADIUS};
use crate::model::DynamicsModel;
use crate::network::{build_topology, exchange, variant_count, BandwidthLedger, TopologyGraph, TopologyKind, DEFAULT_ELEMENT_BYTES};
use crate::scenario::{detections_for, CrossingParams, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScenarioConfig {
    /// Generated per seed.
    Crossing(CrossingParams),
    /// Fixed scenario; its seed is replaced by the run seed.
    Explicit(Scenario),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::Crossing(CrossingParams::default())
    }
}

impl ScenarioConfig {
    pub fn build(&self, seed: u64) -> Result<Scenario> {
        match self {
            ScenarioConfig::Crossing(p) => p.build(seed),
            ScenarioConfig::Explicit(s) => {
                let mut s = s.clone();
                s.seed = seed;
                s.validate()?;
                Ok(s)
            }
        }
    }

    pub fn camera_count(&self) -> usize {
        match self {
            ScenarioConfig::Crossing(p) => p.camera_count,
            ScenarioConfig::Explicit(s) => s.cameras.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_size: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        let d = DynamicsModel::default();
        Self { dt: d.dt, q_pos: d.q[(0, 0)], q_vel: d.q[(4, 4)], q_size: d.q[(2, 2)] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub topology: TopologyKind,
    pub variant: usize,
    pub mode: PipelineMode,
    pub alpha_lda: f64,
    pub alpha_gda: f64,
    pub tau: f64,
    pub tau_gda: f64,
    pub kappa: u64,
    pub epsilon: f64,
    pub gallery_size: usize,
    pub gallery_period: u64,
    pub tentative_max_gap: u64,
    pub match_radius: f64,
    pub element_bytes: u64,
    pub dynamics: DynamicsConfig,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let m = ManagerParams::default();
        Self {
            name: String::new(),
            scenario: ScenarioConfig::default(),
            topology: TopologyKind::Complete,
            variant: 0,
            mode: PipelineMode::DkfLdaDtm,
            alpha_lda: m.alpha_lda,
            alpha_gda: m.alpha_gda,
            tau: m.tau,
            tau_gda: m.tau_gda,
            kappa: m.kappa,
            epsilon: m.epsilon,
            gallery_size: m.gallery_capacity,
            gallery_period: m.gallery_period,
            tentative_max_gap: m.tentative_max_gap,
            match_radius: DEFAULT_MATCH_RADIUS,
            element_bytes: DEFAULT_ELEMENT_BYTES,
            dynamics: DynamicsConfig::default(),
            seed: 0,
            repetitions: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn manager_params(&self) -> ManagerParams {
        ManagerParams {
            alpha_lda: self.alpha_lda,
            alpha_gda: self.alpha_gda,
            tau: self.tau,
            tau_gda: self.tau_gda,
            kappa: self.kappa,
            epsilon: self.epsilon,
            gallery_capacity: self.gallery_size,
            gallery_period: self.gallery_period,
            tentative_max_gap: self.tentative_max_gap,
            mode: self.mode,
            ..ManagerParams::default()
        }
    }

    pub fn dynamics_model(&self) -> Result<DynamicsModel> {
        let d = &self.dynamics;
        DynamicsModel::new(d.dt, d.q_pos, d.q_vel, d.q_size).map_err(|e| Error::Config(format!("dynamics: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.manager_params().validate()?;
        self.dynamics_model()?;
        if !(self.match_radius > 0.0) {
            return Err(Error::Config(format!("match_radius must be positive, got {}", self.match_radius)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.element_bytes == 0 {
            return Err(Error::Config("element_bytes must be positive".into()));
        }
        let cameras = self.scenario.camera_count();
        if cameras == 0 {
            return Err(Error::Config("scenario needs at least one camera".into()));
        }
        let available = variant_count(self.topology, cameras);
        if self.variant >= available {
            return Err(Error::Config(format!("{} topology on {cameras} cameras has {available} variants, got variant {}", self.topology, self.variant)));
        }
        if let ScenarioConfig::Crossing(p) = &self.scenario {
            p.validate().map_err(|e| Error::Config(format!("scenario: {e}")))?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repetitions as u64).map(move |r| self.seed.wrapping_add(r))
    }
}

/// Everything produced by one simulated run.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// Per camera, per frame.
    pub truth: Vec<Vec<FrameAnnotations>>,
    pub hypotheses: Vec<Vec<FrameAnnotations>>,
    pub ledger: BandwidthLedger,
    pub events: Vec<ManagerEvent>,
    pub trackers: Vec<CameraTracker>,
}

/// Numeric identity used in hypothesis annotations.
pub fn annotation_id(id: TrackerId) -> u64 {
    ((id.camera as u64) << 40) | id.counter
}

/// Runs every frame of `scenario` over `graph`. Node `i` of the graph is
/// `scenario.cameras[i]`.
pub fn simulate(scenario: &Scenario, graph: &TopologyGraph, params: &ManagerParams, dynamics: &DynamicsModel, element_bytes: u64) -> Result<Simulation> {
    scenario.validate()?;
    if graph.camera_count() != scenario.cameras.len() {
        return Err(Error::InvalidParameter(format!("graph has {} cameras, scenario has {}", graph.camera_count(), scenario.cameras.len())));
    }
    let mut trackers: Vec<CameraTracker> = scenario
        .cameras
        .iter()
        .map(|c| CameraTracker::new(c.camera_id, *params, dynamics.clone()))
        .collect::<Result<_>>()?;
    let n = trackers.len();
    let mut truth = vec![Vec::with_capacity(scenario.frame_count as usize); n];
    let mut hypotheses = vec![Vec::with_capacity(scenario.frame_count as usize); n];
    let mut ledger = BandwidthLedger::new(element_bytes);
    let mut events = Vec::new();

    for frame in 0..scenario.frame_count {
        let messages = trackers
            .par_iter_mut()
            .enumerate()
            .map(|(i, t)| {
                let detections = detections_for(scenario, frame, scenario.cameras[i].camera_id)?;
                let mut m = t.compose(frame, &detections)?;
                m.sender = i;
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()?;
        ledger.start_frame();
        for m in &messages {
            ledger.measure(m);
        }
        let inboxes = exchange(messages, graph)?;
        trackers
            .par_iter_mut()
            .zip(inboxes.par_iter())
            .map(|(t, inbox)| t.consume(frame, inbox))
            .collect::<Result<Vec<()>>>()?;
        for (i, t) in trackers.iter_mut().enumerate() {
            let cam = &scenario.cameras[i];
            let visible = scenario.visible_truth(frame, cam.camera_id)?;
            truth[i].push(FrameAnnotations::new(frame, visible));
            let hyp = t
                .hypotheses()
                .into_iter()
                .filter(|&(_, x, y)| cam.sees(x, y))
                .map(|(id, x, y)| (annotation_id(id), x, y))
                .collect();
            hypotheses[i].push(FrameAnnotations::new(frame, hyp));
            events.extend(t.take_events());
        }
    }
    Ok(Simulation { truth, hypotheses, ledger, events, trackers })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub name: String,
    pub mode: PipelineMode,
    pub topology: TopologyKind,
    pub variant: usize,
    pub seed: u64,
    pub per_camera: Vec<MotReport>,
    pub aggregate: MotReport,
    pub tracker_bytes: u64,
    pub appearance_bytes: u64,
    pub frames: u64,
    #[serde(skip)]
    pub duration: Duration,
    #[serde(skip)]
    pub events: Vec<ManagerEvent>,
}

impl RunResult {
    pub fn total_kb_per_frame(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            (self.tracker_bytes + self.appearance_bytes) as f64 / self.frames as f64 / 1000.0
        }
    }
}

/// Runs `config` once with its own seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    run_with_seed(config, config.seed)
}

pub fn run_with_seed(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let start = Instant::now();
    config.validate()?;
    let scenario = config.scenario.build(seed)?;
    let graph = build_topology(config.topology, scenario.cameras.len(), config.variant)?;
    let sim = simulate(&scenario, &graph, &config.manager_params(), &config.dynamics_model()?, config.element_bytes)?;
    let per_camera = sim
        .truth
        .iter()
        .zip(&sim.hypotheses)
        .map(|(t, h)| evaluate_sequence(t, h, config.match_radius))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_across_cameras(&per_camera)?;
    Ok(RunResult {
        name: config.name.clone(),
        mode: config.mode,
        topology: config.topology,
        variant: config.variant,
        seed,
        per_camera,
        aggregate,
        tracker_bytes: sim.ledger.total_tracker_bytes(),
        appearance_bytes: sim.ledger.total_appearance_bytes(),
        frames: sim.ledger.frames() as u64,
        duration: start.elapsed(),
        events: sim.events,
    })
}

pub const CSV_COLUMNS: [&str; 15] = [
    "mode", "topology", "variant", "seed", "MOTA", "MOTP", "IDP", "IDR", "IDF1", "FP", "FN", "IDSW", "trackerKB", "appearanceKB", "totalKBperFrame",
];

#[derive(Debug, Clone, PartialEq)]
pub enum RowKind {
    Run(u64),
    Median,
    Failed(u64, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config_index: usize,
    pub mode: PipelineMode,
    pub topology: TopologyKind,
    pub variant: usize,
    pub kind: RowKind,
    pub report: MotReport,
    pub tracker_kb: f64,
    pub appearance_kb: f64,
    pub total_kb_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn fmt_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.rows {
            let seed = match &r.kind {
                RowKind::Run(s) | RowKind::Failed(s, _) => s.to_string(),
                RowKind::Median => "median".to_string(),
            };
            let head = [r.mode.to_string(), r.topology.to_string(), r.variant.to_string(), seed];
            let body: Vec<String> = if let RowKind::Failed(_, msg) = &r.kind {
                let mut v = vec![format!("error: {msg}")];
                v.extend(std::iter::repeat_n(String::new(), 10));
                v
            } else {
                let m = &r.report;
                vec![
                    format!("{:.6}", m.mota),
                    format!("{:.6}", m.motp),
                    format!("{:.6}", m.idp),
                    format!("{:.6}", m.idr),
                    format!("{:.6}", m.idf1),
                    fmt_count(m.fp),
                    fmt_count(m.fn_),
                    fmt_count(m.idsw),
                    format!("{:.3}", r.tracker_kb),
                    format!("{:.3}", r.appearance_kb),
                    format!("{:.6}", r.total_kb_per_frame),
                ]
            };
            w.write_record(head.iter().chain(body.iter())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

fn run_row(index: usize, config: &ExperimentConfig, r: &RunResult) -> SweepRow {
    SweepRow {
        config_index: index,
        mode: config.mode,
        topology: config.topology,
        variant: config.variant,
        kind: RowKind::Run(r.seed),
        report: r.aggregate,
        tracker_kb: r.tracker_bytes as f64 / 1000.0,
        appearance_kb: r.appearance_bytes as f64 / 1000.0,
        total_kb_per_frame: r.total_kb_per_frame(),
    }
}

/// Runs every repetition of every config, in parallel, and tabulates one row
/// per run plus one median row per config.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<(SweepTable, Vec<Result<RunResult>>)> {
    if configs.is_empty() {
        return Err(Error::Config("sweep needs at least one config".into()));
    }
    for c in configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u64)> = configs.iter().enumerate().flat_map(|(i, c)| c.seeds().map(move |s| (i, s))).collect();
    let results: Vec<Result<RunResult>> = jobs.par_iter().map(|&(i, seed)| run_with_seed(&configs[i], seed)).collect();

    let mut table = SweepTable::default();
    for (i, config) in configs.iter().enumerate() {
        let mut ok: Vec<SweepRow> = Vec::new();
        for ((ci, seed), r) in jobs.iter().zip(&results) {
            if *ci != i {
                continue;
            }
            match r {
                Ok(r) => {
                    let row = run_row(i, config, r);
                    ok.push(row.clone());
                    table.rows.push(row);
                }
                Err(e) => {
                    warn!("config {i} seed {seed} failed: {e}");
                    table.rows.push(SweepRow {
                        config_index: i,
                        mode: config.mode,
                        topology: config.topology,
                        variant: config.variant,
                        kind: RowKind::Failed(*seed, e.to_string()),
                        report: MotReport::default(),
                        tracker_kb: 0.0,
                        appearance_kb: 0.0,
                        total_kb_per_frame: 0.0,
                    });
                }
            }
        }
        if ok.is_empty() {
            continue;
        }
        let reports: Vec<MotReport> = ok.iter().map(|r| r.report).collect();
        let col = |f: fn(&SweepRow) -> f64| median(&ok.iter().map(f).collect::<Vec<_>>());
        table.rows.push(SweepRow {
            config_index: i,
            mode: config.mode,
            topology: config.topology,
            variant: config.variant,
            kind: RowKind::Median,
            report: aggregate_across_cameras(&reports)?,
            tracker_kb: col(|r| r.tracker_kb)?,
            appearance_kb: col(|r| r.appearance_kb)?,
            total_kb_per_frame: col(|r| r.total_kb_per_frame)?,
        });
    }
    Ok((table, results))
}
