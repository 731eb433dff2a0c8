use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dkcf_core::appearance::{appearance_similarity as similarity, Embedding, Gallery};
use dkcf_core::assignment::solve_gated;
use dkcf_core::dkf::{consensus_update as update, encode_measurement as encode, ConsensusInput, InformationPair};
use dkcf_core::experiment::{self, run_with_seed};
use dkcf_core::manager::{update_last_seen as last_seen, PipelineMode};
use dkcf_core::metrics::{self, FrameAnnotations, MotReport};
use dkcf_core::model::{self, GaussianBelief, Mat4, Mat6, Measurement, Vec4, Vec6};
use dkcf_core::network::{self, TopologyKind};

fn value_error(e: dkcf_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec6(v: &[f64], what: &str) -> PyResult<Vec6> {
    if v.len() != 6 {
        return Err(PyValueError::new_err(format!("{what} needs 6 values, got {}", v.len())));
    }
    Ok(Vec6::from_column_slice(v))
}

fn mat6(m: &[Vec<f64>], what: &str) -> PyResult<Mat6> {
    if m.len() != 6 || m.iter().any(|r| r.len() != 6) {
        return Err(PyValueError::new_err(format!("{what} must be 6x6")));
    }
    Ok(Mat6::from_fn(|i, j| m[i][j]))
}

fn mat4(m: &[Vec<f64>], what: &str) -> PyResult<Mat4> {
    if m.len() != 4 || m.iter().any(|r| r.len() != 4) {
        return Err(PyValueError::new_err(format!("{what} must be 4x4")));
    }
    Ok(Mat4::from_fn(|i, j| m[i][j]))
}

fn rows6(m: &Mat6) -> Vec<Vec<f64>> {
    (0..6).map(|i| (0..6).map(|j| m[(i, j)]).collect()).collect()
}

fn report_dict<'py>(py: Python<'py>, r: &MotReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("MOTA", r.mota)?;
    d.set_item("MOTP", r.motp)?;
    d.set_item("IDP", r.idp)?;
    d.set_item("IDR", r.idr)?;
    d.set_item("IDF1", r.idf1)?;
    d.set_item("FP", r.fp)?;
    d.set_item("FN", r.fn_)?;
    d.set_item("IDSW", r.idsw)?;
    Ok(d)
}

/// Constant-velocity dynamics over `(x, y, w, h, vx, vy)`.
#[pyclass(name = "DynamicsModel", frozen, from_py_object)]
#[derive(Clone)]
struct PyDynamics {
    inner: model::DynamicsModel,
}

#[pymethods]
impl PyDynamics {
    #[new]
    #[pyo3(signature = (dt = 1.0, q_pos = 0.05, q_vel = 0.01, q_size = 0.01))]
    fn new(dt: f64, q_pos: f64, q_vel: f64, q_size: f64) -> PyResult<Self> {
        Ok(Self { inner: model::DynamicsModel::new(dt, q_pos, q_vel, q_size).map_err(value_error)? })
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows6(&self.inner.a)
    }

    #[getter]
    fn q(&self) -> Vec<Vec<f64>> {
        rows6(&self.inner.q)
    }

    fn predict(&self, mean: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok((self.inner.a * vec6(&mean, "mean")?).as_slice().to_vec())
    }
}

/// Information pair `(u, U)` for a measurement `z = (x, y, w, h)` with covariance `r`.
#[pyfunction]
fn encode_measurement(z: Vec<f64>, r: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    if z.len() != 4 {
        return Err(PyValueError::new_err("z needs 4 values"));
    }
    let m = Measurement::new(Vec4::from_column_slice(&z), mat4(&r, "r")?, Embedding::new(vec![1.0]).map_err(value_error)?, 0, 0).map_err(value_error)?;
    let pair = encode(&m, &model::DynamicsModel::default().h).map_err(value_error)?;
    Ok((pair.u.as_slice().to_vec(), rows6(&pair.big_u)))
}

/// `(u, U, prediction)` of one neighbour.
type NeighborInput = (Option<Vec<f64>>, Option<Vec<Vec<f64>>>, Vec<f64>);

/// One Kalman-consensus correction. `neighbors` holds `(u, U, prediction)` per
/// neighbour; pass `None` for `u`/`U` when a camera has no measurement.
/// Returns the corrected mean and the propagated covariance.
#[pyfunction]
#[pyo3(signature = (prediction, cov, u = None, big_u = None, neighbors = Vec::new(), dynamics = None))]
fn consensus_update(
    prediction: Vec<f64>,
    cov: Vec<Vec<f64>>,
    u: Option<Vec<f64>>,
    big_u: Option<Vec<Vec<f64>>>,
    neighbors: Vec<NeighborInput>,
    dynamics: Option<PyDynamics>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let pair = |u: Option<Vec<f64>>, big: Option<Vec<Vec<f64>>>| -> PyResult<InformationPair> {
        match (u, big) {
            (Some(u), Some(b)) => Ok(InformationPair { u: vec6(&u, "u")?, big_u: mat6(&b, "U")? }),
            (None, None) => Ok(InformationPair::zero()),
            _ => Err(PyValueError::new_err("u and U must be given together")),
        }
    };
    let own_prediction = vec6(&prediction, "prediction")?;
    let mut input = ConsensusInput::isolated(pair(u, big_u)?, own_prediction);
    for (nu, nbig, np) in neighbors {
        input.neighbor_pairs.push(pair(nu, nbig)?);
        input.neighbor_predictions.push(vec6(&np, "neighbour prediction")?);
    }
    let dynamics = dynamics.map(|d| d.inner).unwrap_or_default();
    let prior = GaussianBelief::new(own_prediction, mat6(&cov, "cov")?).map_err(value_error)?;
    let out = update(&prior, &input, &dynamics).map_err(value_error)?;
    Ok((out.mean.as_slice().to_vec(), rows6(&out.cov)))
}

/// Optimal assignment over a cost matrix whose `None` entries are forbidden.
#[pyfunction]
fn solve_assignment(cost: Vec<Vec<Option<f64>>>) -> PyResult<Vec<(usize, usize)>> {
    if let Some(first) = cost.first() {
        if cost.iter().any(|r| r.len() != first.len()) {
            return Err(PyValueError::new_err("cost rows must have equal length"));
        }
    }
    Ok(solve_gated(&cost))
}

/// Minimum cosine distance between `query` and the gallery entries.
#[pyfunction]
fn appearance_similarity(query: Vec<f64>, gallery: Vec<Vec<f64>>) -> PyResult<f64> {
    let capacity = gallery.len().max(1);
    let entries = gallery.into_iter().map(Embedding::new).collect::<Result<Vec<_>, _>>().map_err(value_error)?;
    let g = Gallery::with_entries(capacity, 1, entries);
    similarity(&Embedding::new(query).map_err(value_error)?, &g).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (detected, own, neighbors = Vec::new()))]
fn update_last_seen(detected: bool, own: u64, neighbors: Vec<u64>) -> u64 {
    last_seen(detected, own, &neighbors)
}

type Frames = Vec<(u64, Vec<(u64, f64, f64)>)>;

/// CLEAR MOT and identity metrics for one camera. Frames are
/// `(frame, [(id, x, y), ...])`.
#[pyfunction]
#[pyo3(signature = (truth, hypothesis, match_radius = metrics::DEFAULT_MATCH_RADIUS))]
fn evaluate_sequence<'py>(py: Python<'py>, truth: Frames, hypothesis: Frames, match_radius: f64) -> PyResult<Bound<'py, PyDict>> {
    let convert = |f: Frames| f.into_iter().map(|(frame, items)| FrameAnnotations::new(frame, items)).collect::<Vec<_>>();
    let report = metrics::evaluate_sequence(&convert(truth), &convert(hypothesis), match_radius).map_err(value_error)?;
    report_dict(py, &report)
}

/// Experiment settings; build from JSON or start from the defaults.
#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: experiment::ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => experiment::ExperimentConfig::from_json(text).map_err(value_error)?,
            None => experiment::ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: experiment::ExperimentConfig::load(&path).map_err(value_error)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.mode = mode.parse::<PipelineMode>().map_err(value_error)?;
        Ok(())
    }

    #[getter]
    fn topology(&self) -> String {
        self.inner.topology.to_string()
    }

    #[setter]
    fn set_topology(&mut self, topology: &str) -> PyResult<()> {
        self.inner.topology = topology.parse::<TopologyKind>().map_err(value_error)?;
        Ok(())
    }

    #[getter]
    fn variant(&self) -> usize {
        self.inner.variant
    }

    #[setter]
    fn set_variant(&mut self, variant: usize) {
        self.inner.variant = variant;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn repetitions(&self) -> usize {
        self.inner.repetitions
    }

    #[setter]
    fn set_repetitions(&mut self, n: usize) {
        self.inner.repetitions = n;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_error)
    }

    /// Runs once with `seed`, or with the config's own seed.
    #[pyo3(signature = (seed = None))]
    fn run(&self, py: Python<'_>, seed: Option<u64>) -> PyResult<PyRunResult> {
        let config = self.inner.clone();
        let seed = seed.unwrap_or(config.seed);
        let result = py.detach(move || run_with_seed(&config, seed)).map_err(value_error)?;
        Ok(PyRunResult { inner: result })
    }

    fn __repr__(&self) -> String {
        format!("ExperimentConfig(mode={}, topology={}, variant={}, seed={})", self.inner.mode, self.inner.topology, self.inner.variant, self.inner.seed)
    }
}

#[pyclass(name = "RunResult", frozen)]
struct PyRunResult {
    inner: experiment::RunResult,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn topology(&self) -> String {
        self.inner.topology.to_string()
    }

    #[getter]
    fn frames(&self) -> u64 {
        self.inner.frames
    }

    #[getter]
    fn tracker_bytes(&self) -> u64 {
        self.inner.tracker_bytes
    }

    #[getter]
    fn appearance_bytes(&self) -> u64 {
        self.inner.appearance_bytes
    }

    #[getter]
    fn total_kb_per_frame(&self) -> f64 {
        self.inner.total_kb_per_frame()
    }

    /// Metrics aggregated across cameras.
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        report_dict(py, &self.inner.aggregate)
    }

    fn per_camera<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.per_camera.iter().map(|r| report_dict(py, r)).collect()
    }

    /// Manager log lines, e.g. `frame=3 camera=1 init 1:0`.
    fn events(&self) -> Vec<String> {
        self.inner.events.iter().map(ToString::to_string).collect()
    }

    fn __repr__(&self) -> String {
        let a = &self.inner.aggregate;
        format!("RunResult(mode={}, seed={}, MOTA={:.4}, IDF1={:.4})", self.inner.mode, self.inner.seed, a.mota, a.idf1)
    }
}

/// Runs every config for all its repetitions and returns the CSV table.
#[pyfunction]
fn sweep(py: Python<'_>, configs: Vec<PyConfig>) -> PyResult<String> {
    let configs: Vec<_> = configs.into_iter().map(|c| c.inner).collect();
    py.detach(move || experiment::sweep(&configs).map(|(t, _)| t.to_csv())).map_err(value_error)
}

#[pymodule]
fn dkcf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDynamics>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(encode_measurement, m)?)?;
    m.add_function(wrap_pyfunction!(consensus_update, m)?)?;
    m.add_function(wrap_pyfunction!(solve_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(appearance_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(update_last_seen, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("TRACKER_WIRE_ELEMENTS", network::TRACKER_WIRE_ELEMENTS)?;
    m.add("DEFAULT_ELEMENT_BYTES", network::DEFAULT_ELEMENT_BYTES)?;
    m.add("MODES", PipelineMode::all().iter().map(ToString::to_string).collect::<Vec<_>>())?;
    Ok(())
}
