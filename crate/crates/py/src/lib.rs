//! Python bindings: configuration, datasets, training, evaluation, inference
//! and segment metrics.

use std::path::PathBuf;

use gesture_core::cli::bench;
use gesture_core::data::synth::write_jigsaws_corpus;
use gesture_core::data::{self, synthesize_corpus, KinematicFrame, LabeledTrial, SynthConfig};
use gesture_core::experiment::louo::{label_map, train_models, training_set};
use gesture_core::experiment::{load_checkpoint, run_louo as louo, save_checkpoint, Checkpoint, NoHooks, TrainConfig};
use gesture_core::inference::{Engine as CoreEngine, Precision};
use gesture_core::metrics::{edit_score as edit, f1_at_k as f1, segments_from_labels};
use gesture_core::nn::Tensor2;
use gesture_core::Error;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Row-major tensor from nested lists; rows must have equal length.
pub fn tensor_from_rows(rows: &[Vec<f64>]) -> gesture_core::Result<Tensor2> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::Contract(format!(
            "row {i} has {} values, row 0 has {cols}",
            r.len()
        )));
    }
    Tensor2::from_vec(rows.len(), cols, rows.concat())
}

pub fn tensor_to_rows(t: &Tensor2) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn parse_precision(s: &str) -> PyResult<Precision> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        _ => Err(PyValueError::new_err(format!(
            "precision must be \"f32\" or \"f64\", got {s:?}"
        ))),
    }
}

/// Training and model configuration. `overrides` are `key=value` strings.
#[pyclass(module = "gesture", name = "Config", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: TrainConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (overrides = Vec::new()))]
    fn new(overrides: Vec<String>) -> PyResult<Self> {
        let mut inner = TrainConfig::default();
        inner.apply_overrides(&overrides).map_err(py_err)?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Changes one key; the configuration is left as it was if the result
    /// is invalid.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        let mut next = self.inner.clone();
        next.set(key, value).map_err(py_err)?;
        next.validate().map_err(py_err)?;
        self.inner = next;
        Ok(())
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(features={}, epochs={}, seed={})",
            self.inner.features, self.inner.epochs, self.inner.seed
        )
    }
}

/// One recording with fused per-frame features and labels.
#[pyclass(module = "gesture", name = "Trial", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrial {
    inner: LabeledTrial,
}

#[pymethods]
impl PyTrial {
    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn subject(&self) -> &str {
        &self.inner.subject
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Per-frame labels such as "G3"; unlabeled frames are "-".
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(ToString::to_string).collect()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        tensor_to_rows(&self.inner.features)
    }

    fn trajectory(&self) -> Vec<Vec<f64>> {
        tensor_to_rows(&self.inner.trajectory)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trial(id={:?}, frames={}, dim={})",
            self.inner.id,
            self.inner.frames(),
            self.inner.dim()
        )
    }
}

fn unwrap_trials(trials: &[PyRef<'_, PyTrial>]) -> Vec<LabeledTrial> {
    trials.iter().map(|t| t.inner.clone()).collect()
}

#[pyfunction]
#[pyo3(signature = (manifest, features = "K14"))]
fn load_dataset(manifest: PathBuf, features: &str) -> PyResult<Vec<PyTrial>> {
    let selection = features.parse().map_err(py_err)?;
    let trials = data::load_dataset(&manifest, &selection).map_err(py_err)?;
    Ok(trials.into_iter().map(|inner| PyTrial { inner }).collect())
}

/// Writes a synthetic corpus in the on-disk dataset layout and returns the
/// manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, subjects = 5, trials = 4, classes = 6, noise = 0.1, seed = 0))]
fn synthesize(
    out_dir: PathBuf,
    subjects: usize,
    trials: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> PyResult<PathBuf> {
    let cfg = SynthConfig {
        subjects,
        trials_per_subject: trials,
        classes,
        noise,
        ..SynthConfig::default()
    };
    let corpus = synthesize_corpus(&cfg, seed).map_err(py_err)?;
    write_jigsaws_corpus(&out_dir, &cfg, &corpus, seed).map_err(py_err)
}

/// Leave-one-user-out evaluation. Returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (trials, config, fold = None))]
fn run_louo(
    py: Python<'_>,
    trials: Vec<PyRef<'_, PyTrial>>,
    config: &PyConfig,
    fold: Option<String>,
) -> PyResult<String> {
    let trials = unwrap_trials(&trials);
    let cfg = config.inner.clone();
    let report = py
        .detach(move || louo(&trials, &cfg, fold.as_deref(), &mut NoHooks))
        .map_err(py_err)?
        .0;
    report.to_json().map_err(py_err)
}

/// Trains on all trials, or on all but `holdout`'s, and writes a checkpoint.
#[pyfunction]
#[pyo3(signature = (trials, config, out, holdout = None))]
fn train(
    py: Python<'_>,
    trials: Vec<PyRef<'_, PyTrial>>,
    config: &PyConfig,
    out: PathBuf,
    holdout: Option<String>,
) -> PyResult<()> {
    let trials = unwrap_trials(&trials);
    let cfg = config.inner.clone();
    py.detach(move || {
        let labels = label_map(&trials, &cfg)?;
        let (stream, train) = training_set(&trials, holdout.as_deref())?;
        let models = train_models(&train, &labels, &cfg, stream, "train", &mut NoHooks)?;
        save_checkpoint(&out, &Checkpoint::from_models(&cfg, &models, false))
    })
    .map_err(py_err)
}

/// Recognition and prediction for one observation window at a time.
#[pyclass(module = "gesture", name = "Engine", frozen)]
pub struct PyEngine {
    inner: CoreEngine,
}

#[pymethods]
impl PyEngine {
    #[staticmethod]
    #[pyo3(signature = (path, precision = "f32"))]
    fn load(path: PathBuf, precision: &str) -> PyResult<Self> {
        let ck = load_checkpoint(&path).map_err(py_err)?;
        Ok(Self {
            inner: CoreEngine::from_checkpoint(ck, parse_precision(precision)?),
        })
    }

    /// Randomly initialised models, for timing without a checkpoint.
    #[staticmethod]
    #[pyo3(signature = (config, d_in = 14, precision = "f32"))]
    fn untrained(config: &PyConfig, d_in: usize, precision: &str) -> PyResult<Self> {
        let inner = CoreEngine::untrained(config.inner.clone(), d_in, parse_precision(precision)?).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d_in(&self) -> usize {
        self.inner.d_in()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Runs the models on prepared features (`w_obs` rows of `d_in`).
    /// Returns recognized and predicted class indices and the absolute
    /// trajectory rows.
    fn run(&self, features: Vec<Vec<f64>>, origin: [f64; 6]) -> PyResult<(Vec<usize>, Vec<usize>, Vec<Vec<f64>>)> {
        let x = tensor_from_rows(&features).map_err(py_err)?;
        let (obs, pred, traj) = self.inner.run(&x, &origin).map_err(py_err)?;
        Ok((obs, pred, tensor_to_rows(&traj)))
    }

    /// Full path from raw 76-column kinematic rows. Returns the JSON record
    /// the command-line `infer` prints for one window.
    fn infer(&self, frames: Vec<[f64; 76]>) -> PyResult<String> {
        let kin: Vec<KinematicFrame> = frames.into_iter().map(KinematicFrame).collect();
        let out = self.inner.infer(&kin, &[]).map_err(py_err)?;
        serde_json::to_string(&out).map_err(json_err)
    }

    /// Latency benchmark on random inputs. Returns the report as JSON.
    #[pyo3(signature = (iterations = 110, warmup = 10, seed = 0))]
    fn bench(&self, py: Python<'_>, iterations: usize, warmup: usize, seed: u64) -> PyResult<String> {
        let report = py
            .detach(|| bench(&self.inner, iterations, warmup, seed))
            .map_err(py_err)?;
        serde_json::to_string(&report).map_err(json_err)
    }
}

/// Segmental edit score in [0, 100]. `None` marks unlabeled frames.
#[pyfunction]
fn edit_score(pred: Vec<Option<usize>>, truth: Vec<Option<usize>>) -> f64 {
    edit(&pred, &truth)
}

/// Segmental F1 at IoU threshold `k` percent.
#[pyfunction]
fn f1_at_k(pred: Vec<Option<usize>>, truth: Vec<Option<usize>>, k: u32) -> f64 {
    f1(&segments_from_labels(&pred), &segments_from_labels(&truth), k)
}

#[pymodule]
fn gesture(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTrial>()?;
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(run_louo, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(edit_score, m)?)?;
    m.add_function(wrap_pyfunction!(f1_at_k, m)?)?;
    Ok(())
}
