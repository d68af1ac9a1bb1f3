//! Python bindings. Matrices cross the boundary as lists of rows; GP inputs
//! are `K x D` (one sample per row) like most Python libraries.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use aimole::dynamics::{io_predict, linearize_io, IoModel as CoreIoModel, IoRegressor, LiftedJacobian, TrialRecord};
use aimole::gp::{self, FitConfig, KernelKind};
use aimole::harness::{self, CampaignConfig};
use aimole::ilc::{self, InitConfig, Variant};
use aimole::plant::{self, PlantCatalog, PlantId, PlantSpec};
use aimole::signal;
use aimole::Error;

create_exception!(aimole_py, DivergenceError, PyRuntimeError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::NotFound(_) => PyFileNotFoundError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        Error::Divergence { .. } | Error::GenerationFailed(_) => DivergenceError::new_err(msg),
        Error::Numerical(_) | Error::DegenerateModel { .. } | Error::ActuationIneffective { .. } => {
            PyArithmeticError::new_err(msg)
        }
        Error::InvalidArgument(_) | Error::Config(_) | Error::Parse { .. } => PyValueError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for aimole::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn to_list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn parse_variant(s: &str) -> PyResult<Variant> {
    s.parse().map_err(py_err)
}

#[pyclass(name = "KernelParams", module = "aimole_py", skip_from_py_object)]
#[derive(Clone)]
struct PyKernelParams {
    inner: gp::KernelParams,
}

#[pymethods]
impl PyKernelParams {
    #[new]
    fn new(length_scales: Vec<f64>, noise_variance: f64) -> PyResult<Self> {
        Ok(Self {
            inner: gp::KernelParams::new(length_scales, noise_variance).py()?,
        })
    }

    #[getter]
    fn length_scales(&self) -> Vec<f64> {
        self.inner.length_scales.clone()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance
    }

    fn __repr__(&self) -> String {
        format!(
            "KernelParams(length_scales={:?}, noise_variance={:e})",
            self.inner.length_scales, self.inner.noise_variance
        )
    }
}

fn dataset(x: &[Vec<f64>], y: Vec<f64>) -> PyResult<gp::GpDataset> {
    let design = rows_to_matrix(x)?.transpose();
    gp::GpDataset::new(design, vector(y)).py()
}

fn kind(ard: bool) -> KernelKind {
    if ard {
        KernelKind::Ard
    } else {
        KernelKind::Shared
    }
}

/// Gaussian-process regression with a squared-exponential kernel.
#[pyclass(name = "GpModel", module = "aimole_py")]
struct PyGpModel {
    inner: gp::GpModel,
}

#[pymethods]
impl PyGpModel {
    /// Fit hyperparameters by evidence maximization.
    #[staticmethod]
    #[pyo3(signature = (x, y, ard = true, seed = 0, starts = 5))]
    fn fit(x: Vec<Vec<f64>>, y: Vec<f64>, ard: bool, seed: u64, starts: usize) -> PyResult<Self> {
        let cfg = FitConfig {
            seed,
            starts,
            ..FitConfig::default()
        };
        Ok(Self {
            inner: gp::gp_fit(dataset(&x, y)?, kind(ard), &cfg).py()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (x, y, params, ard = true))]
    fn from_params(x: Vec<Vec<f64>>, y: Vec<f64>, params: PyRef<'_, PyKernelParams>, ard: bool) -> PyResult<Self> {
        Ok(Self {
            inner: gp::GpModel::from_params(dataset(&x, y)?, params.inner.clone(), kind(ard)).py()?,
        })
    }

    #[getter]
    fn params(&self) -> PyKernelParams {
        PyKernelParams {
            inner: self.inner.params().clone(),
        }
    }

    /// Log marginal likelihood at the current parameters and its gradient
    /// with respect to the log parameters.
    fn log_marginal_likelihood(&self) -> PyResult<(f64, Vec<f64>)> {
        gp::log_marginal_likelihood(self.inner.dataset(), self.inner.params(), self.inner.kind()).py()
    }

    fn predict_mean(&self, q: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let q = rows_to_matrix(&q)?.transpose();
        Ok(to_list(&gp::gp_predict_mean(&self.inner, &q).py()?))
    }

    fn predict_cov(&self, q: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let q = rows_to_matrix(&q)?.transpose();
        Ok(matrix_to_rows(&gp::gp_predict_cov(&self.inner, &q).py()?))
    }
}

/// A simulated plant with its parameters.
#[pyclass(name = "Plant", module = "aimole_py")]
struct PyPlant {
    spec: PlantSpec,
}

#[pymethods]
impl PyPlant {
    /// `name` is one of cube, twipr, pendu, linear; `path` points to a
    /// parameter file, the built-in parameters are used otherwise.
    #[new]
    #[pyo3(signature = (name, path = None))]
    fn new(name: &str, path: Option<PathBuf>) -> PyResult<Self> {
        let id: PlantId = name.parse().py()?;
        let catalog = match path {
            Some(p) => PlantCatalog::load(&p).py()?,
            None => PlantCatalog::builtin(),
        };
        Ok(Self {
            spec: catalog.get(id).py()?.clone(),
        })
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.spec.fs
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("plant serializes")
    }

    /// Returns `(y, clean_y, states)` with states as `M` rows of `N` samples.
    #[pyo3(signature = (u, seed = 0, noise = true))]
    fn run_trial(&self, u: Vec<f64>, seed: u64, noise: bool) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let sim = plant::run_trial(&self.spec, &vector(u), seed, noise).py()?;
        let states = sim.record.state.as_ref().map(matrix_to_rows).unwrap_or_default();
        Ok((to_list(&sim.record.output), to_list(&sim.clean_output), states))
    }

    /// Exact lifted input-output matrix (linear plant only).
    fn lifted_matrix(&self, n: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_to_rows(&plant::lifted_matrix_linear(&self.spec, n).py()?))
    }
}

#[pyclass(name = "Reference", module = "aimole_py")]
struct PyReference {
    inner: signal::Reference,
}

#[pymethods]
impl PyReference {
    #[staticmethod]
    #[pyo3(signature = (plant, seed, cutoff_hz = 1.0, input_variance = 0.01, samples = 100))]
    fn generate(plant: PyRef<'_, PyPlant>, seed: u64, cutoff_hz: f64, input_variance: f64, samples: usize) -> PyResult<Self> {
        Ok(Self {
            inner: signal::generate_reference(&plant.spec, seed, cutoff_hz, input_variance, samples).py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: signal::load_reference(&path).py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        signal::save_reference(&self.inner, &path).py()
    }

    #[getter]
    fn r(&self) -> Vec<f64> {
        to_list(&self.inner.r)
    }

    #[getter]
    fn fs(&self) -> f64 {
        self.inner.fs
    }

    #[getter]
    fn realizing_input(&self) -> Option<Vec<f64>> {
        self.inner.realizing_input.as_ref().map(to_list)
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Input/output model of the lifted plant map, trained on whole trials.
#[pyclass(name = "IoModel", module = "aimole_py")]
struct PyIoModel {
    inner: CoreIoModel,
}

#[pymethods]
impl PyIoModel {
    #[staticmethod]
    #[pyo3(signature = (inputs, outputs, seed = 0))]
    fn fit(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>, seed: u64) -> PyResult<Self> {
        if inputs.len() != outputs.len() {
            return Err(PyValueError::new_err("need one output per input trajectory"));
        }
        let trials = inputs
            .into_iter()
            .zip(outputs)
            .enumerate()
            .map(|(i, (u, y))| TrialRecord::new(i + 1, vector(u), vector(y), None))
            .collect::<aimole::Result<Vec<_>>>()
            .py()?;
        let cfg = FitConfig {
            seed,
            ..FitConfig::default()
        };
        Ok(Self {
            inner: CoreIoModel::fit(&trials, IoRegressor::default(), &cfg).py()?,
        })
    }

    fn predict(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(to_list(&io_predict(&self.inner, &vector(u)).py()?))
    }

    /// Lifted Jacobian of the predicted output at `u`.
    fn linearize(&self, u: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_to_rows(&linearize_io(&self.inner, &vector(u)).py()?.0))
    }
}

/// Learning gain for a lifted Jacobian with the model-derived weights.
#[pyfunction]
#[pyo3(signature = (p, variant = "io"))]
fn learning_gain(p: Vec<Vec<f64>>, variant: &str) -> PyResult<Vec<Vec<f64>>> {
    let p = LiftedJacobian(rows_to_matrix(&p)?);
    let weights = ilc::compute_weights(&p, parse_variant(variant)?).py()?;
    Ok(matrix_to_rows(&ilc::learning_gain(&p, &weights).py()?.0))
}

#[pyfunction]
fn update_input(u: Vec<f64>, e: Vec<f64>, gain: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let gain = ilc::LearningGain(rows_to_matrix(&gain)?);
    Ok(to_list(&ilc::update_input(&vector(u), &vector(e), &gain).py()?))
}

#[pyfunction]
#[pyo3(signature = (r, fs, variance = 1e-4, seed = 0))]
fn initial_input(r: Vec<f64>, fs: f64, variance: f64, seed: u64) -> PyResult<Vec<f64>> {
    let cfg = InitConfig {
        input_variance: variance,
        seed,
        ..InitConfig::default()
    };
    Ok(to_list(&ilc::initial_input(&vector(r), &cfg, fs).py()?))
}

/// `(relative_raw, eps)` of an output against a reference.
#[pyfunction]
#[pyo3(signature = (r, y, repetitive_floor = 0.0))]
fn relative_error(r: Vec<f64>, y: Vec<f64>, repetitive_floor: f64) -> PyResult<(f64, f64)> {
    let r = vector(r);
    let e = signal::error_trajectory(&r, &vector(y)).py()?;
    let m = signal::relative_error(&e, &r, repetitive_floor).py()?;
    Ok((m.relative_raw, m.relative))
}

#[pyfunction]
fn max_repetitive_error(outputs: Vec<Vec<f64>>, r: Vec<f64>) -> PyResult<f64> {
    let outputs: Vec<DVector<f64>> = outputs.into_iter().map(vector).collect();
    signal::max_repetitive_error(&outputs, &vector(r)).py()
}

#[pyfunction]
#[pyo3(signature = (r, fs, power_threshold = 0.99))]
fn significant_frequency(r: Vec<f64>, fs: f64, power_threshold: f64) -> PyResult<f64> {
    signal::significant_frequency(&vector(r), fs, power_threshold).py()
}

#[pyfunction]
fn zero_phase_lowpass(x: Vec<f64>, cutoff_hz: f64, fs: f64) -> PyResult<Vec<f64>> {
    Ok(to_list(&signal::zero_phase_lowpass(&vector(x), cutoff_hz, fs).py()?))
}

#[pyclass(name = "CampaignLog", module = "aimole_py")]
struct PyCampaignLog {
    inner: harness::CampaignLog,
}

#[pymethods]
impl PyCampaignLog {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: harness::load_campaign(&dir).py()?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        harness::save_campaign(&self.inner, &dir).py()
    }

    #[getter]
    fn eps(&self) -> Vec<f64> {
        self.inner.eps()
    }

    #[getter]
    fn err_norms(&self) -> Vec<f64> {
        self.inner.err_norms()
    }

    #[getter]
    fn repetitive_floor(&self) -> f64 {
        self.inner.repetitive_floor
    }

    #[getter]
    fn input_variance(&self) -> f64 {
        self.inner.input_variance
    }

    #[getter]
    fn final_input(&self) -> Option<Vec<f64>> {
        self.inner.final_input.as_ref().map(to_list)
    }

    #[getter]
    fn config_json(&self) -> String {
        self.inner.config.to_json()
    }

    /// First trial (1-based) whose error is reduced by `fraction` relative to trial 1.
    fn trials_to(&self, fraction: f64) -> Option<usize> {
        self.inner.trials_to(fraction)
    }

    fn __len__(&self) -> usize {
        self.inner.entries.len()
    }
}

/// Run a learning campaign from a JSON config (empty object for defaults).
#[pyfunction]
#[pyo3(signature = (config_json = "{}"))]
fn run_learning(py: Python<'_>, config_json: &str) -> PyResult<PyCampaignLog> {
    let cfg = CampaignConfig::from_json(config_json, std::path::Path::new("<config>")).py()?;
    cfg.validate().py()?;
    let log = py.detach(|| harness::run_learning(&cfg)).py()?;
    Ok(PyCampaignLog { inner: log })
}

#[pymodule]
#[pyo3(name = "aimole_py")]
fn aimole_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyGpModel>()?;
    m.add_class::<PyPlant>()?;
    m.add_class::<PyReference>()?;
    m.add_class::<PyIoModel>()?;
    m.add_class::<PyCampaignLog>()?;
    m.add_function(wrap_pyfunction!(learning_gain, m)?)?;
    m.add_function(wrap_pyfunction!(update_input, m)?)?;
    m.add_function(wrap_pyfunction!(initial_input, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(max_repetitive_error, m)?)?;
    m.add_function(wrap_pyfunction!(significant_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(zero_phase_lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(run_learning, m)?)?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    Ok(())
}
