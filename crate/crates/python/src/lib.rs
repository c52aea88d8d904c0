//! Python module `rfd_sketch`. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rfd_sketch::data::{load_libsvm as load_dataset, normalize_labels};
use rfd_sketch::linalg;
use rfd_sketch::online::{self, StepTelemetry};
use rfd_sketch::sketch::{self, SketchVariant};
use rfd_sketch::{Algorithm, DenseMatrix, Error, OnsConfig, OnsState, RfdSketch, SketchConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Decomposition(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    DenseMatrix::from_rows(rows).map_err(py_err)
}

fn variant(name: &str) -> PyResult<SketchVariant> {
    match name.to_ascii_lowercase().as_str() {
        "robust" | "rfd" => Ok(SketchVariant::Robust),
        "frequent" | "fd" => Ok(SketchVariant::Frequent),
        "greedy" => Ok(SketchVariant::Greedy),
        other => Err(PyValueError::new_err(format!("unknown sketch variant {other:?}"))),
    }
}

/// Streaming covariance sketch: `BᵀB + αI` tracks `AᵀA`.
#[pyclass(module = "rfd_sketch", skip_from_py_object)]
#[derive(Clone)]
struct Sketch {
    inner: RfdSketch,
}

#[pymethods]
impl Sketch {
    #[new]
    #[pyo3(signature = (d, m, variant = "robust", alpha0 = 0.0, fast = false))]
    fn new(d: usize, m: usize, variant: &str, alpha0: f64, fast: bool) -> PyResult<Self> {
        let config = SketchConfig::new(m, self::variant(variant)?)
            .with_alpha0(alpha0)
            .with_fast_mode(fast);
        Ok(Sketch { inner: RfdSketch::new(config, d).map_err(py_err)? })
    }

    /// Appends one row; returns `σ_m²` if it triggered a compression.
    fn append(&mut self, row: Vec<f64>) -> PyResult<Option<f64>> {
        let outcome = self.inner.append_slice(&row).map_err(py_err)?;
        Ok(outcome.compressed.then_some(outcome.sigma_m_sq))
    }

    fn extend(&mut self, rows: Vec<Vec<f64>>) -> PyResult<()> {
        for row in &rows {
            self.inner.append_slice(row).map_err(py_err)?;
        }
        Ok(())
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.config().m
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.config().variant.name()
    }

    #[getter]
    fn rows_seen(&self) -> usize {
        self.inner.rows_seen()
    }

    #[getter]
    fn shrink_log(&self) -> Vec<f64> {
        self.inner.shrink_log().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Rows of `B` currently held.
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.sketch_matrix().to_rows()
    }

    /// `BᵀB + αI`, flushing a pending fast-mode buffer first.
    fn covariance(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(sketch::sketch_covariance(&self.inner).map_err(py_err)?.to_rows())
    }

    /// `‖AᵀA − (BᵀB + αI)‖₂ / ‖AᵀA‖₂` for the rows that were fed in.
    fn relative_error(&self, rows: Vec<Vec<f64>>) -> PyResult<f64> {
        sketch::relative_error(&matrix(&rows)?, &self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Sketch(d={}, m={}, variant={:?}, rows={}, alpha={})",
            self.inner.dim(),
            self.inner.config().m,
            self.inner.config().variant.name(),
            self.inner.len(),
            self.inner.alpha()
        )
    }
}

/// Telemetry of one online round.
#[pyclass(module = "rfd_sketch", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
struct Step {
    t: usize,
    prediction: f64,
    loss: f64,
    mistake: bool,
    grad_norm_sq: f64,
    compressed: bool,
    sigma_m_sq: f64,
    alpha_t: f64,
    eta: f64,
    constraint_slack: f64,
}

impl From<&StepTelemetry> for Step {
    fn from(r: &StepTelemetry) -> Self {
        Step {
            t: r.t,
            prediction: r.prediction,
            loss: r.loss,
            mistake: r.mistake,
            grad_norm_sq: r.grad_norm_sq,
            compressed: r.compressed,
            sigma_m_sq: r.sigma_m_sq,
            alpha_t: r.alpha_t,
            eta: r.eta,
            constraint_slack: r.constraint_slack,
        }
    }
}

#[pymethods]
impl Step {
    fn __repr__(&self) -> String {
        format!("Step(t={}, loss={}, alpha_t={})", self.t, self.loss, self.alpha_t)
    }
}

fn ons_config(algorithm: &str, m: usize, alpha0: f64, c: f64, eta0: f64, fast: bool) -> PyResult<OnsConfig> {
    let algorithm: Algorithm = algorithm.parse().map_err(py_err)?;
    let config = OnsConfig::new(algorithm, m, alpha0)
        .with_radius(c)
        .with_eta0(eta0)
        .with_fast_mode(fast);
    config.validate().map_err(py_err)?;
    Ok(config)
}

/// Online Newton learner for the square loss on `|wᵀx| ≤ C`.
#[pyclass(module = "rfd_sketch")]
struct OnlineNewton {
    config: OnsConfig,
    state: OnsState,
}

#[pymethods]
impl OnlineNewton {
    #[new]
    #[pyo3(signature = (d, algorithm = "rfd_son", m = 10, alpha0 = 0.0, c = 1.0, eta0 = 1.0, fast = false))]
    fn new(d: usize, algorithm: &str, m: usize, alpha0: f64, c: f64, eta0: f64, fast: bool) -> PyResult<Self> {
        let config = ons_config(algorithm, m, alpha0, c, eta0, fast)?;
        let state = OnsState::new(&config, d).map_err(py_err)?;
        Ok(OnlineNewton { config, state })
    }

    /// Predicts with the current weights, then updates on `(x, y)`.
    fn step(&mut self, x: Vec<f64>, y: f64) -> PyResult<Step> {
        let record = online::ons_step(&mut self.state, &x, y, &self.config).map_err(py_err)?;
        Ok(Step::from(&record))
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.state.dim() {
            return Err(PyValueError::new_err(format!("expected {} features, got {}", self.state.dim(), x.len())));
        }
        Ok(self.state.weights_slice().iter().zip(&x).map(|(w, v)| w * v).sum())
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.state.weights_slice().to_vec()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.state.alpha()
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.state.rounds()
    }

    #[getter]
    fn mistakes(&self) -> usize {
        self.state.mistakes()
    }

    #[getter]
    fn online_error_rate(&self) -> f64 {
        self.state.online_error_rate()
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.config.algorithm.name()
    }
}

/// Sketches every row of `rows` and returns the sketch.
#[pyfunction]
#[pyo3(signature = (rows, m, variant = "robust", alpha0 = 0.0, fast = false))]
fn sketch_rows(rows: Vec<Vec<f64>>, m: usize, variant: &str, alpha0: f64, fast: bool) -> PyResult<Sketch> {
    let config = SketchConfig::new(m, self::variant(variant)?)
        .with_alpha0(alpha0)
        .with_fast_mode(fast);
    let inner = sketch::sketch_rows(config, &matrix(&rows)?).map_err(py_err)?;
    Ok(Sketch { inner })
}

/// `‖A − A_k‖_F² / (m − k)`, halved when `robust`.
#[pyfunction]
#[pyo3(signature = (rows, m, k, robust = true))]
fn error_bound(rows: Vec<Vec<f64>>, m: usize, k: usize, robust: bool) -> PyResult<f64> {
    sketch::error_bound_rhs(&matrix(&rows)?, m, k, robust).map_err(py_err)
}

#[pyfunction]
fn singular_values(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    linalg::singular_values(&matrix(&rows)?).map_err(py_err)
}

#[pyfunction]
fn counterexample_stream(m: usize, s: usize, lambda: f64, epsilon: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(sketch::counterexample_stream(m, s, lambda, epsilon).map_err(py_err)?.to_rows())
}

/// One pass over `rows`; returns `(weights, error_trace, steps)`.
#[pyfunction]
#[pyo3(signature = (rows, labels, algorithm = "rfd_son", m = 10, alpha0 = 0.0, c = 1.0, eta0 = 1.0, fast = false))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn run_online(
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    algorithm: &str,
    m: usize,
    alpha0: f64,
    c: f64,
    eta0: f64,
    fast: bool,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Step>)> {
    let config = ons_config(algorithm, m, alpha0, c, eta0, fast)?;
    let run = online::run_online(&matrix(&rows)?, &labels, &config).map_err(py_err)?;
    let steps = run.telemetry().iter().map(Step::from).collect();
    Ok((run.weights().to_vec(), run.error_trace, steps))
}

/// Fraction of rows where `sign(wᵀx)` matches the label.
#[pyfunction]
fn accuracy(weights: Vec<f64>, rows: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<f64> {
    let w = rfd_sketch::DenseVector::from_vec(weights).map_err(py_err)?;
    online::accuracy(&w, &matrix(&rows)?, &labels).map_err(py_err)
}

/// Reads a LIBSVM file into `(rows, labels)` with labels mapped to ±1.
#[pyfunction]
#[pyo3(signature = (path, dim = None))]
fn load_libsvm(path: std::path::PathBuf, dim: Option<usize>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut ds = normalize_labels(load_dataset(&path).map_err(py_err)?).map_err(py_err)?;
    if let Some(d) = dim {
        ds = ds.with_dim(d).map_err(py_err)?;
    }
    let (x, y) = ds.to_dense();
    Ok((x.to_rows(), y))
}

#[pymodule]
#[pyo3(name = "rfd_sketch")]
pub fn rfd_sketch_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", rfd_sketch::VERSION)?;
    m.add_class::<Sketch>()?;
    m.add_class::<OnlineNewton>()?;
    m.add_class::<Step>()?;
    m.add_function(wrap_pyfunction!(sketch_rows, m)?)?;
    m.add_function(wrap_pyfunction!(error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_stream, m)?)?;
    m.add_function(wrap_pyfunction!(run_online, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(load_libsvm, m)?)?;
    Ok(())
}
