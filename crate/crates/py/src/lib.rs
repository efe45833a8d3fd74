//! Python bindings for `irsloc`. Structured results come back as plain
//! dicts and lists.

use ndarray::Array2;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use irsloc::association::{solve, NoiseModel};
use irsloc::cli::RunConfig;
use irsloc::montecarlo::{run_experiment, run_trial as core_run_trial, RangeSource, TrialConfig, TrialResult};
use irsloc::scenario::{self, PathKind, Placement, Point2D};
use irsloc::sparse_recovery::operator::DenseOperator;
use irsloc::sparse_recovery::solver::SolverOptions;
use irsloc::sparse_recovery::RangeSets;
use irsloc::{Error, SearchMode};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::Parse { .. } | Error::DelaySpreadExceeded { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(p: (f64, f64)) -> Point2D {
    Point2D::new(p.0, p.1)
}

fn parse_mode(mode: &str) -> PyResult<SearchMode> {
    mode.parse().map_err(to_py_err)
}

/// System numerology and power budget.
#[pyclass(name = "SystemConfig", from_py_object)]
#[derive(Clone)]
struct PySystemConfig {
    inner: irsloc::SystemConfig,
}

#[pymethods]
impl PySystemConfig {
    #[new]
    #[pyo3(signature = (tx_power_dbm = 39.0, n_irs_elements = 16, n_symbols = 7, noise_psd_dbm_hz = -174.0))]
    fn new(tx_power_dbm: f64, n_irs_elements: usize, n_symbols: usize, noise_psd_dbm_hz: f64) -> PyResult<Self> {
        let inner = irsloc::SystemConfig {
            tx_power_dbm: [tx_power_dbm, tx_power_dbm],
            n_irs_elements,
            n_symbols,
            noise_psd_dbm_hz,
            ..Default::default()
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn bandwidth_hz(&self) -> f64 {
        self.inner.bandwidth_hz()
    }

    #[getter]
    fn range_bin_width(&self) -> f64 {
        self.inner.range_bin_width()
    }

    #[getter]
    fn path_bin_width(&self) -> f64 {
        self.inner.path_bin_width()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemConfig(bandwidth_hz={}, tx_power_dbm={:?}, n_irs_elements={})",
            self.inner.bandwidth_hz(),
            self.inner.tx_power_dbm,
            self.inner.n_irs_elements
        )
    }
}

fn config_or_default(cfg: Option<PySystemConfig>) -> irsloc::SystemConfig {
    cfg.map(|c| c.inner).unwrap_or_default()
}

/// Two BSs, one IRS and the targets, all as `(x, y)` in metres.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: irsloc::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    fn new(bs1: (f64, f64), bs2: (f64, f64), irs: (f64, f64), targets: Vec<(f64, f64)>) -> PyResult<Self> {
        let inner = irsloc::Scenario::new([point(bs1), point(bs2)], point(irs), targets.into_iter().map(point).collect())
            .map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn targets(&self) -> Vec<(f64, f64)> {
        self.inner.targets.iter().map(|p| (p.x, p.y)).collect()
    }

    /// True BS-target, BS-IRS, IRS-target and composed distances.
    fn distances<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let t = scenario::distances(&self.inner);
        let d = PyDict::new(py);
        d.set_item("d_at", (t.d_at[0].clone(), t.d_at[1].clone()))?;
        d.set_item("d_ai", (t.d_ai[0], t.d_ai[1]))?;
        d.set_item("d_it", t.d_it)?;
        d.set_item("d_aita", (t.d_aita[0].clone(), t.d_aita[1].clone()))?;
        Ok(d.into_any())
    }

    fn __repr__(&self) -> String {
        format!("Scenario(targets={:?})", self.targets())
    }
}

/// Draws `k` resolvable targets around the default IRS.
#[pyfunction]
#[pyo3(signature = (seed, k, config = None))]
fn sample_scenario(seed: u64, k: usize, config: Option<PySystemConfig>) -> PyResult<PyScenario> {
    let inner = scenario::sample_scenario(seed, k, &Placement::default(), &config_or_default(config)).map_err(to_py_err)?;
    Ok(PyScenario { inner })
}

/// 1-based tap of a path of the given kind (`ata`, `aia` or `aita`).
#[pyfunction]
#[pyo3(signature = (distance, kind, config = None))]
fn delay_bin(distance: f64, kind: &str, config: Option<PySystemConfig>) -> PyResult<usize> {
    let kind = match kind {
        "ata" => PathKind::BsTargetBs,
        "aia" => PathKind::BsIrsBs,
        "aita" => PathKind::BsIrsTargetBs,
        other => return Err(PyValueError::new_err(format!("unknown path kind {other:?} (ata|aia|aita)"))),
    };
    scenario::delay_bin(distance, kind, &config_or_default(config)).map_err(to_py_err)
}

/// Associates four range sets and localizes every target.
#[pyfunction]
#[pyo3(signature = (scenario, d_at, d_aita, mode = "pruned", tau = 1.5, config = None))]
fn localize<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    d_at: (Vec<f64>, Vec<f64>),
    d_aita: (Vec<f64>, Vec<f64>),
    mode: &str,
    tau: f64,
    config: Option<PySystemConfig>,
) -> PyResult<Bound<'py, PyAny>> {
    let sets = RangeSets::new([d_at.0, d_at.1], [d_aita.0, d_aita.1]);
    let k = sets.n_targets().map_err(to_py_err)?;
    let noise = NoiseModel::quantization(&config_or_default(config), k);
    let res = solve(&sets, &scenario.inner.anchors(), &noise, &vec![tau; k], parse_mode(mode)?, &Default::default())
        .map_err(to_py_err)?;
    to_py(py, &res)
}

type PerBs = (Vec<f64>, Vec<f64>);

/// Quantized true range sets of a scenario.
#[pyfunction]
#[pyo3(signature = (scenario, config = None))]
fn oracle_ranges(scenario: &PyScenario, config: Option<PySystemConfig>) -> PyResult<(PerBs, PerBs)> {
    let s = RangeSets::from_truth(&scenario.inner, &config_or_default(config)).map_err(to_py_err)?;
    let [a1, a2] = s.d_at;
    let [p1, p2] = s.d_aita;
    Ok(((a1, a2), (p1, p2)))
}

/// One Monte-Carlo trial; returns the trial record.
#[pyfunction]
#[pyo3(signature = (seed, k = 3, power_dbm = 39.0, mode = "pruned", oracle = false))]
fn run_trial<'py>(py: Python<'py>, seed: u64, k: usize, power_dbm: f64, mode: &str, oracle: bool) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = TrialConfig {
        k,
        range_source: if oracle { RangeSource::Oracle } else { RangeSource::Estimated },
        ..Default::default()
    };
    cfg.system.tx_power_dbm = [power_dbm, power_dbm];
    cfg.association.mode = parse_mode(mode)?;
    cfg.validate().map_err(to_py_err)?;
    let result = py.detach(|| core_run_trial(seed, &cfg));
    to_py(py, &result)
}

/// Fraction of set per-target error flags across trials.
#[pyfunction]
fn error_probability(flags: Vec<Vec<bool>>) -> PyResult<f64> {
    let records: Vec<TrialResult> = flags
        .into_iter()
        .map(|f| TrialResult {
            trial: 0,
            seed: 0,
            k: f.len(),
            power_dbm: 0.0,
            mode: SearchMode::Pruned,
            targets: Vec::new(),
            estimates: Vec::new(),
            association: None,
            errors_m: vec![None; f.len()],
            error_flags: f,
            detected: None,
            cost: None,
            candidates: None,
            solve_time_s: None,
            failure: None,
        })
        .collect();
    irsloc::error_probability(&records).map_err(to_py_err)
}

/// Complex LASSO `min ½‖y - A x‖² + ρ‖x‖₁`. Returns `(x, iterations)`.
#[pyfunction]
#[pyo3(signature = (a, y, rho, max_iters = 5000, tol = 1e-8))]
fn solve_lasso(a: Vec<Vec<Complex64>>, y: Vec<Complex64>, rho: f64, max_iters: usize, tol: f64) -> PyResult<(Vec<Complex64>, usize)> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    if a.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    let matrix = Array2::from_shape_vec((rows, cols), a.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let sol = irsloc::solve_lasso(&DenseOperator::new(matrix), &y, rho, &SolverOptions { max_iters, tol }).map_err(to_py_err)?;
    Ok((sol.vector(), sol.report.iterations))
}

/// Runs a full experiment from a flat dotted-key config; writes outputs when
/// `out_dir` is given and returns the summary.
#[pyfunction]
#[pyo3(signature = (config = "", out_dir = None))]
fn run_sweep<'py>(py: Python<'py>, config: &str, out_dir: Option<std::path::PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = RunConfig::from_toml_str(config, "<python>").map_err(to_py_err)?;
    cfg.validate().map_err(to_py_err)?;
    let out = py
        .detach(|| run_experiment(&cfg.experiment(), out_dir.as_deref(), false))
        .map_err(to_py_err)?;
    to_py(py, &out.summary)
}

#[pymodule]
fn irsloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemConfig>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(sample_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(delay_bin, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_ranges, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(error_probability, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lasso, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
