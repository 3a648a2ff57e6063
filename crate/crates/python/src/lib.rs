use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use specs_core::benchmarks;
use specs_core::design::{build_cecm_design, read_panel_csv_path, CecmDesign, DeterministicSpec, TargetSelector, TimeSeriesPanel};
use specs_core::error::SpecsError;
use specs_core::evaluation::{fit_at_pair, fit_tuned, rolling_evaluation, EvalConfig, FitOptions, TuneMethod};
use specs_core::models::{EstimatorKind, ModelSettings};
use specs_core::simulation::{gen_factor, gen_vecm, run_monte_carlo, DgpFamily, DgpSpec, McConfig, Persistence};
use specs_core::solver::SpecsSolution;
use specs_core::tuning::WindowScheme;

create_exception!(specs_py, SpecsNumericalError, PyException);

fn to_py(e: SpecsError) -> PyErr {
    if e.is_numerical() {
        SpecsNumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// Serialize through JSON into plain Python containers.
fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let json = PyModule::import(py, "json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

fn settings(k_delta: f64, k_pi: f64, n_lambda_i: usize, eps_ratio: f64) -> ModelSettings {
    let mut s = ModelSettings::default();
    s.weights.k_delta = k_delta;
    s.weights.k_pi = k_pi;
    s.grid.n_lambda_i = n_lambda_i;
    s.grid.eps_ratio = eps_ratio;
    s
}

/// A balanced panel of series in levels; one column per series.
#[pyclass(name = "Panel", module = "specs_py", frozen)]
struct PyPanel {
    inner: TimeSeriesPanel,
}

#[pymethods]
impl PyPanel {
    #[new]
    #[pyo3(signature = (rows, labels=None, target=0))]
    fn new(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>, target: usize) -> PyResult<Self> {
        let t = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        let values = DMatrix::from_fn(t, n, |i, j| rows[i][j]);
        let labels = labels.unwrap_or_else(|| (0..n).map(|j| format!("x{j}")).collect());
        TimeSeriesPanel::new(values, target, labels).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Read a CSV panel; `target` is a column name or zero-based index.
    #[staticmethod]
    #[pyo3(signature = (path, target="0"))]
    fn from_csv(path: std::path::PathBuf, target: &str) -> PyResult<Self> {
        read_panel_csv_path(&path, &TargetSelector::parse(target)).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs()
    }

    #[getter]
    fn n_series(&self) -> usize {
        self.inner.n_series()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn target_index(&self) -> usize {
        self.inner.target_index()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        let v = self.inner.values();
        (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Panel(n_obs={}, n_series={}, target={:?})", self.inner.n_obs(), self.inner.n_series(), self.inner.labels()[self.inner.target_index()])
    }
}

/// Error-correction design: lagged levels, contemporaneous and lagged differences.
#[pyclass(name = "Design", module = "specs_py", frozen)]
struct PyDesign {
    inner: CecmDesign,
}

#[pymethods]
impl PyDesign {
    #[new]
    #[pyo3(signature = (panel, lags=1, det="const"))]
    fn new(panel: &PyPanel, lags: usize, det: &str) -> PyResult<Self> {
        let det = DeterministicSpec::parse(det).map_err(to_py)?;
        build_cecm_design(&panel.inner, lags, det).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs()
    }

    #[getter]
    fn n_coef(&self) -> usize {
        self.inner.n_coef()
    }

    #[getter]
    fn n_levels(&self) -> usize {
        self.inner.n_levels
    }

    #[getter]
    fn column_labels(&self) -> Vec<String> {
        self.inner.column_labels.clone()
    }

    /// Cointegration Wald statistic with a simulated 5% critical value.
    #[pyo3(signature = (draws=1999, seed=1))]
    fn wald_test(&self, py: Python<'_>, draws: usize, seed: u64) -> PyResult<Py<PyAny>> {
        let r = py.detach(|| benchmarks::wald_test(&self.inner, None, draws, seed)).map_err(to_py)?;
        to_dict(py, &r)
    }
}

/// A penalized fit at one penalty pair.
#[pyclass(name = "Solution", module = "specs_py", frozen)]
struct PySolution {
    inner: SpecsSolution,
    labels: Vec<String>,
    score: Option<f64>,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma.clone()
    }

    #[getter]
    fn delta(&self) -> Vec<f64> {
        self.inner.delta().to_vec()
    }

    #[getter]
    fn pi(&self) -> Vec<f64> {
        self.inner.pi().to_vec()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.clone()
    }

    #[getter]
    fn lambda_i(&self) -> f64 {
        self.inner.lambda_i
    }

    #[getter]
    fn lambda_g(&self) -> f64 {
        self.inner.lambda_g
    }

    #[getter]
    fn rss(&self) -> f64 {
        self.inner.rss
    }

    #[getter]
    fn df(&self) -> usize {
        self.inner.df()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn kkt_residual(&self) -> f64 {
        self.inner.kkt_residual
    }

    /// BIC or cross-validated MSPE of the selected point; `None` for a direct fit.
    #[getter]
    fn score(&self) -> Option<f64> {
        self.score
    }

    #[getter]
    fn column_labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    /// Labels of the nonzero coefficients.
    fn active(&self) -> Vec<String> {
        self.inner.support().into_iter().map(|i| self.labels[i].clone()).collect()
    }

    fn has_levels(&self) -> bool {
        self.inner.has_levels()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_dict(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(lambda_i={:.4e}, lambda_g={:.4e}, df={}, converged={})",
            self.inner.lambda_i,
            self.inner.lambda_g,
            self.inner.df(),
            self.inner.converged
        )
    }
}

fn fit_options(lags: usize, det: &str, tune: &str, s: ModelSettings) -> PyResult<FitOptions> {
    Ok(FitOptions {
        p: lags,
        deterministic: DeterministicSpec::parse(det).map_err(to_py)?,
        tune: TuneMethod::parse(tune).map_err(to_py)?,
        settings: s,
        ..FitOptions::default()
    })
}

/// Fit over the penalty grid and keep the point chosen by `tune` ("bic" or "tscv").
#[pyfunction]
#[pyo3(signature = (panel, estimator="specs2", lags=1, det="const", tune="bic", k_delta=2.0, k_pi=1.0, n_lambda_i=100, eps_ratio=1e-4))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    panel: &PyPanel,
    estimator: &str,
    lags: usize,
    det: &str,
    tune: &str,
    k_delta: f64,
    k_pi: f64,
    n_lambda_i: usize,
    eps_ratio: f64,
) -> PyResult<PySolution> {
    let kind = EstimatorKind::parse(estimator).map_err(to_py)?;
    let opts = fit_options(lags, det, tune, settings(k_delta, k_pi, n_lambda_i, eps_ratio))?;
    let f = py.detach(|| fit_tuned(&panel.inner, kind, &opts)).map_err(to_py)?;
    Ok(PySolution { inner: f.solution, labels: f.column_labels, score: Some(f.score) })
}

/// Fit at a single penalty pair.
#[pyfunction]
#[pyo3(signature = (panel, lambda_i, lambda_g=0.0, estimator="specs2", lags=1, det="const", k_delta=2.0, k_pi=1.0))]
#[allow(clippy::too_many_arguments)]
fn fit_at(
    py: Python<'_>,
    panel: &PyPanel,
    lambda_i: f64,
    lambda_g: f64,
    estimator: &str,
    lags: usize,
    det: &str,
    k_delta: f64,
    k_pi: f64,
) -> PyResult<PySolution> {
    let kind = EstimatorKind::parse(estimator).map_err(to_py)?;
    let d = ModelSettings::default().grid;
    let opts = fit_options(lags, det, "bic", settings(k_delta, k_pi, d.n_lambda_i, d.eps_ratio))?;
    let labels = build_cecm_design(&panel.inner, lags, opts.deterministic).map_err(to_py)?.column_labels;
    let inner = py.detach(|| fit_at_pair(&panel.inner, kind, &opts, lambda_i, lambda_g)).map_err(to_py)?;
    Ok(PySolution { inner, labels, score: None })
}

/// Pseudo out-of-sample nowcast comparison; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (panel, estimators="specs1,specs2,adl,adl-adf", baseline="adl", lags=1, det="const", tune="bic", window_fraction=2.0/3.0, scheme="rolling", tune_once=false))]
#[allow(clippy::too_many_arguments)]
fn nowcast_eval(
    py: Python<'_>,
    panel: &PyPanel,
    estimators: &str,
    baseline: &str,
    lags: usize,
    det: &str,
    tune: &str,
    window_fraction: f64,
    scheme: &str,
    tune_once: bool,
) -> PyResult<Py<PyAny>> {
    let scheme = match scheme {
        "rolling" => WindowScheme::Rolling,
        "expanding" => WindowScheme::Expanding,
        other => return Err(PyValueError::new_err(format!("unknown scheme '{other}'"))),
    };
    let cfg = EvalConfig {
        fit: fit_options(lags, det, tune, ModelSettings::default())?,
        window_fraction,
        scheme,
        estimators: EstimatorKind::parse_list(estimators).map_err(to_py)?,
        baseline: EstimatorKind::parse(baseline).map_err(to_py)?,
        tune_once,
    };
    let report = py.detach(|| rolling_evaluation(&panel.inner, &cfg)).map_err(to_py)?;
    to_dict(py, &report)
}

fn dgp_spec(family: &str, a: f64, t: usize, persistence: &str) -> PyResult<DgpSpec> {
    let mut spec = DgpSpec::new(DgpFamily::parse(family).map_err(to_py)?, a, t);
    spec.persistence = Persistence::parse(persistence).map_err(to_py)?;
    spec.validate().map_err(to_py)?;
    Ok(spec)
}

/// Monte Carlo study on a simulated family; returns the metrics report as a dict.
#[pyfunction]
#[pyo3(signature = (family="table2_low_we", a=-0.5, t=100, reps=100, seed=1, estimators="specs1,adl", persistence="low", wald=false))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    family: &str,
    a: f64,
    t: usize,
    reps: usize,
    seed: u64,
    estimators: &str,
    persistence: &str,
    wald: bool,
) -> PyResult<Py<PyAny>> {
    let spec = dgp_spec(family, a, t, persistence)?;
    let cfg = McConfig {
        estimators: EstimatorKind::parse_list(estimators).map_err(to_py)?,
        n_reps: reps,
        base_seed: seed,
        wald,
        ..McConfig::default()
    };
    let report = py.detach(|| run_monte_carlo(&spec, &cfg)).map_err(to_py)?;
    to_dict(py, &report)
}

/// One simulated panel from a named family.
#[pyfunction]
#[pyo3(signature = (family="table2_low_we", a=-0.5, t=100, seed=1, persistence="low"))]
fn generate(family: &str, a: f64, t: usize, seed: u64, persistence: &str) -> PyResult<PyPanel> {
    let spec = dgp_spec(family, a, t, persistence)?;
    let inner = if spec.family.is_vecm() { gen_vecm(&spec, seed).map(|x| x.0) } else { gen_factor(&spec, seed) };
    inner.map(|inner| PyPanel { inner }).map_err(to_py)
}

/// Augmented Dickey-Fuller test at 5%.
#[pyfunction]
#[pyo3(signature = (series, det="const", max_lags=None))]
fn adf_test(py: Python<'_>, series: Vec<f64>, det: &str, max_lags: Option<usize>) -> PyResult<Py<PyAny>> {
    let det = DeterministicSpec::parse(det).map_err(to_py)?;
    let r = benchmarks::adf_test(&series, max_lags, det).map_err(to_py)?;
    to_dict(py, &r)
}

/// Diebold-Mariano comparison of squared-error losses; returns `(statistic, p_value)`.
#[pyfunction]
fn dm_test(errors_a: Vec<f64>, errors_b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = benchmarks::dm_test(&errors_a, &errors_b).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

#[pymodule]
fn specs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpecsNumericalError", m.py().get_type::<SpecsNumericalError>())?;
    m.add_class::<PyPanel>()?;
    m.add_class::<PyDesign>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_at, m)?)?;
    m.add_function(wrap_pyfunction!(nowcast_eval, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(adf_test, m)?)?;
    m.add_function(wrap_pyfunction!(dm_test, m)?)?;
    Ok(())
}
