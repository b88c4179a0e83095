//! Python bindings. Points and gradients cross the boundary as lists of floats.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use poco_core::demand_response::{CurtailmentLoss, RegulationLoss};
use poco_core::experiment::{csv_string, emit_csv, run_experiment, ExperimentConfig, Scenario};
use poco_core::oco::{omd_step as core_omd_step, sigma_ogd_step as core_sigma_ogd_step};
use poco_core::regret::{self, round_optimum_from};
use poco_core::{
    backtracking_search as core_backtracking_search, fixed_step_gate as core_fixed_step_gate, ogd_step as core_ogd_step,
    BacktrackConfig, ConvexSet, DecisionPoint, FixedStepGateConfig, ForecastGradient, Forecaster, GateVerdict,
    LossRound, NoiseMode, NoiseSpec, OgdParams, OmdState, SigmaOgdParams, Vector,
};

fn to_py(err: poco_core::Error) -> PyErr {
    match err {
        poco_core::Error::Io { .. } => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn vec(xs: Vec<f64>) -> Vector {
    Vector::from_vec(xs)
}

fn point(xs: Vec<f64>) -> DecisionPoint {
    DecisionPoint::new(Vector::from_vec(xs))
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn noise_mode(name: &str) -> PyResult<NoiseMode> {
    match name {
        "uniform-ball" => Ok(NoiseMode::UniformBall),
        "fixed-radius-sphere" => Ok(NoiseMode::FixedRadiusSphere),
        "zero" => Ok(NoiseMode::Zero),
        other => Err(PyValueError::new_err(format!(
            "unknown noise mode `{other}` (uniform-ball, fixed-radius-sphere, zero)"
        ))),
    }
}

/// Axis-aligned box `lower <= x <= upper`.
#[pyclass(name = "BoxSet", frozen)]
struct PyBoxSet {
    inner: poco_core::BoxSet,
}

#[pymethods]
impl PyBoxSet {
    #[new]
    fn new(lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Self> {
        let inner = poco_core::BoxSet::new(vec(lower), vec(upper)).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        list(self.inner.lower())
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        list(self.inner.upper())
    }

    fn project(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = self.inner.project(&vec(point)).map_err(to_py)?;
        Ok(list(p.as_vector()))
    }

    #[pyo3(signature = (point, tol = 0.0))]
    fn contains(&self, point: Vec<f64>, tol: f64) -> bool {
        point.len() == self.inner.dim() && self.inner.contains(&vec(point), tol)
    }

    fn center(&self) -> Vec<f64> {
        list(self.inner.center().as_vector())
    }

    fn diameter(&self) -> f64 {
        self.inner.diameter()
    }

    fn __repr__(&self) -> String {
        format!("BoxSet(lower={:?}, upper={:?})", self.lower(), self.upper())
    }
}

/// A round loss with value and gradient.
#[pyclass(name = "Loss", frozen)]
struct PyLoss {
    inner: LossRound,
}

#[pymethods]
impl PyLoss {
    /// `(r - sum(x))^2 + sigma * ||x + offset||^2`.
    #[staticmethod]
    fn regulation(signal: f64, sigma: f64, offset: Vec<f64>) -> Self {
        let lipschitz = poco_core::demand_response::regulation_lipschitz(offset.len(), sigma);
        let loss = RegulationLoss {
            signal,
            sigma,
            offset: vec(offset),
        };
        let hints = poco_core::BoundHints {
            lipschitz: Some(lipschitz),
            ..Default::default()
        };
        Self {
            inner: LossRound::new(0, loss).with_hints(hints),
        }
    }

    /// `max(p - sum(x), 0)^2 + sigma * ||x + offset||^2`.
    #[staticmethod]
    fn curtailment(signal: f64, sigma: f64, offset: Vec<f64>) -> Self {
        let loss = CurtailmentLoss {
            signal,
            sigma,
            offset: vec(offset),
        };
        Self {
            inner: LossRound::new(0, loss),
        }
    }

    /// `0.5 * ||x - target||^2 * curvature`.
    #[staticmethod]
    fn quadratic(target: Vec<f64>, curvature: f64) -> PyResult<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(PyValueError::new_err("curvature must be positive"));
        }
        let n = target.len();
        let (value_target, grad_target) = (vec(target.clone()), vec(target));
        let inner = LossRound::from_fns(
            0,
            n,
            move |x| 0.5 * curvature * (x - &value_target).norm_squared(),
            move |x| (x - &grad_target) * curvature,
        )
        .with_hints(poco_core::BoundHints {
            lipschitz: Some(curvature),
            ..Default::default()
        });
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn lipschitz(&self) -> Option<f64> {
        self.inner.hints().lipschitz
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.checked_value(&vec(x)).map_err(to_py)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.checked_gradient(&vec(x)).map(|g| list(&g)).map_err(to_py)
    }

    /// Minimiser over `set`: returns `(x, value, converged)`.
    #[pyo3(signature = (set, tol = regret::DEFAULT_ORACLE_TOL, max_iters = regret::DEFAULT_ORACLE_MAX_ITERS))]
    fn minimize(&self, set: &PyBoxSet, tol: f64, max_iters: usize) -> PyResult<(Vec<f64>, f64, bool)> {
        let opt = round_optimum_from(&self.inner, &set.inner, &set.inner.center(), tol, max_iters).map_err(to_py)?;
        Ok((list(opt.minimizer.as_vector()), opt.value, opt.converged))
    }
}

/// Count of rounds where the played point moved at least `delta` from `x_bar`.
#[pyclass(name = "PredictiveCounter")]
struct PyCounter {
    inner: poco_core::PredictiveCounter,
}

#[pymethods]
impl PyCounter {
    #[new]
    fn new(delta: f64) -> PyResult<Self> {
        let inner = poco_core::PredictiveCounter::new(delta).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn update(&mut self, played: Vec<f64>, x_bar: Vec<f64>) {
        self.inner = self.inner.update(&point(played), &point(x_bar));
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds()
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu()
    }
}

#[pyfunction]
fn ogd_step(x: Vec<f64>, grad: Vec<f64>, eta: f64, set: &PyBoxSet) -> PyResult<Vec<f64>> {
    let params = OgdParams::new(eta).map_err(to_py)?;
    let next = core_ogd_step(&point(x), &vec(grad), params, &set.inner).map_err(to_py)?;
    Ok(list(next.as_vector()))
}

#[pyfunction]
fn sigma_ogd_step(x: Vec<f64>, grad: Vec<f64>, eta: f64, gamma: f64, sigma: f64, set: &PyBoxSet) -> PyResult<Vec<f64>> {
    let params = SigmaOgdParams::new(eta, gamma, sigma).map_err(to_py)?;
    let next = core_sigma_ogd_step(&point(x), &vec(grad), params, &set.inner).map_err(to_py)?;
    Ok(list(next.as_vector()))
}

/// One optimistic step from `secondary`: returns `(played, next_secondary)`.
#[pyfunction]
fn omd_step(
    secondary: Vec<f64>,
    revealed_grad: Vec<f64>,
    hint_grad: Vec<f64>,
    eta: f64,
    set: &PyBoxSet,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let state = OmdState::new(point(secondary), eta).map_err(to_py)?;
    let (played, next) = core_omd_step(&state, &vec(revealed_grad), &vec(hint_grad), &set.inner).map_err(to_py)?;
    Ok((list(played.as_vector()), list(next.secondary().as_vector())))
}

/// A noisy copy of `truth` within `epsilon` of it.
#[pyfunction]
#[pyo3(signature = (truth, epsilon, mode = "fixed-radius-sphere", seed = 0))]
fn forecast(truth: Vec<f64>, epsilon: f64, mode: &str, seed: u64) -> PyResult<Vec<f64>> {
    let mut forecaster = Forecaster::new(NoiseSpec {
        mode: noise_mode(mode)?,
        seed,
    });
    let g = forecaster.forecast(&vec(truth), epsilon, None).map_err(to_py)?;
    Ok(list(g.estimate()))
}

fn verdict_dict<'py>(py: Python<'py>, v: &GateVerdict) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("fired", v.fired())?;
    d.set_item("reason", v.reason.as_str())?;
    d.set_item("step", v.step)?;
    d.set_item("candidate", list(v.candidate.as_vector()))?;
    d.set_item("direction", list(&v.direction))?;
    d.set_item("trials", v.trials)?;
    Ok(d)
}

/// Fixed-step gate at `x_bar` for a forecast `g` of the next gradient.
#[pyfunction]
#[pyo3(signature = (x_bar, g, epsilon, delta, lipschitz, set, beta = None))]
#[allow(clippy::too_many_arguments)]
fn fixed_step_gate<'py>(
    py: Python<'py>,
    x_bar: Vec<f64>,
    g: Vec<f64>,
    epsilon: f64,
    delta: f64,
    lipschitz: f64,
    set: &PyBoxSet,
    beta: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = match beta {
        Some(b) => FixedStepGateConfig::new(epsilon, delta, lipschitz, b),
        None => FixedStepGateConfig::with_default_step(epsilon, delta, lipschitz),
    }
    .map_err(to_py)?;
    let g = ForecastGradient::external(vec(g), epsilon, None).map_err(to_py)?;
    let v = core_fixed_step_gate(&point(x_bar), &g, &cfg, &set.inner).map_err(to_py)?;
    verdict_dict(py, &v)
}

/// Backtracking search on the revealed loss `loss`.
#[pyfunction]
#[pyo3(signature = (loss, x_bar, g, epsilon, time_lipschitz, set, zeta = 0.5, beta = 0.9, max_exponent = 100))]
#[allow(clippy::too_many_arguments)]
fn backtracking_search<'py>(
    py: Python<'py>,
    loss: &PyLoss,
    x_bar: Vec<f64>,
    g: Vec<f64>,
    epsilon: f64,
    time_lipschitz: f64,
    set: &PyBoxSet,
    zeta: f64,
    beta: f64,
    max_exponent: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = BacktrackConfig::new(zeta, beta, max_exponent, epsilon, time_lipschitz).map_err(to_py)?;
    let g = ForecastGradient::external(vec(g), epsilon, None).map_err(to_py)?;
    let v = core_backtracking_search(&loss.inner, &point(x_bar), &g, &cfg, &set.inner).map_err(to_py)?;
    verdict_dict(py, &v)
}

#[pyfunction]
fn ogd_bound(norm_bound: f64, gradient_bound: f64, path_variation: f64, horizon: usize) -> f64 {
    regret::ogd_bound(norm_bound, gradient_bound, path_variation, horizon)
}

#[pyfunction]
fn pogd_bound(norm_bound: f64, gradient_bound: f64, path_variation: f64, delta: f64, horizon: usize) -> f64 {
    regret::pogd_bound(norm_bound, gradient_bound, path_variation, delta, horizon)
}

#[pyfunction]
fn poco_bound(oco_bound: f64, horizon: usize, nu: f64, delta: f64) -> f64 {
    regret::poco_bound(oco_bound, horizon, nu, delta)
}

#[pyfunction]
fn pocob_bound(oco_bound: f64, horizon: usize, nu: f64, time_lipschitz: f64) -> f64 {
    regret::pocob_bound(oco_bound, horizon, nu, time_lipschitz)
}

#[pyfunction]
fn sigma_ogd_bound(constant: f64, path_variation: f64) -> f64 {
    regret::sigma_ogd_bound(constant, path_variation)
}

/// Runs a scenario and returns `(summary_json, csv_text)`. Keyword values
/// override those in `config_toml`; `out` also writes the CSV to disk.
#[pyfunction]
#[pyo3(signature = (scenario, config_toml = None, seed = None, rounds = None, epsilon = None, out = None))]
fn run(
    py: Python<'_>,
    scenario: &str,
    config_toml: Option<&str>,
    seed: Option<u64>,
    rounds: Option<usize>,
    epsilon: Option<Vec<f64>>,
    out: Option<std::path::PathBuf>,
) -> PyResult<(String, String)> {
    let scenario: Scenario = scenario.parse().map_err(to_py)?;
    let mut cfg = match config_toml {
        Some(text) => ExperimentConfig::from_toml_str(text).map_err(to_py)?,
        None => ExperimentConfig::default(),
    };
    cfg.scenario = Some(scenario);
    cfg.seed = seed.or(cfg.seed);
    cfg.rounds = rounds.or(cfg.rounds);
    cfg.epsilon = epsilon.or(cfg.epsilon);
    let resolved = cfg.resolve().map_err(to_py)?;
    let experiment = py.detach(|| run_experiment(&resolved)).map_err(to_py)?;
    if let Some(path) = out {
        emit_csv(&experiment, &path).map_err(to_py)?;
    }
    Ok((experiment.summary().to_json(), csv_string(&experiment)))
}

#[pymodule]
fn poco(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBoxSet>()?;
    m.add_class::<PyLoss>()?;
    m.add_class::<PyCounter>()?;
    m.add_function(wrap_pyfunction!(ogd_step, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_ogd_step, m)?)?;
    m.add_function(wrap_pyfunction!(omd_step, m)?)?;
    m.add_function(wrap_pyfunction!(forecast, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_step_gate, m)?)?;
    m.add_function(wrap_pyfunction!(backtracking_search, m)?)?;
    m.add_function(wrap_pyfunction!(ogd_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pogd_bound, m)?)?;
    m.add_function(wrap_pyfunction!(poco_bound, m)?)?;
    m.add_function(wrap_pyfunction!(pocob_bound, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_ogd_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
