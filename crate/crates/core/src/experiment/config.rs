//! Experiment configuration.
//!
//! Every parameter is accepted under its usual symbol and a spelled-out alias,
//! e.g. `eta` / `step_size` or `Delta` / `time_lipschitz`. Unset values fall
//! back to the defaults of the chosen scenario.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demand_response::{regulation_lipschitz, FleetParams, SignalKind, SignalNoise};
use crate::error::{Error, Result};
use crate::forecaster::NoiseMode;
use crate::regret::{DEFAULT_ORACLE_MAX_ITERS, DEFAULT_ORACLE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Regulation,
    Curtailment,
    SyntheticQuadratic,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Regulation => "regulation",
            Scenario::Curtailment => "curtailment",
            Scenario::SyntheticQuadratic => "synthetic-quadratic",
        }
    }

    pub fn signal_kind(&self) -> Option<SignalKind> {
        match self {
            Scenario::Regulation => Some(SignalKind::Regulation),
            Scenario::Curtailment => Some(SignalKind::Curtailment),
            Scenario::SyntheticQuadratic => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regulation" => Ok(Scenario::Regulation),
            "curtailment" => Ok(Scenario::Curtailment),
            "synthetic-quadratic" | "synthetic" => Ok(Scenario::SyntheticQuadratic),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected regulation, curtailment or synthetic-quadratic)"
            ))),
        }
    }
}

/// Fleet section, `[fleet]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSection {
    #[serde(rename = "N", alias = "loads", default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<usize>,
    #[serde(rename = "h", alias = "step_seconds", default, skip_serializing_if = "Option::is_none")]
    pub step_seconds: Option<f64>,
    /// `[lo, hi]` range of `x̄/h` in kW.
    #[serde(rename = "xbar_over_h", alias = "power_kw", default, skip_serializing_if = "Option::is_none")]
    pub power_kw: Option<[f64; 2]>,
    /// `[lo, hi]` range of `c` in kWh.
    #[serde(rename = "c", alias = "capacity_kwh", default, skip_serializing_if = "Option::is_none")]
    pub capacity_kwh: Option<[f64; 2]>,
}

/// Argmin oracle section, `[oracle]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(alias = "tolerance", default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(alias = "max_iterations", default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

/// Signal noise section, `[signal]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    #[serde(alias = "noise_variance", default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(alias = "plateau_noise_variance", default, skip_serializing_if = "Option::is_none")]
    pub plateau_variance: Option<f64>,
    /// Dimension of the synthetic-quadratic scenario.
    #[serde(alias = "dimension", default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

/// Raw configuration as read from a file and overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(rename = "T", alias = "rounds", default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(alias = "forecast_error", default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    /// Counter threshold and fixed-step guaranteed improvement.
    #[serde(alias = "min_improvement", default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(rename = "Delta", alias = "time_lipschitz", default, skip_serializing_if = "Option::is_none")]
    pub time_lipschitz: Option<f64>,
    #[serde(alias = "soc_weight", default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(alias = "step_size", default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(alias = "curvature", default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Fixed predictive step (regulation, synthetic) or backtracking factor
    /// (curtailment).
    #[serde(alias = "gate_step", default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(alias = "trial_step", default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(rename = "M", alias = "max_backtracks", default, skip_serializing_if = "Option::is_none")]
    pub max_exponent: Option<u32>,
    #[serde(alias = "recovery", default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(alias = "forecast_noise", default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseMode>,
    /// Constant `C` of the `C·(V_T + 1)` reference line.
    #[serde(alias = "bound_constant", default, skip_serializing_if = "Option::is_none")]
    pub bound_c: Option<f64>,
    /// Post-hoc checks of the improvement guarantees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<bool>,
    #[serde(alias = "out", default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub fleet: FleetSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub oracle: OracleSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub signal: SignalSection,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario: Some(scenario),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises to TOML")
    }

    /// Validates and fills in scenario defaults.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let scenario = self
            .scenario
            .ok_or_else(|| Error::Config("no scenario given".into()))?;
        let rounds = self.rounds.unwrap_or(DEFAULT_ROUNDS);
        let seed = self.seed.unwrap_or(0);
        let defaults = ScenarioDefaults::of(scenario);

        let epsilons = self.epsilon.clone().unwrap_or_else(|| defaults.epsilons.to_vec());
        if epsilons.is_empty() {
            return Err(Error::Config("epsilon list must not be empty".into()));
        }
        for &eps in &epsilons {
            positive("epsilon", eps)?;
        }
        let delta = positive("delta", self.delta.unwrap_or(DEFAULT_DELTA))?;
        let sigma = positive("sigma", self.sigma.unwrap_or(defaults.sigma))?;
        let alpha = self.alpha.unwrap_or(defaults.alpha);
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be at least 1, got {alpha}")));
        }

        let fleet = FleetParams {
            loads: self.fleet.loads.unwrap_or(25),
            step_seconds: self.fleet.step_seconds.unwrap_or(30.0),
            power_kw: pair(self.fleet.power_kw, (1.0, 3.0)),
            capacity_kwh: pair(self.fleet.capacity_kwh, (10.0, 15.0)),
            recovery: if scenario == Scenario::Curtailment { alpha } else { 1.0 },
        };
        fleet.validate().map_err(|e| Error::Config(e.to_string()))?;

        let dim = match scenario {
            Scenario::SyntheticQuadratic => self.signal.dim.unwrap_or(2),
            _ => fleet.loads,
        };
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }

        let lipschitz = match scenario {
            Scenario::Regulation => Some(regulation_lipschitz(fleet.loads, sigma)),
            Scenario::SyntheticQuadratic => Some(2.0),
            Scenario::Curtailment => None,
        };

        let stepper = match scenario {
            Scenario::Regulation => {
                let lip = lipschitz.expect("regulation has L");
                let eta = self.eta.unwrap_or(1.0);
                let gamma = self.gamma.unwrap_or(lip);
                if !(eta > 0.0 && eta <= 1.0) {
                    return Err(Error::Config(format!("eta must lie in (0, 1] for σOGD, got {eta}")));
                }
                if !(gamma > 0.0 && gamma <= lip * (1.0 + 1e-12)) {
                    return Err(Error::Config(format!("gamma must lie in (0, L = {lip}], got {gamma}")));
                }
                StepperChoice::SigmaOgd { eta, gamma }
            }
            Scenario::Curtailment => StepperChoice::Ogd {
                eta: positive("eta", self.eta.unwrap_or(1.0 / (10.0 * (rounds.max(1) as f64).sqrt())))?,
            },
            Scenario::SyntheticQuadratic => {
                // η = D/(G√T) on [−1, 1]^N with G = 2D.
                let eta = self.eta.unwrap_or(1.0 / (2.0 * (rounds.max(1) as f64).sqrt()));
                StepperChoice::Ogd {
                    eta: positive("eta", eta)?,
                }
            }
        };

        let gate = match scenario {
            Scenario::Regulation | Scenario::SyntheticQuadratic => {
                let lip = lipschitz.expect("fixed-step scenarios have L");
                let beta = self.beta.unwrap_or(1.0 / lip);
                if !(beta > 0.0 && beta <= (1.0 / lip) * (1.0 + 1e-12)) {
                    return Err(Error::Config(format!("beta must lie in (0, 1/L = {}], got {beta}", 1.0 / lip)));
                }
                GateChoice::Fixed { beta, lipschitz: lip }
            }
            Scenario::Curtailment => {
                let beta = self.beta.unwrap_or(0.9);
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::Config(format!("beta must lie in (0, 1) for backtracking, got {beta}")));
                }
                let zeta = positive("zeta", self.zeta.unwrap_or(0.5))?;
                let max_exponent = self.max_exponent.unwrap_or(100);
                if max_exponent < 1 {
                    return Err(Error::Config("M must be at least 1".into()));
                }
                let time_lipschitz = self.time_lipschitz.unwrap_or(DEFAULT_CURTAILMENT_DELTA);
                if !(time_lipschitz >= 0.0 && time_lipschitz.is_finite()) {
                    return Err(Error::Config(format!("Delta must be nonnegative, got {time_lipschitz}")));
                }
                GateChoice::Backtrack {
                    beta,
                    zeta,
                    max_exponent,
                    time_lipschitz,
                }
            }
        };

        let noise = SignalNoise {
            variance: self.signal.variance.unwrap_or(0.01),
            plateau_variance: self.signal.plateau_variance.unwrap_or(0.001),
        };
        if !(noise.variance >= 0.0 && noise.plateau_variance >= 0.0) {
            return Err(Error::Config("signal noise variances must be nonnegative".into()));
        }

        let oracle_tol = positive("oracle.tol", self.oracle.tol.unwrap_or(DEFAULT_ORACLE_TOL))?;
        let oracle_max_iters = self.oracle.max_iters.unwrap_or(DEFAULT_ORACLE_MAX_ITERS);
        if oracle_max_iters == 0 {
            return Err(Error::Config("oracle.max_iters must be positive".into()));
        }
        if let Some(c) = self.bound_c {
            positive("bound_c", c)?;
        }

        Ok(ResolvedConfig {
            scenario,
            rounds,
            seed,
            epsilons,
            delta,
            sigma,
            fleet,
            dim,
            lipschitz,
            stepper,
            gate,
            noise_mode: self.noise.unwrap_or(NoiseMode::FixedRadiusSphere),
            signal_noise: noise,
            oracle_tol,
            oracle_max_iters,
            bound_constant: self.bound_c,
            verify: self.verify.unwrap_or(true),
            output: self.output.clone(),
        })
    }
}

pub const DEFAULT_ROUNDS: usize = 1000;
pub const DEFAULT_DELTA: f64 = 1e-6;
/// Δ used by the curtailment backtracking gate when none is configured.
pub const DEFAULT_CURTAILMENT_DELTA: f64 = 1e-6;

struct ScenarioDefaults {
    epsilons: &'static [f64],
    sigma: f64,
    alpha: f64,
}

impl ScenarioDefaults {
    fn of(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Regulation => Self {
                epsilons: &[0.1, 0.05, 0.01],
                sigma: 0.005,
                alpha: 1.0,
            },
            Scenario::Curtailment => Self {
                epsilons: &[0.1, 0.01, 0.001],
                sigma: 5e-5,
                alpha: 1.001,
            },
            Scenario::SyntheticQuadratic => Self {
                epsilons: &[0.1, 0.05, 0.01],
                sigma: 1.0,
                alpha: 1.0,
            },
        }
    }
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {value}")))
    }
}

fn pair(value: Option<[f64; 2]>, default: (f64, f64)) -> (f64, f64) {
    value.map_or(default, |[a, b]| (a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepperChoice {
    Ogd { eta: f64 },
    SigmaOgd { eta: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GateChoice {
    Fixed {
        beta: f64,
        lipschitz: f64,
    },
    Backtrack {
        beta: f64,
        zeta: f64,
        max_exponent: u32,
        time_lipschitz: f64,
    },
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub scenario: Scenario,
    pub rounds: usize,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub sigma: f64,
    pub fleet: FleetParams,
    pub dim: usize,
    pub lipschitz: Option<f64>,
    pub stepper: StepperChoice,
    pub gate: GateChoice,
    pub noise_mode: NoiseMode,
    pub signal_noise: SignalNoise,
    pub oracle_tol: f64,
    pub oracle_max_iters: usize,
    pub bound_constant: Option<f64>,
    pub verify: bool,
    pub output: Option<PathBuf>,
}
