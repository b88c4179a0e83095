//! The round loop shared by every algorithm of an experiment.

use std::f64::consts::PI;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::config::{GateChoice, ResolvedConfig, Scenario, StepperChoice};
use crate::demand_response::{fleet_loss, Fleet, SignalKind, SignalModel};
use crate::error::{Error, Result};
use crate::forecaster::{descent_check, Forecaster};
use crate::loss::{BoundHints, LossRound};
use crate::oco::{omd_play, omd_secondary, OgdParams, OmdState, SigmaOgdParams, Stepper};
use crate::predictive::{
    backtracking_search, feasible_descent_inequality_check, fixed_step_gate, modified_armijo_holds,
    online_armijo_holds, BacktrackConfig, FixedStepGateConfig, GateReason, PredictiveCounter,
};
use crate::regret::{ogd_bound, pocob_bound, poco_bound, pogd_bound, round_optimum_from, sigma_ogd_bound};
use crate::set::{BoxSet, ConvexSet, DecisionPoint, Vector};

const FLEET_STREAM: u64 = 1;
const SIGNAL_STREAM: u64 = 2;
const FORECAST_STREAM: u64 = 3;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    /// The OCO stepper alone.
    Baseline,
    /// The stepper followed by the gated predictive update.
    Predictive,
    /// Optimistic mirror descent fed the same forecasts, without a gate.
    Optimistic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub kind: AlgorithmKind,
    pub epsilon: Option<f64>,
}

/// Baseline first, then one predictive and one optimistic run per ε.
pub fn algorithm_roster(cfg: &ResolvedConfig) -> Vec<AlgorithmSpec> {
    let baseline = match cfg.stepper {
        StepperChoice::Ogd { .. } => "ogd",
        StepperChoice::SigmaOgd { .. } => "sogd",
    };
    let predictive = match cfg.gate {
        GateChoice::Fixed { .. } => "poco",
        GateChoice::Backtrack { .. } => "pocob",
    };
    let mut roster = vec![AlgorithmSpec {
        name: baseline.to_string(),
        kind: AlgorithmKind::Baseline,
        epsilon: None,
    }];
    for &eps in &cfg.epsilons {
        roster.push(AlgorithmSpec {
            name: format!("{predictive}_e{eps}"),
            kind: AlgorithmKind::Predictive,
            epsilon: Some(eps),
        });
    }
    for &eps in &cfg.epsilons {
        roster.push(AlgorithmSpec {
            name: format!("omd_e{eps}"),
            kind: AlgorithmKind::Optimistic,
            epsilon: Some(eps),
        });
    }
    roster
}

/// What the gate column of a round reports about how `x_t` was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateLabel {
    /// Not a predictive algorithm.
    None,
    /// `x_1`, before any forecast.
    Initial,
    Verdict(GateReason),
}

impl GateLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateLabel::None => "none",
            GateLabel::Initial => "initial",
            GateLabel::Verdict(reason) => reason.as_str(),
        }
    }
}

impl fmt::Display for GateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One algorithm's view of round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// `f_t(x_t)`.
    pub loss: f64,
    /// Cumulative dynamic regret up to `t`.
    pub regret: f64,
    pub gate: GateLabel,
    /// `c_t`.
    pub count: usize,
    /// `c_t / t`.
    pub nu: f64,
    /// Path variation of the round optima up to `t`.
    pub path_variation: f64,
    /// `f_t(x̄_t) − f_t(x_t)` when the predictive update produced `x_t`.
    pub improvement: Option<f64>,
}

/// A fired predictive step, kept for after-the-fact inspection.
#[derive(Debug, Clone)]
pub struct GateEvent {
    /// Round whose loss was revealed when the step was taken; the step
    /// produces the decision of `round + 1`.
    pub round: usize,
    pub x_bar: DecisionPoint,
    pub played: DecisionPoint,
    pub direction: Vector,
    pub step: f64,
    pub forecast: Vector,
    pub epsilon: f64,
    /// `f_t`.
    pub revealed: LossRound,
    /// `f_{t+1}`.
    pub next: LossRound,
}

/// Post-hoc checks of the guarantees, tallied per algorithm.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Checks {
    pub fired: usize,
    /// Fixed-step firings with `f_{t+1}(x) > f_{t+1}(x̄) − δ`.
    pub improvement_violations: usize,
    /// Backtracking firings whose online Armijo test fails when recomputed.
    pub line_search_violations: usize,
    /// Backtracking firings with `f_t(x̄) − f_t(x) ≤ 2Δ`.
    pub margin_violations: usize,
    /// Backtracking firings where `|f_t − f_{t+1}| ≤ Δ` held at `x̄` and `x`.
    pub armijo_checked: usize,
    /// Of those, firings failing the Armijo test on `f_{t+1}`.
    pub armijo_violations: usize,
    /// Rounds with `‖g‖ > ε` but `gᵀ∇f_{t+1}(x̄) ≤ 0`.
    pub descent_violations: usize,
    /// Nonzero directions with `gᵀd > −‖d‖²/step`.
    pub direction_violations: usize,
    /// Forecasts farther than ε from the true gradient.
    pub forecast_violations: usize,
    pub oracle_unconverged: usize,
}

impl Checks {
    pub fn violations(&self) -> usize {
        self.improvement_violations
            + self.line_search_violations
            + self.margin_violations
            + self.armijo_violations
            + self.descent_violations
            + self.direction_violations
            + self.forecast_violations
    }
}

#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub spec: AlgorithmSpec,
    pub records: Vec<RoundRecord>,
    pub events: Vec<GateEvent>,
    pub checks: Checks,
    pub regret: f64,
    /// `Σ f_t(x̄_t) − f_t(x*_t)`: the regret the stepper's own iterates would
    /// have had on this run's loss sequence.
    pub shadow_regret: f64,
    pub counter: PredictiveCounter,
    pub path_variation: f64,
    pub max_gradient_norm: f64,
}

/// Everything every algorithm sees identically.
#[derive(Debug, Clone)]
struct SharedInputs {
    signal: Vec<f64>,
    environment: Environment,
    forecaster: Forecaster,
}

#[derive(Debug, Clone)]
enum Environment {
    Fleet { fleet: Fleet, kind: SignalKind, sigma: f64 },
    Quadratic { targets: Vec<Vector>, set: BoxSet, elapsed: usize },
}

impl Environment {
    fn set(&self) -> BoxSet {
        match self {
            Environment::Fleet { fleet, .. } => fleet.decision_set(),
            Environment::Quadratic { set, .. } => set.clone(),
        }
    }

    /// Loss of round `t` given the state reached after round `t − 1`.
    fn loss(&self, t: usize, signal: &[f64]) -> Result<LossRound> {
        match self {
            Environment::Fleet { fleet, kind, sigma } => fleet_loss(fleet, *kind, signal[t - 1], *sigma),
            Environment::Quadratic { targets, .. } => Ok(tracking_loss(t, targets[t - 1].clone())),
        }
    }

    fn advance(&mut self, x: &DecisionPoint) -> Result<()> {
        match self {
            Environment::Fleet { fleet, kind, .. } => fleet.advance(x, *kind),
            Environment::Quadratic { elapsed, .. } => {
                *elapsed += 1;
                Ok(())
            }
        }
    }
}

/// `‖x − θ‖²`.
fn tracking_loss(round: usize, target: Vector) -> LossRound {
    let dim = target.len();
    let at = target.clone();
    LossRound::from_fns(
        round,
        dim,
        move |x: &Vector| (x - &target).norm_squared(),
        move |x: &Vector| (x - &at) * 2.0,
    )
    .with_hints(BoundHints {
        lipschitz: Some(2.0),
        ..BoundHints::default()
    })
}

/// Targets `θ_t(i) = 0.8 sin(2πt/T + 2πi/N) + w` on the box `[−1, 1]^N`.
fn quadratic_targets(cfg: &ResolvedConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vector>> {
    let noise = Normal::new(0.0, cfg.signal_noise.variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let horizon = cfg.rounds as f64;
    let dim = cfg.dim;
    Ok((1..=cfg.rounds)
        .map(|t| {
            Vector::from_fn(dim, |i, _| {
                let phase = 2.0 * PI * (t as f64 / horizon + i as f64 / dim as f64);
                0.8 * phase.sin() + noise.sample(rng)
            })
        })
        .collect())
}

fn shared_inputs(cfg: &ResolvedConfig) -> Result<SharedInputs> {
    let forecaster = Forecaster::from_rng(cfg.noise_mode, substream(cfg.seed, FORECAST_STREAM));
    let (signal, environment) = match cfg.scenario.signal_kind() {
        Some(kind) => {
            let fleet = Fleet::sample(&cfg.fleet, &mut substream(cfg.seed, FLEET_STREAM))?;
            let signal = if cfg.rounds == 0 {
                Vec::new()
            } else {
                let model = SignalModel::from_rng(
                    kind,
                    cfg.rounds,
                    cfg.seed,
                    cfg.signal_noise,
                    substream(cfg.seed, SIGNAL_STREAM),
                )?;
                model.values().to_vec()
            };
            (
                signal,
                Environment::Fleet {
                    fleet,
                    kind,
                    sigma: cfg.sigma,
                },
            )
        }
        None => {
            let targets = quadratic_targets(cfg, &mut substream(cfg.seed, SIGNAL_STREAM))?;
            let signal = targets.iter().map(|t| t[0]).collect();
            (
                signal,
                Environment::Quadratic {
                    targets,
                    set: BoxSet::uniform(cfg.dim, -1.0, 1.0)?,
                    elapsed: 0,
                },
            )
        }
    };
    Ok(SharedInputs {
        signal,
        environment,
        forecaster,
    })
}

fn stepper(cfg: &ResolvedConfig) -> Result<Stepper> {
    Ok(match cfg.stepper {
        StepperChoice::Ogd { eta } => Stepper::Ogd(OgdParams::new(eta)?),
        StepperChoice::SigmaOgd { eta, gamma } => Stepper::SigmaOgd(SigmaOgdParams::new(eta, gamma, cfg.sigma)?),
    })
}

enum Gate {
    Fixed(FixedStepGateConfig),
    Backtrack(BacktrackConfig),
}

impl Gate {
    fn new(cfg: &ResolvedConfig, epsilon: f64) -> Result<Self> {
        Ok(match cfg.gate {
            GateChoice::Fixed { beta, lipschitz } => {
                Gate::Fixed(FixedStepGateConfig::new(epsilon, cfg.delta, lipschitz, beta)?)
            }
            GateChoice::Backtrack {
                beta,
                zeta,
                max_exponent,
                time_lipschitz,
            } => Gate::Backtrack(BacktrackConfig::new(zeta, beta, max_exponent, epsilon, time_lipschitz)?),
        })
    }

    /// The step that defines the direction `d = Π(x̄ − s·g) − x̄`.
    fn direction_step(&self) -> f64 {
        match self {
            Gate::Fixed(c) => c.beta(),
            Gate::Backtrack(c) => c.zeta(),
        }
    }
}

enum Policy {
    Baseline,
    Predictive { epsilon: f64, gate: Gate },
    Optimistic { epsilon: f64, state: OmdState },
}

fn run_algorithm(spec: &AlgorithmSpec, cfg: &ResolvedConfig, inputs: &SharedInputs) -> Result<AlgorithmRun> {
    let mut env = inputs.environment.clone();
    let mut forecaster = inputs.forecaster.clone();
    let set = env.set();
    let stepper = stepper(cfg)?;
    let mut policy = match (spec.kind, spec.epsilon) {
        (AlgorithmKind::Baseline, _) => Policy::Baseline,
        (AlgorithmKind::Predictive, Some(epsilon)) => Policy::Predictive {
            epsilon,
            gate: Gate::new(cfg, epsilon)?,
        },
        (AlgorithmKind::Optimistic, Some(epsilon)) => Policy::Optimistic {
            epsilon,
            state: OmdState::new(set.center(), stepper.effective_step())?,
        },
        (_, None) => return Err(Error::Config(format!("algorithm `{}` needs an epsilon", spec.name))),
    };

    let mut x = set.center();
    let mut x_bar = x.clone();
    let mut label = match spec.kind {
        AlgorithmKind::Predictive => GateLabel::Initial,
        _ => GateLabel::None,
    };
    let mut counter = PredictiveCounter::new(cfg.delta)?;
    let mut checks = Checks::default();
    let mut events = Vec::new();
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut regret = 0.0;
    let mut shadow_regret = 0.0;
    let mut path_variation = 0.0;
    let mut previous_optimum: Option<DecisionPoint> = None;
    let mut max_gradient_norm: f64 = 0.0;

    if cfg.rounds == 0 {
        return Ok(AlgorithmRun {
            spec: spec.clone(),
            records,
            events,
            checks,
            regret,
            shadow_regret,
            counter,
            path_variation,
            max_gradient_norm,
        });
    }

    let mut f_t = env.loss(1, &inputs.signal)?;
    for t in 1..=cfg.rounds {
        let loss = f_t.value(&x);
        let start = previous_optimum.clone().unwrap_or_else(|| set.center());
        let optimum = round_optimum_from(&f_t, &set, &start, cfg.oracle_tol, cfg.oracle_max_iters)?;
        if !optimum.converged {
            checks.oracle_unconverged += 1;
        }
        regret += loss - optimum.value;
        shadow_regret += f_t.value(&x_bar) - optimum.value;
        if let Some(prev) = &previous_optimum {
            path_variation += optimum.minimizer.distance(prev);
        }
        previous_optimum = Some(optimum.minimizer);
        counter = counter.update(&x, &x_bar);
        let improvement = match label {
            GateLabel::Verdict(GateReason::Fired) => Some(f_t.value(&x_bar) - loss),
            _ => None,
        };
        records.push(RoundRecord {
            loss,
            regret,
            gate: label,
            count: counter.count(),
            nu: counter.nu(),
            path_variation,
            improvement,
        });

        let grad = f_t.gradient(&x);
        max_gradient_norm = max_gradient_norm.max(grad.norm());
        env.advance(&x)?;
        if t == cfg.rounds {
            break;
        }
        let f_next = env.loss(t + 1, &inputs.signal)?;

        match &mut policy {
            Policy::Baseline => {
                x = stepper.step(&x, &grad, &set)?;
                x_bar = x.clone();
            }
            Policy::Optimistic { epsilon, state } => {
                let secondary = omd_secondary(state, &grad, &set)?;
                let truth = f_next.gradient(&secondary);
                let hint = forecaster.forecast(&truth, *epsilon, Some(secondary.clone()))?;
                x = omd_play(&secondary, hint.estimate(), state.eta(), &set)?;
                x_bar = x.clone();
                *state = OmdState::new(secondary, state.eta())?;
            }
            Policy::Predictive { epsilon, gate } => {
                let candidate_bar = stepper.step(&x, &grad, &set)?;
                let truth = f_next.gradient(&candidate_bar);
                let g = forecaster.forecast(&truth, *epsilon, Some(candidate_bar.clone()))?;
                let verdict = match gate {
                    Gate::Fixed(c) => fixed_step_gate(&candidate_bar, &g, c, &set)?,
                    Gate::Backtrack(c) => backtracking_search(&f_t, &candidate_bar, &g, c, &set)?,
                };
                if cfg.verify {
                    if !g.within_epsilon(&truth) {
                        checks.forecast_violations += 1;
                    }
                    if descent_check(&g) && g.estimate().dot(&truth) <= 0.0 {
                        checks.descent_violations += 1;
                    }
                    if verdict.direction.iter().any(|&c| c != 0.0)
                        && !feasible_descent_inequality_check(g.estimate(), &verdict.direction, gate.direction_step())?
                    {
                        checks.direction_violations += 1;
                    }
                }
                if verdict.fired() {
                    checks.fired += 1;
                    if cfg.verify {
                        verify_fired(gate, &f_t, &f_next, &candidate_bar, &verdict.candidate, &verdict.direction, verdict.step, g.estimate(), *epsilon, &mut checks);
                    }
                    events.push(GateEvent {
                        round: t,
                        x_bar: candidate_bar.clone(),
                        played: verdict.candidate.clone(),
                        direction: verdict.direction.clone(),
                        step: verdict.step,
                        forecast: g.estimate().clone(),
                        epsilon: *epsilon,
                        revealed: f_t.clone(),
                        next: f_next.clone(),
                    });
                }
                label = GateLabel::Verdict(verdict.reason);
                x = verdict.candidate;
                x_bar = candidate_bar;
            }
        }
        f_t = f_next;
    }

    Ok(AlgorithmRun {
        spec: spec.clone(),
        records,
        events,
        checks,
        regret,
        shadow_regret,
        counter,
        path_variation,
        max_gradient_norm,
    })
}

#[allow(clippy::too_many_arguments)]
fn verify_fired(
    gate: &Gate,
    f_t: &LossRound,
    f_next: &LossRound,
    x_bar: &DecisionPoint,
    played: &DecisionPoint,
    direction: &Vector,
    step: f64,
    g: &Vector,
    epsilon: f64,
    checks: &mut Checks,
) {
    match gate {
        Gate::Fixed(c) => {
            if f_next.value(played) > f_next.value(x_bar) - c.delta() {
                checks.improvement_violations += 1;
            }
        }
        Gate::Backtrack(c) => {
            let slack = 2.0 * c.time_lipschitz();
            if !online_armijo_holds(f_t, x_bar, g, direction, epsilon, step, slack) {
                checks.line_search_violations += 1;
            }
            if f_t.value(x_bar) - f_t.value(played) <= slack {
                checks.margin_violations += 1;
            }
            let drift = |p: &DecisionPoint| (f_t.value(p) - f_next.value(p)).abs();
            if drift(x_bar) <= c.time_lipschitz() && drift(played) <= c.time_lipschitz() {
                checks.armijo_checked += 1;
                if !modified_armijo_holds(f_next, x_bar, direction, step) {
                    checks.armijo_violations += 1;
                }
            }
        }
    }
}

/// Regret bounds evaluated with the run's own `V_T`, `ν` and largest observed
/// gradient norm.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundReport {
    /// Bound of the underlying OCO algorithm; absent for σOGD without a
    /// configured constant.
    pub oco: Option<f64>,
    /// `oco − T·ν·δ` or `oco − 2T·ν·Δ`.
    pub predictive: Option<f64>,
    /// Predictive OGD bound, for OGD-based runs.
    pub pogd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub name: String,
    pub kind: AlgorithmKind,
    pub epsilon: Option<f64>,
    pub final_regret: f64,
    pub shadow_regret: f64,
    /// `(R_baseline − R) / R_baseline`.
    pub reduction_vs_baseline: Option<f64>,
    pub count: usize,
    pub nu: f64,
    pub path_variation: f64,
    pub max_gradient_norm: f64,
    pub bounds: BoundReport,
    pub checks: Checks,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub seed: u64,
    pub rounds: usize,
    pub baseline: String,
    pub algorithms: Vec<AlgorithmSummary>,
    pub config: ResolvedConfig,
}

impl Summary {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises to JSON")
    }
}

/// The traces of every algorithm plus the shared signal.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ResolvedConfig,
    pub signal: Vec<f64>,
    pub runs: Vec<AlgorithmRun>,
}

impl ExperimentRun {
    pub fn run(&self, name: &str) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.spec.name == name)
    }

    pub fn baseline(&self) -> &AlgorithmRun {
        &self.runs[0]
    }

    pub fn summary(&self) -> Summary {
        let cfg = &self.config;
        let baseline = self.baseline().regret;
        let norm_bound = self.runs_set_norm_bound();
        let algorithms = self
            .runs
            .iter()
            .map(|run| {
                let nu = run.counter.nu();
                let v = run.path_variation;
                let g = run.max_gradient_norm;
                let oco = match cfg.stepper {
                    StepperChoice::Ogd { .. } => Some(ogd_bound(norm_bound, g, v, cfg.rounds)),
                    StepperChoice::SigmaOgd { .. } => cfg.bound_constant.map(|c| sigma_ogd_bound(c, v)),
                };
                let bounds = match run.spec.kind {
                    AlgorithmKind::Predictive => BoundReport {
                        oco,
                        predictive: oco.map(|b| match cfg.gate {
                            GateChoice::Fixed { .. } => poco_bound(b, cfg.rounds, nu, cfg.delta),
                            GateChoice::Backtrack { time_lipschitz, .. } => {
                                pocob_bound(b, cfg.rounds, nu, time_lipschitz)
                            }
                        }),
                        pogd: matches!(cfg.stepper, StepperChoice::Ogd { .. })
                            .then(|| pogd_bound(norm_bound, g, v, cfg.delta, cfg.rounds)),
                    },
                    _ => BoundReport {
                        oco,
                        ..BoundReport::default()
                    },
                };
                AlgorithmSummary {
                    name: run.spec.name.clone(),
                    kind: run.spec.kind,
                    epsilon: run.spec.epsilon,
                    final_regret: run.regret,
                    shadow_regret: run.shadow_regret,
                    reduction_vs_baseline: (run.spec.kind != AlgorithmKind::Baseline && baseline != 0.0)
                        .then(|| (baseline - run.regret) / baseline),
                    count: run.counter.count(),
                    nu,
                    path_variation: v,
                    max_gradient_norm: g,
                    bounds,
                    checks: run.checks.clone(),
                }
            })
            .collect();
        Summary {
            scenario: cfg.scenario,
            seed: cfg.seed,
            rounds: cfg.rounds,
            baseline: self.baseline().spec.name.clone(),
            algorithms,
            config: cfg.clone(),
        }
    }

    fn runs_set_norm_bound(&self) -> f64 {
        // Rebuilt from the config; the set does not depend on the trajectory.
        shared_inputs(&self.config)
            .map(|inputs| inputs.environment.set().norm_bound())
            .unwrap_or(f64::NAN)
    }
}

/// Runs every algorithm of the roster on the same signal, fleet and forecast
/// noise. Algorithms run on separate threads; results do not depend on
/// scheduling.
pub fn run_experiment(cfg: &ResolvedConfig) -> Result<ExperimentRun> {
    let inputs = shared_inputs(cfg)?;
    let roster = algorithm_roster(cfg);
    let results: Vec<Result<AlgorithmRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = roster
            .iter()
            .map(|spec| {
                let inputs = &inputs;
                scope.spawn(move || run_algorithm(spec, cfg, inputs))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("algorithm thread panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRun {
        config: cfg.clone(),
        signal: inputs.signal,
        runs,
    })
}
