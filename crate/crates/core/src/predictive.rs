//! Gated predictive updates.
//!
//! After the OCO stepper produces `x̄_{t+1}`, a forecast `g_t` of
//! `∇f_{t+1}(x̄_{t+1})` may be used for one more projected step. The step is
//! only taken when a gate certifies that it cannot do worse than `x̄_{t+1}`:
//!
//! 1. norm gate: `‖g_t‖ > ε` (otherwise `−g_t` may not be a descent direction);
//! 2. candidate `x⁺ = Π(x̄ − step·g_t)` and direction `d = x⁺ − x̄`;
//! 3. either the fixed-step length test (`‖d‖` above a threshold depending on
//!    ε, δ and L) or a backtracking search on the last revealed loss with an
//!    online Armijo condition.
//!
//! Checks short-circuit on the first failure. When the gate does not fire the
//! played decision is `x̄_{t+1}` itself.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::forecaster::ForecastGradient;
use crate::loss::LossRound;
use crate::set::{BoxSet, ConvexSet, DecisionPoint, Vector};

/// Relative slack used when comparing quantities that are equal in exact
/// arithmetic.
const ROUNDING: f64 = 1e-12;

/// `x⁺ = Π(x̄ − step·g)` and `d = x⁺ − x̄`.
pub fn predictive_candidate(
    x_bar: &DecisionPoint,
    g: &ForecastGradient,
    step: f64,
    set: &BoxSet,
) -> Result<(DecisionPoint, Vector)> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    check_dim(set.dim(), x_bar.len())?;
    check_dim(set.dim(), g.estimate().len())?;
    let candidate = set.project(&(x_bar.as_vector() - g.estimate() * step))?;
    let direction = candidate.as_vector() - x_bar.as_vector();
    Ok((candidate, direction))
}

/// Whether `gᵀd ≤ −‖d‖²/step`, the feasible-descent inequality satisfied by
/// every projected direction (up to rounding).
pub fn feasible_descent_inequality_check(g: &Vector, d: &Vector, step: f64) -> Result<bool> {
    if !(step > 0.0) {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    check_dim(g.len(), d.len())?;
    let lhs = g.dot(d);
    let rhs = -d.norm_squared() / step;
    Ok(lhs <= rhs + ROUNDING * (lhs.abs() + rhs.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateReason {
    NormGateFailed,
    DirectionTooShort,
    ArmijoExhausted,
    Fired,
}

impl GateReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateReason::NormGateFailed => "norm-gate-failed",
            GateReason::DirectionTooShort => "direction-too-short",
            GateReason::ArmijoExhausted => "armijo-exhausted",
            GateReason::Fired => "fired",
        }
    }
}

impl fmt::Display for GateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a gate. `candidate` is the decision to play: the predictive
/// point when fired, `x̄` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub reason: GateReason,
    /// Step applied to `direction`; 0 unless fired.
    pub step: f64,
    pub candidate: DecisionPoint,
    /// Trial direction `d` (zero vector if the norm gate failed).
    pub direction: Vector,
    /// Loss evaluations at trial points (backtracking only).
    pub trials: usize,
}

impl GateVerdict {
    pub fn fired(&self) -> bool {
        self.reason == GateReason::Fired
    }

    fn rejected(reason: GateReason, x_bar: &DecisionPoint, direction: Vector, trials: usize) -> Self {
        Self {
            reason,
            step: 0.0,
            candidate: x_bar.clone(),
            direction,
            trials,
        }
    }
}

/// Parameters of the fixed-step gate for losses with an L-Lipschitz gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedStepGateConfig {
    epsilon: f64,
    delta: f64,
    lipschitz: f64,
    beta: f64,
}

impl FixedStepGateConfig {
    /// Any `β ∈ (0, 1/L]` is accepted.
    pub fn new(epsilon: f64, delta: f64, lipschitz: f64, beta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {delta}")));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(invalid("lipschitz", format!("must be positive, got {lipschitz}")));
        }
        if !(beta > 0.0 && beta <= (1.0 / lipschitz) * (1.0 + ROUNDING)) {
            return Err(invalid("beta", format!("must lie in (0, 1/L] = (0, {}], got {beta}", 1.0 / lipschitz)));
        }
        Ok(Self {
            epsilon,
            delta,
            lipschitz,
            beta,
        })
    }

    /// `β = 1/L`.
    pub fn with_default_step(epsilon: f64, delta: f64, lipschitz: f64) -> Result<Self> {
        Self::new(epsilon, delta, lipschitz, 1.0 / lipschitz)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Minimum `‖d‖` that guarantees an improvement of δ on the next loss:
    /// `ε/L + √(ε²/L² + 2δ/L)`.
    pub fn threshold(&self) -> f64 {
        fixed_step_threshold(self)
    }
}

pub fn fixed_step_threshold(cfg: &FixedStepGateConfig) -> f64 {
    let ratio = cfg.epsilon / cfg.lipschitz;
    ratio + (ratio * ratio + 2.0 * cfg.delta / cfg.lipschitz).sqrt()
}

/// Fixed-step gate. When it fires, `f_{t+1}(candidate) ≤ f_{t+1}(x̄) − δ` for
/// every loss whose gradient is L-Lipschitz and whose gradient at `x̄` lies
/// within ε of `g`.
///
/// The forecast must not claim a larger ε than the configuration.
pub fn fixed_step_gate(
    x_bar: &DecisionPoint,
    g: &ForecastGradient,
    cfg: &FixedStepGateConfig,
    set: &BoxSet,
) -> Result<GateVerdict> {
    check_forecast_epsilon(g, cfg.epsilon)?;
    check_dim(set.dim(), x_bar.len())?;
    if !(g.norm() > cfg.epsilon) {
        return Ok(GateVerdict::rejected(GateReason::NormGateFailed, x_bar, Vector::zeros(x_bar.len()), 0));
    }
    let (candidate, direction) = predictive_candidate(x_bar, g, cfg.beta, set)?;
    if direction.norm() < cfg.threshold() {
        return Ok(GateVerdict::rejected(GateReason::DirectionTooShort, x_bar, direction, 0));
    }
    Ok(GateVerdict {
        reason: GateReason::Fired,
        step: cfg.beta,
        candidate,
        direction,
        trials: 0,
    })
}

/// Parameters of the backtracking predictive update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktrackConfig {
    zeta: f64,
    beta: f64,
    max_exponent: u32,
    epsilon: f64,
    time_lipschitz: f64,
}

impl BacktrackConfig {
    pub fn new(zeta: f64, beta: f64, max_exponent: u32, epsilon: f64, time_lipschitz: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(invalid("zeta", format!("must be positive, got {zeta}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(invalid("beta", format!("must lie in (0, 1), got {beta}")));
        }
        if max_exponent < 1 {
            return Err(invalid("max_exponent", "must be at least 1"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(time_lipschitz >= 0.0 && time_lipschitz.is_finite()) {
            return Err(invalid("time_lipschitz", format!("must be nonnegative, got {time_lipschitz}")));
        }
        Ok(Self {
            zeta,
            beta,
            max_exponent,
            epsilon,
            time_lipschitz,
        })
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_exponent(&self) -> u32 {
        self.max_exponent
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Δ, the bound on `|f_t(x) − f_{t+1}(x)|`.
    pub fn time_lipschitz(&self) -> f64 {
        self.time_lipschitz
    }

    /// `β^m`.
    pub fn trial_step(&self, m: u32) -> f64 {
        self.beta.powi(m as i32)
    }
}

/// The online Armijo test at step `s`:
/// `f_t(x̄ + s·d) ≤ f_t(x̄) + s(gᵀd − ε‖d‖) − slack`, with `slack = 2Δ` in the
/// uniform case.
pub fn online_armijo_holds(
    f_t: &LossRound,
    x_bar: &DecisionPoint,
    g: &Vector,
    d: &Vector,
    epsilon: f64,
    step: f64,
    slack: f64,
) -> bool {
    let trial = x_bar.as_vector() + d * step;
    f_t.value(&trial) <= f_t.value(x_bar) + step * (g.dot(d) - epsilon * d.norm()) - slack
}

/// Backtracking search on the last revealed loss `f_t`.
///
/// `d = Π(x̄ − ζ g) − x̄`; the smallest `m ∈ {0, …, M}` with the online Armijo
/// condition (slack `2Δ`) is accepted and the step `β^m` returned. If no
/// exponent passes, the step is 0.
pub fn backtracking_search(
    f_t: &LossRound,
    x_bar: &DecisionPoint,
    g: &ForecastGradient,
    cfg: &BacktrackConfig,
    set: &BoxSet,
) -> Result<GateVerdict> {
    let slack = 2.0 * cfg.time_lipschitz;
    search(f_t, x_bar, g, cfg, set, |_| slack)
}

/// As [`backtracking_search`] but with point-dependent time-Lipschitz
/// constants: the slack at a trial point `y` is `Δ_t(y) + Δ_t(x̄)`.
pub fn backtracking_search_local<F>(
    f_t: &LossRound,
    x_bar: &DecisionPoint,
    g: &ForecastGradient,
    cfg: &BacktrackConfig,
    set: &BoxSet,
    local: F,
) -> Result<GateVerdict>
where
    F: Fn(&Vector) -> f64,
{
    let at_bar = local(x_bar.as_vector());
    search(f_t, x_bar, g, cfg, set, |trial| local(trial) + at_bar)
}

fn search<S>(
    f_t: &LossRound,
    x_bar: &DecisionPoint,
    g: &ForecastGradient,
    cfg: &BacktrackConfig,
    set: &BoxSet,
    slack: S,
) -> Result<GateVerdict>
where
    S: Fn(&Vector) -> f64,
{
    check_forecast_epsilon(g, cfg.epsilon)?;
    check_dim(set.dim(), x_bar.len())?;
    check_dim(set.dim(), f_t.dim())?;
    if !(g.norm() > cfg.epsilon) {
        return Ok(GateVerdict::rejected(GateReason::NormGateFailed, x_bar, Vector::zeros(x_bar.len()), 0));
    }
    let (_, d) = predictive_candidate(x_bar, g, cfg.zeta, set)?;
    if d.iter().all(|&c| c == 0.0) {
        return Ok(GateVerdict::rejected(GateReason::DirectionTooShort, x_bar, d, 0));
    }

    let base = f_t.value(x_bar);
    let slope = g.estimate().dot(&d) - cfg.epsilon * d.norm();
    let mut trials = 0;
    for m in 0..=cfg.max_exponent {
        let step = cfg.trial_step(m);
        let trial = x_bar.as_vector() + &d * step;
        trials += 1;
        if f_t.value(&trial) <= base + step * slope - slack(&trial) {
            let candidate = pocob_update(x_bar, &d, step, set)?;
            return Ok(GateVerdict {
                reason: GateReason::Fired,
                step,
                candidate,
                direction: d,
                trials,
            });
        }
    }
    Ok(GateVerdict::rejected(GateReason::ArmijoExhausted, x_bar, d, trials))
}

/// `x̄ + step·d` for a feasible direction (`x̄ + d` in the set) and
/// `step ∈ (0, 1]`.
pub fn pocob_update(x_bar: &DecisionPoint, d: &Vector, step: f64, set: &BoxSet) -> Result<DecisionPoint> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid("step", format!("must lie in (0, 1], got {step}")));
    }
    check_dim(set.dim(), x_bar.len())?;
    check_dim(set.dim(), d.len())?;
    let endpoint = x_bar.as_vector() + d;
    let scale = 1.0 + x_bar.amax() + d.amax();
    set.check_feasible(&endpoint, ROUNDING * scale)?;
    // Feasible by convexity; the clamp only absorbs rounding.
    set.project(&(x_bar.as_vector() + d * step))
}

/// Count `c_t` of rounds where the predictive update moved the decision by at
/// least δ, and the ratio `ν = c_T / T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCounter {
    count: usize,
    delta: f64,
    rounds: usize,
}

impl PredictiveCounter {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be positive, got {delta}")));
        }
        Ok(Self {
            count: 0,
            delta,
            rounds: 0,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn nu(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.count as f64 / self.rounds as f64
        }
    }

    /// Increments the count iff `‖x_final − x̄‖ ≥ δ`; always counts the round.
    #[must_use]
    pub fn update(self, x_final: &DecisionPoint, x_bar: &DecisionPoint) -> Self {
        let moved = x_final.distance(x_bar) >= self.delta;
        Self {
            count: self.count + usize::from(moved),
            rounds: self.rounds + 1,
            ..self
        }
    }
}

pub fn update_counter(counter: PredictiveCounter, x_final: &DecisionPoint, x_bar: &DecisionPoint) -> PredictiveCounter {
    counter.update(x_final, x_bar)
}

/// Realised improvement `f(x̄) − f(x)` of the predictive decision once the
/// loss is revealed.
pub fn realized_improvement(revealed: &LossRound, x_bar: &DecisionPoint, played: &DecisionPoint) -> f64 {
    revealed.value(x_bar) - revealed.value(played)
}

/// Modified Armijo condition for gradient projection against the revealed
/// loss: `f_{t+1}(x̄ + s·d) ≤ f_{t+1}(x̄) + s ∇f_{t+1}(x̄)ᵀd`.
pub fn modified_armijo_holds(revealed: &LossRound, x_bar: &DecisionPoint, d: &Vector, step: f64) -> bool {
    let trial = x_bar.as_vector() + d * step;
    let lhs = revealed.value(&trial);
    let rhs = revealed.value(x_bar) + step * revealed.gradient(x_bar).dot(d);
    lhs <= rhs + ROUNDING * (lhs.abs() + rhs.abs())
}

/// `max_x |f_t(x) − f_{t−1}(x)|` over the probe points.
pub fn time_variation(previous: &LossRound, current: &LossRound, probes: &[DecisionPoint]) -> f64 {
    probes
        .iter()
        .map(|x| (current.value(x) - previous.value(x)).abs())
        .fold(0.0, f64::max)
}

/// Fallback Δ from a value bound B: `|f_t − f_{t+1}| ≤ 2B`.
pub fn time_lipschitz_from_value_bound(value_bound: f64) -> f64 {
    2.0 * value_bound
}

/// Heuristic Δ: the largest probe-point variation over the last `window`
/// round pairs. Nothing guarantees it bounds the variation at unprobed points.
#[derive(Debug, Clone)]
pub struct TimeLipschitzEstimator {
    window: usize,
    recent: VecDeque<f64>,
}

impl TimeLipschitzEstimator {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        Ok(Self {
            window,
            recent: VecDeque::with_capacity(window),
        })
    }

    pub fn observe(&mut self, previous: &LossRound, current: &LossRound, probes: &[DecisionPoint]) {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(time_variation(previous, current, probes));
    }

    pub fn estimate(&self) -> Option<f64> {
        self.recent.iter().copied().reduce(f64::max)
    }
}

fn check_forecast_epsilon(g: &ForecastGradient, configured: f64) -> Result<()> {
    if g.epsilon() > configured * (1.0 + ROUNDING) {
        return Err(invalid(
            "epsilon",
            format!("forecast error bound {} exceeds the gate's ε = {configured}", g.epsilon()),
        ));
    }
    Ok(())
}
