//! Demand-response simulation: a fleet of storage-like loads dispatched to
//! follow a regulation signal or to curtail consumption.
//!
//! Units: decisions are energy per step (kWh). Power limits in kW convert
//! through `h / 3600` with `h` the step length in seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::loss::{BoundHints, Loss, LossRound};
use crate::set::{BoxSet, ConvexSet, DecisionPoint, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Regulation,
    Curtailment,
}

/// Sampling ranges for a fleet. Defaults are the regulation study's values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleetParams {
    pub loads: usize,
    pub step_seconds: f64,
    /// Range of the per-load power limit `x̄/h`, kW.
    pub power_kw: (f64, f64),
    /// Range of the per-load capacity `c`, kWh.
    pub capacity_kwh: (f64, f64),
    /// Recovery coefficient α applied to the state each curtailment step.
    pub recovery: f64,
}

impl Default for FleetParams {
    fn default() -> Self {
        Self {
            loads: 25,
            step_seconds: 30.0,
            power_kw: (1.0, 3.0),
            capacity_kwh: (10.0, 15.0),
            recovery: 1.0,
        }
    }
}

impl FleetParams {
    pub fn validate(&self) -> Result<()> {
        if self.loads == 0 {
            return Err(invalid("loads", "need at least one load"));
        }
        if !(self.step_seconds > 0.0) {
            return Err(invalid("step_seconds", format!("must be positive, got {}", self.step_seconds)));
        }
        let (plo, phi) = self.power_kw;
        if !(plo > 0.0 && plo <= phi && phi.is_finite()) {
            return Err(invalid("power_kw", format!("need 0 < lo ≤ hi, got [{plo}, {phi}]")));
        }
        let (clo, chi) = self.capacity_kwh;
        if !(clo > 0.0 && clo <= chi && chi.is_finite()) {
            return Err(invalid("capacity_kwh", format!("need 0 < lo ≤ hi, got [{clo}, {chi}]")));
        }
        if !(self.recovery >= 1.0 && self.recovery.is_finite()) {
            return Err(invalid("recovery", format!("must be at least 1, got {}", self.recovery)));
        }
        Ok(())
    }

    /// kWh per step delivered by 1 kW.
    pub fn energy_per_kw(&self) -> f64 {
        self.step_seconds / 3600.0
    }
}

/// The loads: box limits, capacities and state of charge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    max_energy: Vector,
    capacity: Vector,
    state: Vector,
    step_seconds: f64,
    recovery: f64,
    elapsed: usize,
}

impl Fleet {
    /// Builds a fleet at half charge. `max_energy` is `x̄` in kWh per step.
    pub fn new(max_energy: Vector, capacity: Vector, step_seconds: f64, recovery: f64) -> Result<Self> {
        check_dim(max_energy.len(), capacity.len())?;
        if max_energy.iter().any(|&m| !(m >= 0.0)) {
            return Err(invalid("max_energy", "limits must be nonnegative"));
        }
        if capacity.iter().any(|&c| !(c > 0.0)) {
            return Err(invalid("capacity", "capacities must be positive"));
        }
        if !(recovery >= 1.0) {
            return Err(invalid("recovery", format!("must be at least 1, got {recovery}")));
        }
        let state = &capacity * 0.5;
        Ok(Self {
            max_energy,
            capacity,
            state,
            step_seconds,
            recovery,
            elapsed: 0,
        })
    }

    pub fn sample<R: Rng + ?Sized>(params: &FleetParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let n = params.loads;
        let (plo, phi) = params.power_kw;
        let (clo, chi) = params.capacity_kwh;
        let mut power = Vector::zeros(n);
        let mut capacity = Vector::zeros(n);
        for i in 0..n {
            power[i] = sample_range(rng, plo, phi);
            capacity[i] = sample_range(rng, clo, chi);
        }
        Self::new(power * params.energy_per_kw(), capacity, params.step_seconds, params.recovery)
    }

    pub fn loads(&self) -> usize {
        self.capacity.len()
    }

    pub fn max_energy(&self) -> &Vector {
        &self.max_energy
    }

    /// Per-load power limit in kW.
    pub fn max_power_kw(&self) -> Vector {
        &self.max_energy * (3600.0 / self.step_seconds)
    }

    pub fn capacity(&self) -> &Vector {
        &self.capacity
    }

    pub fn state(&self) -> &Vector {
        &self.state
    }

    pub fn recovery(&self) -> f64 {
        self.recovery
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    /// Number of transitions applied so far; the next loss is for round
    /// `elapsed + 1`.
    pub fn elapsed(&self) -> usize {
        self.elapsed
    }

    /// `{ x : −x̄ ≤ x ≤ x̄ }`.
    pub fn decision_set(&self) -> BoxSet {
        BoxSet::symmetric(self.max_energy.clone()).expect("fleet limits are nonnegative")
    }

    /// Applies the dispatch `x_t` in place.
    ///
    /// Regulation: `s_t = s_{t−1} + x_t`. Curtailment: `s_t = α s_{t−1} + x_t`.
    pub fn advance(&mut self, x: &DecisionPoint, kind: SignalKind) -> Result<()> {
        check_dim(self.loads(), x.len())?;
        match kind {
            SignalKind::Regulation => self.state += x.as_vector(),
            SignalKind::Curtailment => {
                self.state *= self.recovery;
                self.state += x.as_vector();
            }
        }
        self.elapsed += 1;
        Ok(())
    }

    /// The offset `s − c/2` the state-of-charge term penalises, with the
    /// recovery applied for curtailment.
    fn soc_offset(&self, kind: SignalKind) -> Vector {
        let alpha = match kind {
            SignalKind::Regulation => 1.0,
            SignalKind::Curtailment => self.recovery,
        };
        &self.state * alpha - &self.capacity * 0.5
    }
}

fn sample_range<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

pub fn sample_fleet(params: &FleetParams, seed: u64) -> Result<Fleet> {
    Fleet::sample(params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Returns the fleet after dispatching `x_t`.
pub fn advance_state(fleet: &Fleet, x: &DecisionPoint, kind: SignalKind) -> Result<Fleet> {
    let mut next = fleet.clone();
    next.advance(x, kind)?;
    Ok(next)
}

/// Largest Hessian eigenvalue of the regulation loss, `2N + 2σ`.
pub fn regulation_lipschitz(loads: usize, sigma: f64) -> f64 {
    2.0 * loads as f64 + 2.0 * sigma
}

/// `(r − 1ᵀx)² + σ‖o + x‖²` with `o = s_{t−1} − c/2`.
#[derive(Debug, Clone)]
pub struct RegulationLoss {
    pub signal: f64,
    pub sigma: f64,
    pub offset: Vector,
}

impl Loss for RegulationLoss {
    fn value(&self, x: &Vector) -> f64 {
        let gap = self.signal - x.sum();
        gap * gap + self.sigma * (&self.offset + x).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let gap = self.signal - x.sum();
        (&self.offset + x) * (2.0 * self.sigma) - Vector::from_element(x.len(), 2.0 * gap)
    }

    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn box_minimizer(&self, set: &BoxSet) -> Option<Vector> {
        sum_coupled_minimizer(self.signal, self.sigma, &self.offset, set, false)
    }
}

/// `([p − 1ᵀx]⁺)² + σ‖o + x‖²` with `o = α s_{t−1} − c/2`.
///
/// The hinge contributes `−2[p − 1ᵀx]⁺·1` to the gradient, zero at the kink.
#[derive(Debug, Clone)]
pub struct CurtailmentLoss {
    pub signal: f64,
    pub sigma: f64,
    pub offset: Vector,
}

impl Loss for CurtailmentLoss {
    fn value(&self, x: &Vector) -> f64 {
        let shortfall = (self.signal - x.sum()).max(0.0);
        shortfall * shortfall + self.sigma * (&self.offset + x).norm_squared()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let shortfall = (self.signal - x.sum()).max(0.0);
        (&self.offset + x) * (2.0 * self.sigma) - Vector::from_element(x.len(), 2.0 * shortfall)
    }

    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn box_minimizer(&self, set: &BoxSet) -> Option<Vector> {
        sum_coupled_minimizer(self.signal, self.sigma, &self.offset, set, true)
    }
}

/// Minimiser of `φ(r − 1ᵀx) + σ‖x + o‖²` over a box, where `φ(u) = u²` or
/// `([u]⁺)²` when `hinge` is set.
///
/// Stationarity gives `x = clamp(λ − o)` with `σλ = ψ(r − 1ᵀx)` and `ψ` the
/// identity or the positive part. The left side minus the right is increasing
/// in `λ`, so bisection brackets it; the active set found there then yields
/// `λ` in closed form.
fn sum_coupled_minimizer(signal: f64, sigma: f64, offset: &Vector, set: &BoxSet, hinge: bool) -> Option<Vector> {
    if offset.len() != set.dim() || !(sigma > 0.0) || !signal.is_finite() {
        return None;
    }
    let lower = set.lower();
    let upper = set.upper();
    let clamp = |lambda: f64| Vector::from_fn(offset.len(), |i, _| (lambda - offset[i]).clamp(lower[i], upper[i]));
    let psi = |u: f64| if hinge { u.max(0.0) } else { u };
    let excess = |lambda: f64| sigma * lambda - psi(signal - clamp(lambda).sum());

    let reach = signal.abs() + lower.sum().abs().max(upper.sum().abs()) + 1.0;
    let (mut lo, mut hi) = (-reach / sigma - 1.0, reach / sigma + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);

    let x = clamp(lambda);
    let free: Vec<usize> = (0..x.len()).filter(|&i| x[i] > lower[i] && x[i] < upper[i]).collect();
    let pinned: f64 = (0..x.len()).filter(|i| !free.contains(i)).map(|i| x[i]).sum();
    let free_offset: f64 = free.iter().map(|&i| offset[i]).sum();
    let k = free.len() as f64;
    // On a fixed active set 1ᵀx = pinned + kλ − Σ_free o, so σλ = r − 1ᵀx is linear.
    let linear = (signal - pinned + free_offset) / (sigma + k);
    let refined = if hinge && signal - (pinned + k * linear - free_offset) <= 0.0 {
        0.0
    } else {
        linear
    };
    let consistent = free
        .iter()
        .all(|&i| refined - offset[i] >= lower[i] && refined - offset[i] <= upper[i]);
    if consistent && (refined - lambda).abs() <= 1e-6 * lambda.abs().max(1.0) {
        lambda = refined;
    }
    Some(clamp(lambda))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(invalid("sigma", format!("must be positive, got {sigma}")))
    }
}

/// Regulation loss of the next round for the fleet's current state. Carries
/// the exact gradient Lipschitz constant as a hint.
pub fn regulation_loss(fleet: &Fleet, signal: f64, sigma: f64) -> Result<LossRound> {
    check_sigma(sigma)?;
    let loss = RegulationLoss {
        signal,
        sigma,
        offset: fleet.soc_offset(SignalKind::Regulation),
    };
    Ok(LossRound::new(fleet.elapsed() + 1, loss).with_hints(BoundHints {
        lipschitz: Some(regulation_lipschitz(fleet.loads(), sigma)),
        ..BoundHints::default()
    }))
}

/// Curtailment loss of the next round. No Lipschitz hint: only the
/// backtracking gate is meant for it.
pub fn curtailment_loss(fleet: &Fleet, signal: f64, sigma: f64) -> Result<LossRound> {
    check_sigma(sigma)?;
    let loss = CurtailmentLoss {
        signal,
        sigma,
        offset: fleet.soc_offset(SignalKind::Curtailment),
    };
    Ok(LossRound::new(fleet.elapsed() + 1, loss))
}

pub fn fleet_loss(fleet: &Fleet, kind: SignalKind, signal: f64, sigma: f64) -> Result<LossRound> {
    match kind {
        SignalKind::Regulation => regulation_loss(fleet, signal, sigma),
        SignalKind::Curtailment => curtailment_loss(fleet, signal, sigma),
    }
}

/// Noise variances of the signal models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalNoise {
    /// Regulation noise, and curtailment noise during the ramp.
    pub variance: f64,
    /// Curtailment noise on the plateau.
    pub plateau_variance: f64,
}

impl Default for SignalNoise {
    fn default() -> Self {
        Self {
            variance: 0.01,
            plateau_variance: 0.001,
        }
    }
}

impl SignalNoise {
    pub const OFF: SignalNoise = SignalNoise {
        variance: 0.0,
        plateau_variance: 0.0,
    };
}

/// Precomputed signal series for rounds `1..=T`.
///
/// Regulation: `r_t = 0.2 sin(2πt/T) + w_t`. Curtailment: `p_t = 0.04 t^0.3 + w_t`
/// for `t ≤ T/4`, then `0.04 (T/4)^0.3 + w'_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    kind: SignalKind,
    horizon: usize,
    seed: u64,
    noise: SignalNoise,
    values: Vec<f64>,
}

impl SignalModel {
    pub fn new(kind: SignalKind, horizon: usize, seed: u64, noise: SignalNoise) -> Result<Self> {
        Self::from_rng(kind, horizon, seed, noise, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uses the given RNG stream; `seed` is only recorded.
    pub fn from_rng(kind: SignalKind, horizon: usize, seed: u64, noise: SignalNoise, mut rng: ChaCha8Rng) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon", "need at least one round"));
        }
        if !(noise.variance >= 0.0 && noise.plateau_variance >= 0.0) {
            return Err(invalid("noise", "variances must be nonnegative"));
        }
        let early = gaussian(noise.variance)?;
        let late = gaussian(noise.plateau_variance)?;
        let values = (1..=horizon)
            .map(|t| {
                // One draw per round from each law keeps streams aligned.
                let w = early.sample(&mut rng);
                let w_late = late.sample(&mut rng);
                match kind {
                    SignalKind::Regulation => regulation_trend(t, horizon) + w,
                    SignalKind::Curtailment if 4 * t <= horizon => curtailment_trend(t, horizon) + w,
                    SignalKind::Curtailment => curtailment_trend(t, horizon) + w_late,
                }
            })
            .collect();
        Ok(Self {
            kind,
            horizon,
            seed,
            noise,
            values,
        })
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise(&self) -> SignalNoise {
        self.noise
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn generate(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.horizon {
            return Err(Error::RoundOutOfRange {
                round: t,
                horizon: self.horizon,
            });
        }
        Ok(self.values[t - 1])
    }
}

pub fn generate_signal(model: &SignalModel, t: usize) -> Result<f64> {
    model.generate(t)
}

fn gaussian(variance: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, variance.sqrt()).map_err(|e| invalid("noise", e.to_string()))
}

fn regulation_trend(t: usize, horizon: usize) -> f64 {
    0.2 * (2.0 * std::f64::consts::PI * t as f64 / horizon as f64).sin()
}

fn curtailment_trend(t: usize, horizon: usize) -> f64 {
    let ramp_end = horizon as f64 / 4.0;
    0.04 * (t as f64).min(ramp_end).powf(0.3)
}
