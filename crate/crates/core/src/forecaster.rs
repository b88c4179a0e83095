//! ε-accurate forecasts of the next round's gradient.
//!
//! In simulation the true next gradient is known, so the forecaster perturbs
//! it by a noise vector of norm at most ε. Forecasts coming from elsewhere
//! (a statistical model, a file) are wrapped with [`ForecastGradient::external`];
//! their ε is taken on trust.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::set::{DecisionPoint, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForecastSource {
    Simulated,
    External,
}

/// The estimate `g_t` of `∇f_{t+1}(x̄_{t+1})` with its error bound ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastGradient {
    estimate: Vector,
    epsilon: f64,
    at: Option<DecisionPoint>,
    source: ForecastSource,
}

impl ForecastGradient {
    /// An externally produced forecast. `at` is the point it was evaluated at
    /// when known.
    pub fn external(estimate: Vector, epsilon: f64, at: Option<DecisionPoint>) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            estimate,
            epsilon,
            at,
            source: ForecastSource::External,
        })
    }

    pub fn estimate(&self) -> &Vector {
        &self.estimate
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn evaluated_at(&self) -> Option<&DecisionPoint> {
        self.at.as_ref()
    }

    pub fn source(&self) -> ForecastSource {
        self.source
    }

    pub fn norm(&self) -> f64 {
        self.estimate.norm()
    }

    /// `e_t = g_t − ∇f_{t+1}(x̄_{t+1})`.
    pub fn error(&self, true_next_grad: &Vector) -> Vector {
        &self.estimate - true_next_grad
    }

    /// Whether the forecast honours its own ε against the true gradient.
    /// External forecasts are not checked.
    pub fn within_epsilon(&self, true_next_grad: &Vector) -> bool {
        match self.source {
            ForecastSource::External => true,
            ForecastSource::Simulated => self.error(true_next_grad).norm() <= self.epsilon * (1.0 + 1e-12),
        }
    }
}

/// `‖g_t‖ > ε`: `−g_t` is then a descent direction for `f_{t+1}` at `x̄_{t+1}`.
/// Equality fails.
pub fn descent_check(g: &ForecastGradient) -> bool {
    g.norm() > g.epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Uniform over the ε-ball: radius `ε U^{1/N}`.
    UniformBall,
    /// Norm exactly ε, uniform direction.
    FixedRadiusSphere,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

/// Simulated ε-forecaster with its own RNG.
///
/// Every call consumes the same amount of randomness (N normals and one
/// uniform) whatever the mode and ε, so two forecasters built from the same
/// seed produce paired noise directions.
#[derive(Debug, Clone)]
pub struct Forecaster {
    mode: NoiseMode,
    rng: ChaCha8Rng,
}

impl Forecaster {
    pub fn new(spec: NoiseSpec) -> Self {
        Self {
            mode: spec.mode,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        }
    }

    pub fn from_rng(mode: NoiseMode, rng: ChaCha8Rng) -> Self {
        Self { mode, rng }
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Draws a noise vector with `‖e‖ ≤ ε`.
    pub fn noise(&mut self, dim: usize, epsilon: f64) -> Vector {
        let mut direction = Vector::from_fn(dim, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let u: f64 = self.rng.random();
        let norm = direction.norm();
        if norm > 0.0 {
            direction /= norm;
        }
        let radius = match self.mode {
            NoiseMode::Zero => 0.0,
            NoiseMode::FixedRadiusSphere => epsilon,
            NoiseMode::UniformBall => epsilon * u.powf(1.0 / dim as f64),
        };
        let mut e = direction * radius;
        // Normalisation rounding can push ‖e‖ a hair above ε.
        let n = e.norm();
        if n > epsilon {
            e *= epsilon / n;
        }
        e
    }

    /// `g_t = ∇f_{t+1}(x̄_{t+1}) + e` with `‖e‖ ≤ ε`.
    pub fn forecast(&mut self, true_next_grad: &Vector, epsilon: f64, at: Option<DecisionPoint>) -> Result<ForecastGradient> {
        check_epsilon(epsilon)?;
        if let Some(point) = &at {
            check_dim(point.len(), true_next_grad.len())?;
        }
        let e = self.noise(true_next_grad.len(), epsilon);
        Ok(ForecastGradient {
            estimate: true_next_grad + e,
            epsilon,
            at,
            source: ForecastSource::Simulated,
        })
    }
}

/// One-shot forecast from a fresh RNG seeded by `noise.seed`.
pub fn forecast(true_next_grad: &Vector, epsilon: f64, noise: NoiseSpec) -> Result<ForecastGradient> {
    Forecaster::new(noise).forecast(true_next_grad, epsilon, None)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must be positive, got {epsilon}")))
    }
}
