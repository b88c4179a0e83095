//! Baseline online steppers: OGD, OGD for strongly convex losses, and an
//! optimistic mirror descent with the Euclidean mirror map.
//!
//! Steppers only see gradients, never loss values.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::set::{BoxSet, ConvexSet, DecisionPoint, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgdParams {
    eta: f64,
}

impl OgdParams {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive, got {eta}")));
        }
        Ok(Self { eta })
    }

    /// `η = D / (G √T)`, the usual constant for the `O(√T)` dynamic regret
    /// bound of projected OGD.
    pub fn for_horizon(diameter: f64, gradient_bound: f64, horizon: usize) -> Result<Self> {
        if !(gradient_bound > 0.0) || horizon == 0 {
            return Err(invalid("gradient_bound", "need G > 0 and T ≥ 1"));
        }
        Self::new(diameter / (gradient_bound * (horizon as f64).sqrt()))
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaOgdParams {
    eta: f64,
    gamma: f64,
    sigma: f64,
}

impl SigmaOgdParams {
    /// `eta ∈ (0, 1]`, `gamma > 0`, `sigma ≥ 0`. Use [`with_lipschitz`] to also
    /// enforce `gamma ≤ L`.
    ///
    /// [`with_lipschitz`]: SigmaOgdParams::with_lipschitz
    pub fn new(eta: f64, gamma: f64, sigma: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(invalid("eta", format!("must lie in (0, 1], got {eta}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if !(sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        Ok(Self { eta, gamma, sigma })
    }

    pub fn with_lipschitz(eta: f64, gamma: f64, sigma: f64, lipschitz: f64) -> Result<Self> {
        if gamma > lipschitz {
            return Err(invalid("gamma", format!("{gamma} exceeds the gradient Lipschitz constant {lipschitz}")));
        }
        Self::new(eta, gamma, sigma)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// `Π(x − η ∇f_t(x))`.
pub fn ogd_step(x: &DecisionPoint, grad: &Vector, params: OgdParams, set: &BoxSet) -> Result<DecisionPoint> {
    check_dim(set.dim(), x.len())?;
    check_dim(set.dim(), grad.len())?;
    set.project(&(x.as_vector() - grad * params.eta))
}

/// `x + η (Π(x − ∇f_t(x)/γ) − x)`.
pub fn sigma_ogd_step(
    x: &DecisionPoint,
    grad: &Vector,
    params: SigmaOgdParams,
    set: &BoxSet,
) -> Result<DecisionPoint> {
    check_dim(set.dim(), x.len())?;
    check_dim(set.dim(), grad.len())?;
    let target = set.project(&(x.as_vector() - grad / params.gamma))?;
    if params.eta == 1.0 {
        return Ok(target);
    }
    let step = (target.as_vector() - x.as_vector()) * params.eta;
    // Convex combination of two feasible points; the clamp only absorbs rounding.
    set.project(&(x.as_vector() + step))
}

/// State of the optimistic mirror descent: the secondary sequence `ŷ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmdState {
    secondary: DecisionPoint,
    eta: f64,
}

impl OmdState {
    pub fn new(start: DecisionPoint, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid("eta", format!("must be positive, got {eta}")));
        }
        Ok(Self { secondary: start, eta })
    }

    pub fn secondary(&self) -> &DecisionPoint {
        &self.secondary
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// One optimistic step.
///
/// `ŷ⁺ = Π(ŷ − η ∇f_t)`, then the played decision is `x⁺ = Π(ŷ⁺ − η h)` where
/// `h` is the hint for the next round's gradient. The hint is used as is.
pub fn omd_step(
    state: &OmdState,
    revealed_grad: &Vector,
    hint_grad: &Vector,
    set: &BoxSet,
) -> Result<(DecisionPoint, OmdState)> {
    let secondary = omd_secondary(state, revealed_grad, set)?;
    let played = omd_play(&secondary, hint_grad, state.eta, set)?;
    Ok((
        played,
        OmdState {
            secondary,
            eta: state.eta,
        },
    ))
}

/// First half of [`omd_step`]; the hint is usually evaluated at its output.
pub fn omd_secondary(state: &OmdState, revealed_grad: &Vector, set: &BoxSet) -> Result<DecisionPoint> {
    check_dim(set.dim(), state.secondary.len())?;
    check_dim(set.dim(), revealed_grad.len())?;
    set.project(&(state.secondary.as_vector() - revealed_grad * state.eta))
}

pub fn omd_play(secondary: &DecisionPoint, hint_grad: &Vector, eta: f64, set: &BoxSet) -> Result<DecisionPoint> {
    check_dim(set.dim(), hint_grad.len())?;
    set.project(&(secondary.as_vector() - hint_grad * eta))
}

/// The OCO update underneath a predictive algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Stepper {
    Ogd(OgdParams),
    SigmaOgd(SigmaOgdParams),
}

impl Stepper {
    pub fn step(&self, x: &DecisionPoint, grad: &Vector, set: &BoxSet) -> Result<DecisionPoint> {
        match self {
            Stepper::Ogd(p) => ogd_step(x, grad, *p, set),
            Stepper::SigmaOgd(p) => sigma_ogd_step(x, grad, *p, set),
        }
    }

    /// Step size to reuse for the optimistic baseline.
    pub fn effective_step(&self) -> f64 {
        match self {
            Stepper::Ogd(p) => p.eta(),
            Stepper::SigmaOgd(p) => p.eta() / p.gamma(),
        }
    }
}
