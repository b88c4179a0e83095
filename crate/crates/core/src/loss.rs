//! The per-round loss contract.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{check_dim, invalid, Result};
use crate::set::{BoxSet, ConvexSet, DecisionPoint, Vector};

/// A differentiable convex function on the decision set.
pub trait Loss: Send + Sync {
    fn value(&self, x: &Vector) -> f64;

    fn gradient(&self, x: &Vector) -> Vector;

    fn dim(&self) -> usize;

    /// Exact minimiser over `set` when the loss has a closed form for it.
    /// The oracle uses it as a warm start and still checks the residual.
    fn box_minimizer(&self, _set: &BoxSet) -> Option<Vector> {
        None
    }
}

/// Optional bounds the algorithms and oracles may rely on.
///
/// `value_bound` is B (`|f_t(x)| ≤ B`), `gradient_bound` is G
/// (`‖∇f_t(x)‖ ≤ G`) and `lipschitz` is L for the gradient. They are spot-checked
/// by sampling, never proved.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundHints {
    pub value_bound: Option<f64>,
    pub gradient_bound: Option<f64>,
    pub lipschitz: Option<f64>,
}

/// The loss of round `t`, revealed after the decision for that round.
#[derive(Clone)]
pub struct LossRound {
    round: usize,
    inner: Arc<dyn Loss>,
    hints: BoundHints,
}

impl LossRound {
    pub fn new(round: usize, loss: impl Loss + 'static) -> Self {
        Self {
            round,
            inner: Arc::new(loss),
            hints: BoundHints::default(),
        }
    }

    pub fn from_fns<V, G>(round: usize, dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self::new(
            round,
            FnLoss {
                dim,
                value,
                gradient,
            },
        )
    }

    pub fn with_hints(mut self, hints: BoundHints) -> Self {
        self.hints = hints;
        self
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn hints(&self) -> BoundHints {
        self.hints
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.inner.gradient(x)
    }

    pub fn box_minimizer(&self, set: &BoxSet) -> Option<Vector> {
        self.inner.box_minimizer(set)
    }

    pub fn checked_value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value(x))
    }

    pub fn checked_gradient(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.gradient(x))
    }
}

impl fmt::Debug for LossRound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossRound")
            .field("round", &self.round)
            .field("dim", &self.dim())
            .field("hints", &self.hints)
            .finish()
    }
}

struct FnLoss<V, G> {
    dim: usize,
    value: V,
    gradient: G,
}

impl<V, G> Loss for FnLoss<V, G>
where
    V: Fn(&Vector) -> f64 + Send + Sync,
    G: Fn(&Vector) -> Vector + Send + Sync,
{
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Central-difference gradient, one coordinate at a time.
///
/// Test oracle for the analytic gradients; `x` should sit at least `step`
/// inside the set.
pub fn finite_difference_gradient(loss: &LossRound, x: &DecisionPoint, step: f64) -> Result<Vector> {
    if !(step > 0.0) {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    check_dim(loss.dim(), x.len())?;
    let mut probe = x.as_vector().clone();
    let mut out = Vector::zeros(x.len());
    for i in 0..x.len() {
        let xi = probe[i];
        probe[i] = xi + step;
        let up = loss.value(&probe);
        probe[i] = xi - step;
        let down = loss.value(&probe);
        probe[i] = xi;
        out[i] = (up - down) / (2.0 * step);
    }
    Ok(out)
}

/// A point drawn uniformly from the box shrunk by `margin` on every side.
pub fn sample_interior<R: Rng + ?Sized>(set: &BoxSet, margin: f64, rng: &mut R) -> DecisionPoint {
    let lo = set.lower();
    let hi = set.upper();
    DecisionPoint::new(Vector::from_fn(set.dim(), |i, _| {
        let a = lo[i] + margin;
        let b = hi[i] - margin;
        if a >= b {
            0.5 * (lo[i] + hi[i])
        } else {
            rng.random_range(a..b)
        }
    }))
}

/// Outcome of sampling-based hint validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HintReport {
    pub samples: usize,
    pub max_abs_value: f64,
    pub max_gradient_norm: f64,
    pub value_bound_ok: bool,
    pub gradient_bound_ok: bool,
}

/// Spot-checks the B and G hints at `samples` random feasible points.
pub fn check_hints<R: Rng + ?Sized>(loss: &LossRound, set: &BoxSet, samples: usize, rng: &mut R) -> HintReport {
    let mut report = HintReport {
        samples,
        ..HintReport::default()
    };
    for _ in 0..samples {
        let x = sample_interior(set, 0.0, rng);
        report.max_abs_value = report.max_abs_value.max(loss.value(&x).abs());
        report.max_gradient_norm = report.max_gradient_norm.max(loss.gradient(&x).norm());
    }
    let hints = loss.hints();
    report.value_bound_ok = hints.value_bound.is_none_or(|b| report.max_abs_value <= b);
    report.gradient_bound_ok = hints.gradient_bound.is_none_or(|g| report.max_gradient_norm <= g);
    report
}

/// Midpoint convexity on random feasible pairs; returns the largest violation
/// `f((x+y)/2) − (f(x)+f(y))/2` seen (≤ 0 up to rounding for convex losses).
pub fn midpoint_convexity_gap<R: Rng + ?Sized>(loss: &LossRound, set: &BoxSet, samples: usize, rng: &mut R) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let x = sample_interior(set, 0.0, rng);
        let y = sample_interior(set, 0.0, rng);
        let mid = (x.as_vector() + y.as_vector()) * 0.5;
        let gap = loss.value(&mid) - 0.5 * (loss.value(&x) + loss.value(&y));
        worst = worst.max(gap);
    }
    worst
}

/// Largest relative gradient error against central differences over
/// `points` random interior points. The relative error uses
/// `max(‖∇f‖, 1)` as the scale.
pub fn max_gradient_error<R: Rng + ?Sized>(
    loss: &LossRound,
    set: &BoxSet,
    points: usize,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = sample_interior(set, step, rng);
        let fd = finite_difference_gradient(loss, &x, step)?;
        let exact = loss.gradient(&x);
        let err = (&fd - &exact).norm() / exact.norm().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
