//! Dynamic regret: per-round optimum oracle, accumulation and the closed-form
//! bounds of the predictive algorithms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::loss::LossRound;
use crate::set::{BoxSet, ConvexSet, DecisionPoint, Vector};

pub const DEFAULT_ORACLE_TOL: f64 = 1e-9;
pub const DEFAULT_ORACLE_MAX_ITERS: usize = 100_000;

/// Result of the argmin oracle for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOptimum {
    pub minimizer: DecisionPoint,
    pub value: f64,
    /// `‖x − Π(x − ∇f(x)/L)‖` at the returned point.
    pub residual: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out before the residual reached `tol`; the
    /// best iterate is still returned.
    pub converged: bool,
}

/// `argmin_{x ∈ set} f_t(x)` by accelerated projected gradient, starting from
/// the centre of the box.
pub fn round_optimum(f_t: &LossRound, set: &BoxSet, tol: f64, max_iters: usize) -> Result<RoundOptimum> {
    round_optimum_from(f_t, set, &set.center(), tol, max_iters)
}

/// As [`round_optimum`] with a warm start. A closed-form minimiser supplied
/// by the loss replaces the warm start.
///
/// Step `1/L` when the loss carries a Lipschitz hint, otherwise `L` is found by
/// backtracking (doubling from 1). Momentum is reset whenever the gradient
/// mapping points against the last move, which keeps the iteration monotone
/// enough for strongly convex losses.
pub fn round_optimum_from(
    f_t: &LossRound,
    set: &BoxSet,
    start: &DecisionPoint,
    tol: f64,
    max_iters: usize,
) -> Result<RoundOptimum> {
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    check_dim(set.dim(), f_t.dim())?;
    check_dim(set.dim(), start.len())?;

    let backtrack = f_t.hints().lipschitz.is_none();
    let mut lip = f_t.hints().lipschitz.unwrap_or(1.0);
    let seed = match f_t.box_minimizer(set) {
        Some(exact) => DecisionPoint::new(exact),
        None => start.clone(),
    };
    let mut x = set.project(&seed)?.into_vector();
    let mut y = x.clone();
    let mut momentum = 1.0_f64;

    let mut residual = gradient_mapping(f_t, set, &x, lip)?;
    let mut best = (f_t.value(&x), x.clone(), residual);
    if residual <= tol {
        return Ok(optimum(best, 0, true));
    }

    for iter in 1..=max_iters {
        let gy = f_t.gradient(&y);
        let mut x_next = set.project(&(&y - &gy / lip))?.into_vector();
        if backtrack {
            let fy = f_t.value(&y);
            loop {
                let step = &x_next - &y;
                let model = fy + gy.dot(&step) + 0.5 * lip * step.norm_squared();
                if f_t.value(&x_next) <= model + 1e-15 * fy.abs().max(1.0) {
                    break;
                }
                lip *= 2.0;
                x_next = set.project(&(&y - &gy / lip))?.into_vector();
            }
        }

        let restart = (&y - &x_next).dot(&(&x_next - &x)) > 0.0;
        if restart {
            momentum = 1.0;
            y = x_next.clone();
        } else {
            let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &x_next + (&x_next - &x) * ((momentum - 1.0) / next_momentum);
            momentum = next_momentum;
        }
        x = x_next;

        residual = gradient_mapping(f_t, set, &x, lip)?;
        let value = f_t.value(&x);
        if value < best.0 || residual <= tol {
            best = (value, x.clone(), residual);
        }
        if residual <= tol {
            return Ok(optimum(best, iter, true));
        }
    }
    Ok(optimum(best, max_iters, false))
}

fn gradient_mapping(f_t: &LossRound, set: &BoxSet, x: &Vector, lip: f64) -> Result<f64> {
    let mapped = set.project(&(x - f_t.gradient(x) / lip))?;
    Ok((x - mapped.as_vector()).norm())
}

fn optimum((value, x, residual): (f64, Vector, f64), iterations: usize, converged: bool) -> RoundOptimum {
    RoundOptimum {
        minimizer: DecisionPoint::new(x),
        value,
        residual,
        iterations,
        converged,
    }
}

/// Regret series of one algorithm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries {
    pub increments: Vec<f64>,
    pub cumulative: f64,
    /// `V_T = Σ_{t≥2} ‖x*_t − x*_{t−1}‖` over the optima seen by this series.
    pub path_variation: f64,
    pub previous_optimum: Option<DecisionPoint>,
}

/// Per-algorithm dynamic regret `Σ f_t(x_t) − f_t(x*_t)`.
///
/// Each series keeps its own path variation: with state-dependent losses the
/// round optima depend on the trajectory that produced the state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    series: BTreeMap<String, RegretSeries>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `f_t(played) − f_t(x*_t)` to the named series, registering it on
    /// first use. Returns the increment.
    pub fn accumulate(&mut self, name: &str, f_t: &LossRound, played: &DecisionPoint, optimum: &RoundOptimum) -> Result<f64> {
        check_dim(f_t.dim(), played.len())?;
        Ok(self.accumulate_value(name, f_t.value(played), optimum))
    }

    /// As [`accumulate`](Self::accumulate) when the played loss is already known.
    pub fn accumulate_value(&mut self, name: &str, played_value: f64, optimum: &RoundOptimum) -> f64 {
        let series = self.series.entry(name.to_owned()).or_default();
        let increment = played_value - optimum.value;
        series.increments.push(increment);
        series.cumulative += increment;
        if let Some(prev) = &series.previous_optimum {
            series.path_variation += prev.distance(&optimum.minimizer);
        }
        series.previous_optimum = Some(optimum.minimizer.clone());
        increment
    }

    pub fn get(&self, name: &str) -> Option<&RegretSeries> {
        self.series.get(name)
    }

    pub fn cumulative(&self, name: &str) -> Option<f64> {
        self.get(name).map(|s| s.cumulative)
    }

    pub fn path_variation(&self, name: &str) -> Option<f64> {
        self.get(name).map(|s| s.path_variation)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }
}

/// Dynamic regret bound of projected OGD with `η ∝ 1/√T`:
/// `(7X²/4 + G²/2 + X·V_T)·√T`.
pub fn ogd_bound(norm_bound: f64, gradient_bound: f64, path_variation: f64, horizon: usize) -> f64 {
    pogd_bound(norm_bound, gradient_bound, path_variation, 0.0, horizon)
}

/// `(7X²/4 + G²/2 + X·V_T − δ)·√T`, valid when more than `1/√T` of the
/// rounds used the predictive update.
pub fn pogd_bound(norm_bound: f64, gradient_bound: f64, path_variation: f64, delta: f64, horizon: usize) -> f64 {
    let x = norm_bound;
    (1.75 * x * x + 0.5 * gradient_bound * gradient_bound + x * path_variation - delta) * (horizon as f64).sqrt()
}

/// Regret bound of the fixed-step predictive algorithm given the bound of the
/// underlying OCO algorithm: `oco_bound − T·ν·δ`.
pub fn poco_bound(oco_bound: f64, horizon: usize, nu: f64, delta: f64) -> f64 {
    oco_bound - horizon as f64 * nu * delta
}

/// Backtracking counterpart: `oco_bound − 2·T·ν·Δ`.
pub fn pocob_bound(oco_bound: f64, horizon: usize, nu: f64, time_lipschitz: f64) -> f64 {
    oco_bound - 2.0 * horizon as f64 * nu * time_lipschitz
}

/// `C·(V_T + 1)`, the shape of the strongly convex OGD bound. The constant is
/// not known in closed form and must be supplied.
pub fn sigma_ogd_bound(constant: f64, path_variation: f64) -> f64 {
    constant * (path_variation + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oco::{ogd_step, OgdParams};

    fn shifted_square(center: f64, lip_hint: bool) -> LossRound {
        let f = LossRound::from_fns(
            1,
            1,
            move |x| (x[0] - center).powi(2),
            move |x| Vector::from_element(1, 2.0 * (x[0] - center)),
        );
        if lip_hint {
            f.with_hints(crate::loss::BoundHints {
                lipschitz: Some(2.0),
                ..Default::default()
            })
        } else {
            f
        }
    }

    #[test]
    fn interior_quadratic() {
        let set = BoxSet::uniform(1, 0.0, 1.0).unwrap();
        for hint in [true, false] {
            let opt = round_optimum(&shifted_square(0.3, hint), &set, 1e-9, 1000).unwrap();
            assert!(opt.converged);
            assert!((opt.minimizer[0] - 0.3).abs() < 1e-9);
            assert!(opt.value < 1e-17);
            assert!(opt.residual <= 1e-9);
        }
    }

    #[test]
    fn clamped_quadratic() {
        let set = BoxSet::uniform(1, 0.0, 1.0).unwrap();
        let opt = round_optimum(&shifted_square(2.0, false), &set, 1e-9, 1000).unwrap();
        assert_eq!(opt.minimizer[0], 1.0);
        assert!((opt.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exhausted_iterations_are_flagged() {
        // Ill-conditioned 2-d quadratic, one iteration allowed.
        let set = BoxSet::uniform(2, -10.0, 10.0).unwrap();
        let f = LossRound::from_fns(
            1,
            2,
            |x| 100.0 * (x[0] - 1.0).powi(2) + 0.01 * (x[1] - 3.0).powi(2),
            |x| Vector::from_column_slice(&[200.0 * (x[0] - 1.0), 0.02 * (x[1] - 3.0)]),
        );
        let opt = round_optimum(&f, &set, 1e-9, 1).unwrap();
        assert!(!opt.converged);
        assert!(opt.residual > 1e-9);
        let full = round_optimum(&f, &set, 1e-9, 100_000).unwrap();
        assert!(full.converged);
        assert!((full.minimizer[1] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let set = BoxSet::uniform(1, 0.0, 1.0).unwrap();
        assert!(round_optimum(&shifted_square(0.3, true), &set, 0.0, 10).is_err());
    }

    #[test]
    fn played_optimum_has_zero_increment() {
        let set = BoxSet::uniform(1, 0.0, 1.0).unwrap();
        let f = shifted_square(0.3, true);
        let opt = round_optimum(&f, &set, 1e-9, 1000).unwrap();
        let mut ledger = RegretLedger::new();
        let inc = ledger.accumulate("ogd", &f, &opt.minimizer, &opt).unwrap();
        assert_eq!(inc, 0.0);
    }

    #[test]
    fn path_variation_between_rounds() {
        let opt = |x: f64| RoundOptimum {
            minimizer: DecisionPoint::from_slice(&[x]),
            value: 0.0,
            residual: 0.0,
            iterations: 0,
            converged: true,
        };
        let mut ledger = RegretLedger::new();
        ledger.accumulate_value("a", 0.5, &opt(0.0));
        ledger.accumulate_value("a", 0.25, &opt(1.0));
        let s = ledger.get("a").unwrap();
        assert_eq!(s.path_variation, 1.0);
        assert_eq!(s.cumulative, 0.75);
        assert_eq!(s.increments, vec![0.5, 0.25]);
        assert!(ledger.get("b").is_none());
    }

    #[test]
    fn ogd_regret_on_fixed_quadratic_flattens() {
        let set = BoxSet::uniform(1, -1.0, 1.0).unwrap();
        let f = shifted_square(0.6, true);
        let opt = round_optimum(&f, &set, 1e-12, 1000).unwrap();
        let params = OgdParams::new(0.05).unwrap();
        let mut ledger = RegretLedger::new();
        let mut x = DecisionPoint::from_slice(&[-1.0]);
        let mut cumulative = Vec::new();
        for _ in 0..400 {
            ledger.accumulate("ogd", &f, &x, &opt).unwrap();
            cumulative.push(ledger.cumulative("ogd").unwrap());
            x = ogd_step(&x, &f.gradient(&x), params, &set).unwrap();
        }
        let incs = &ledger.get("ogd").unwrap().increments;
        assert!(incs.iter().all(|&i| i >= -1e-12));
        assert!(incs.windows(2).all(|w| w[1] <= w[0] + 1e-15), "increments should shrink");
        let total = *cumulative.last().unwrap();
        assert!(total - cumulative[199] < 1e-6 * total.max(1.0));
    }

    #[test]
    fn bound_values() {
        assert_eq!(pogd_bound(1.0, 1.0, 0.0, 0.0, 100), 22.5);
        assert_eq!(ogd_bound(1.0, 1.0, 0.0, 100), 22.5);
        assert!(pogd_bound(1.0, 1.0, 0.5, 0.2, 100) < pogd_bound(1.0, 1.0, 0.5, 0.1, 100));
        assert_eq!(poco_bound(100.0, 1000, 0.0, 0.5), 100.0);
        assert_eq!(poco_bound(100.0, 1000, 0.1, 0.5), 50.0);
        assert_eq!(pocob_bound(10.0, 100, 0.0, 0.2), 10.0);
        assert!((pocob_bound(10.0, 100, 0.05, 0.2) - 8.0).abs() < 1e-12);
        assert_eq!(sigma_ogd_bound(2.0, 3.0), 8.0);
    }
}
