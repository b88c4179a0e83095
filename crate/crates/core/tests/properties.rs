mod common;

use approx::assert_relative_eq;
use nalgebra::DMatrix;
use poco_core::demand_response::{curtailment_loss, regulation_lipschitz, regulation_loss, Fleet, FleetParams, SignalKind};
use poco_core::forecaster::ForecastGradient;
use poco_core::loss::sample_interior;
use poco_core::oco::{omd_step, sigma_ogd_step};
use poco_core::predictive::{online_armijo_holds, predictive_candidate};
use poco_core::regret::{round_optimum_from, DEFAULT_ORACLE_MAX_ITERS, DEFAULT_ORACLE_TOL};
use poco_core::{
    backtracking_search, fixed_step_gate, ogd_step, round_optimum, BacktrackConfig, BoxSet, ConvexSet, DecisionPoint,
    FixedStepGateConfig, LossRound, OgdParams, OmdState, PredictiveCounter, SigmaOgdParams, Vector,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::box_qp_active_set;

fn boxes(max_dim: usize) -> impl Strategy<Value = BoxSet> {
    (1..=max_dim).prop_flat_map(|n| {
        (prop::collection::vec(-3.0..1.0f64, n), prop::collection::vec(0.0..3.0f64, n)).prop_map(|(lo, width)| {
            let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
            BoxSet::from_slices(&lo, &hi).unwrap()
        })
    })
}

fn point_in(set: &BoxSet, weights: &[f64]) -> DecisionPoint {
    DecisionPoint::new(Vector::from_fn(set.dim(), |i, _| {
        let w = weights[i % weights.len()];
        set.lower()[i] + w * (set.upper()[i] - set.lower()[i])
    }))
}

fn vector(dim: usize, values: &[f64]) -> Vector {
    Vector::from_fn(dim, |i, _| values[i % values.len()])
}

/// `½ (x − c)ᵀ A (x − c)` with `A = diag(curv)`; gradient Lipschitz constant `max curv`.
fn diagonal_quadratic(curv: Vector, centre: Vector) -> LossRound {
    let n = curv.len();
    let (c1, m1) = (curv.clone(), centre.clone());
    LossRound::from_fns(
        1,
        n,
        move |x| 0.5 * (x - &m1).component_mul(&(x - &m1)).dot(&c1),
        move |x| (x - &centre).component_mul(&curv),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_is_idempotent_nonexpansive_and_nearest(
        set in boxes(6),
        a in prop::collection::vec(-8.0..8.0f64, 6),
        b in prop::collection::vec(-8.0..8.0f64, 6),
        w in prop::collection::vec(0.0..1.0f64, 6),
    ) {
        let n = set.dim();
        let (a, b) = (vector(n, &a), vector(n, &b));
        let pa = set.project(&a).unwrap();
        let pb = set.project(&b).unwrap();
        prop_assert!(set.contains(pa.as_vector(), 0.0));
        prop_assert_eq!(set.project(pa.as_vector()).unwrap(), pa.clone());
        prop_assert!(pa.distance(&pb) <= (&a - &b).norm() + 1e-12);
        let other = point_in(&set, &w);
        prop_assert!((&a - pa.as_vector()).norm() <= (&a - other.as_vector()).norm() + 1e-12);
        // Variational inequality of the projection.
        prop_assert!((&a - pa.as_vector()).dot(&(other.as_vector() - pa.as_vector())) <= 1e-9);
    }

    #[test]
    fn steppers_stay_feasible(
        set in boxes(5),
        w in prop::collection::vec(0.0..1.0f64, 5),
        g in prop::collection::vec(-50.0..50.0f64, 5),
        eta in 1e-4..2.0f64,
        gamma in 0.1..50.0f64,
    ) {
        let x = point_in(&set, &w);
        let g = vector(set.dim(), &g);
        let ogd = ogd_step(&x, &g, OgdParams::new(eta).unwrap(), &set).unwrap();
        prop_assert!(set.contains(ogd.as_vector(), 1e-12));
        let sigma = SigmaOgdParams::new(eta.min(1.0), gamma, 0.1).unwrap();
        let s = sigma_ogd_step(&x, &g, sigma, &set).unwrap();
        prop_assert!(set.contains(s.as_vector(), 1e-12));
    }

    #[test]
    fn fixed_gate_guarantees_improvement_on_quadratics(
        set in boxes(5),
        curv in prop::collection::vec(0.05..4.0f64, 5),
        centre in prop::collection::vec(-4.0..4.0f64, 5),
        w in prop::collection::vec(0.0..1.0f64, 5),
        noise in prop::collection::vec(-1.0..1.0f64, 5),
        eps in 1e-3..0.5f64,
        delta in 1e-6..1e-2f64,
    ) {
        let n = set.dim();
        let curv = vector(n, &curv);
        let lip = curv.max();
        let f = diagonal_quadratic(curv, vector(n, &centre));
        let x_bar = point_in(&set, &w);
        let truth = f.gradient(&x_bar);
        let mut e = vector(n, &noise);
        if e.norm() > 0.0 {
            e *= eps / e.norm();
        }
        let g = ForecastGradient::external(&truth + e, eps, None).unwrap();
        let cfg = FixedStepGateConfig::with_default_step(eps, delta, lip).unwrap();
        let verdict = fixed_step_gate(&x_bar, &g, &cfg, &set).unwrap();
        prop_assert!(set.contains(verdict.candidate.as_vector(), 1e-12));
        if verdict.fired() {
            prop_assert!(f.value(&verdict.candidate) <= f.value(&x_bar) - delta + 1e-12);
        } else {
            prop_assert_eq!(verdict.candidate, x_bar);
        }
    }

    #[test]
    fn backtracking_accepts_only_armijo_steps(
        set in boxes(4),
        curv in prop::collection::vec(0.05..4.0f64, 4),
        centre in prop::collection::vec(-4.0..4.0f64, 4),
        w in prop::collection::vec(0.0..1.0f64, 4),
        shift in prop::collection::vec(-0.2..0.2f64, 4),
        eps in 1e-3..0.3f64,
        big_delta in 0.0..1e-3f64,
    ) {
        let n = set.dim();
        let f = diagonal_quadratic(vector(n, &curv), vector(n, &centre));
        let x_bar = point_in(&set, &w);
        let g = ForecastGradient::external(f.gradient(&x_bar) + vector(n, &shift), eps, None).unwrap();
        let cfg = BacktrackConfig::new(0.5, 0.9, 60, eps, big_delta).unwrap();
        let verdict = backtracking_search(&f, &x_bar, &g, &cfg, &set).unwrap();
        prop_assert!(set.contains(verdict.candidate.as_vector(), 1e-12));
        if verdict.fired() {
            prop_assert!(verdict.step > 0.0 && verdict.step <= 1.0);
            prop_assert!(online_armijo_holds(
                &f, &x_bar, g.estimate(), &verdict.direction, eps, verdict.step, 2.0 * big_delta
            ));
            // The accepted exponent is the smallest one.
            if verdict.step < 1.0 {
                let larger = verdict.step / 0.9;
                prop_assert!(!online_armijo_holds(
                    &f, &x_bar, g.estimate(), &verdict.direction, eps, larger, 2.0 * big_delta
                ));
            }
        } else {
            prop_assert_eq!(verdict.step, 0.0);
        }
    }

    #[test]
    fn omd_with_zero_hint_is_projected_ogd(
        set in boxes(5),
        w in prop::collection::vec(0.0..1.0f64, 5),
        g in prop::collection::vec(-5.0..5.0f64, 5),
        eta in 1e-3..1.0f64,
    ) {
        let start = point_in(&set, &w);
        let g = vector(set.dim(), &g);
        let state = OmdState::new(start.clone(), eta).unwrap();
        let (played, next) = omd_step(&state, &g, &Vector::zeros(set.dim()), &set).unwrap();
        let ogd = ogd_step(&start, &g, OgdParams::new(eta).unwrap(), &set).unwrap();
        prop_assert_eq!(&played, &ogd);
        prop_assert_eq!(next.secondary(), &ogd);
    }

    #[test]
    fn oracle_matches_active_set_on_random_box_qps(
        set in boxes(3),
        entries in prop::collection::vec(-1.0..1.0f64, 9),
        linear in prop::collection::vec(-5.0..5.0f64, 3),
        ridge in 0.05..2.0f64,
        w in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let n = set.dim();
        let m = DMatrix::from_fn(n, n, |i, j| entries[i * 3 + j]);
        let h = &m * m.transpose() + DMatrix::identity(n, n) * ridge;
        let b = vector(n, &linear);
        let (h1, b1) = (h.clone(), b.clone());
        let (h2, b2) = (h.clone(), b.clone());
        let f = LossRound::from_fns(0, n, move |x| 0.5 * x.dot(&(&h1 * x)) + b1.dot(x), move |x| &h2 * x + &b2);
        let start = point_in(&set, &w);
        let ours = round_optimum_from(&f, &set, &start, DEFAULT_ORACLE_TOL, DEFAULT_ORACLE_MAX_ITERS);
        let ours = ours.unwrap();
        let (_, value) = box_qp_active_set(&h, &b, &set);
        prop_assert!(ours.converged);
        prop_assert!((ours.value - value).abs() <= 1e-7 * value.abs().max(1.0));
    }

    #[test]
    fn counter_counts_moves_of_at_least_delta(moves in prop::collection::vec(0.0..2.0f64, 0..40), delta in 0.1..1.5f64) {
        let mut counter = PredictiveCounter::new(delta).unwrap();
        let origin = DecisionPoint::zeros(1);
        for m in &moves {
            counter = counter.update(&DecisionPoint::from_slice(&[*m]), &origin);
        }
        let expected = moves.iter().filter(|m| **m >= delta).count();
        prop_assert_eq!(counter.count(), expected);
        prop_assert_eq!(counter.rounds(), moves.len());
        if !moves.is_empty() {
            prop_assert!((counter.nu() - expected as f64 / moves.len() as f64).abs() < 1e-15);
        }
    }
}

fn advanced_fleet(seed: u64, kind: SignalKind, recovery: f64) -> Fleet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = Fleet::sample(&FleetParams::default(), &mut rng).unwrap();
    let mut fleet = Fleet::new(sampled.max_energy().clone(), sampled.capacity().clone(), 30.0, recovery).unwrap();
    let set = fleet.decision_set();
    for k in 0..7 {
        let w = [0.1 + 0.1 * k as f64, 0.9 - 0.1 * k as f64, 0.5];
        fleet.advance(&point_in(&set, &w), kind).unwrap();
    }
    fleet
}

#[test]
fn regulation_loss_is_strongly_convex_and_smooth() {
    let sigma = 0.005;
    let fleet = advanced_fleet(21, SignalKind::Regulation, 1.0);
    let set = fleet.decision_set();
    let f = regulation_loss(&fleet, 0.07, sigma).unwrap();
    let lip = regulation_lipschitz(set.dim(), sigma);
    assert_eq!(f.hints().lipschitz, Some(lip));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let x = sample_interior(&set, 0.0, &mut rng);
        let y = sample_interior(&set, 0.0, &mut rng);
        let diff = y.as_vector() - x.as_vector();
        let gap = f.value(&y) - f.value(&x) - f.gradient(&x).dot(&diff);
        let sq = diff.norm_squared();
        assert!(gap >= sigma * sq - 1e-12, "strong convexity: gap {gap} vs {}", sigma * sq);
        assert!(gap <= 0.5 * lip * sq + 1e-12, "smoothness: gap {gap} vs {}", 0.5 * lip * sq);
        let grad_gap = (f.gradient(&y) - f.gradient(&x)).norm();
        assert!(grad_gap <= lip * diff.norm() * (1.0 + 1e-12));
    }
}

#[test]
fn curtailment_loss_is_convex_and_continuous_across_the_kink() {
    let fleet = advanced_fleet(22, SignalKind::Curtailment, 1.001);
    let set = fleet.decision_set();
    let f = curtailment_loss(&fleet, 0.3, 5e-5).unwrap();
    assert_eq!(f.hints().lipschitz, None);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let x = sample_interior(&set, 0.0, &mut rng);
        let y = sample_interior(&set, 0.0, &mut rng);
        let gap = f.value(&y) - f.value(&x) - f.gradient(&x).dot(&(y.as_vector() - x.as_vector()));
        assert!(gap >= -1e-12);
    }
    // On the kink the shortfall is zero and only the storage term remains.
    let n = set.dim() as f64;
    let on_kink = DecisionPoint::new(Vector::from_element(set.dim(), 0.3 / n));
    let storage_only = (fleet.state() * 1.001 - fleet.capacity() * 0.5 + on_kink.as_vector()) * (2.0 * 5e-5);
    assert_relative_eq!((f.gradient(&on_kink) - storage_only).norm(), 0.0, epsilon = 1e-12);
}

#[test]
fn oracle_warm_start_and_cold_start_agree() {
    let fleet = advanced_fleet(23, SignalKind::Regulation, 1.0);
    let set = fleet.decision_set();
    let f = regulation_loss(&fleet, -0.12, 0.005).unwrap();
    let cold = round_optimum(&f, &set, DEFAULT_ORACLE_TOL, DEFAULT_ORACLE_MAX_ITERS).unwrap();
    let corner = set.project(&Vector::from_element(set.dim(), 1e3)).unwrap();
    let warm = round_optimum_from(&f, &set, &corner, DEFAULT_ORACLE_TOL, DEFAULT_ORACLE_MAX_ITERS).unwrap();
    assert!(cold.converged && warm.converged);
    assert_relative_eq!(cold.value, warm.value, epsilon = 1e-10);
    assert!(cold.minimizer.distance(&warm.minimizer) < 1e-6);
}

#[test]
fn oracle_rejects_bad_tolerance_and_dimensions() {
    let set = BoxSet::uniform(2, -1.0, 1.0).unwrap();
    let f = diagonal_quadratic(Vector::from_element(2, 1.0), Vector::zeros(2));
    assert!(round_optimum(&f, &set, 0.0, 10).is_err());
    assert!(round_optimum(&f, &BoxSet::uniform(3, -1.0, 1.0).unwrap(), 1e-9, 10).is_err());
}

#[test]
fn predictive_candidate_stays_in_the_box_at_the_boundary() {
    let set = BoxSet::uniform(3, 0.0, 1.0).unwrap();
    let x_bar = DecisionPoint::from_slice(&[0.0, 1.0, 0.5]);
    let g = ForecastGradient::external(Vector::from_vec(vec![3.0, -3.0, 0.0]), 0.1, None).unwrap();
    let (candidate, d) = predictive_candidate(&x_bar, &g, 0.5, &set).unwrap();
    assert_eq!(candidate, x_bar);
    assert_eq!(d.norm(), 0.0);
}
