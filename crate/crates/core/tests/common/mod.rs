#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use poco_core::set::{BoxSet, Vector};

/// Minimises `½ xᵀHx + bᵀx` over a box by enumerating every pattern of
/// lower/upper/free coordinates. Exponential in the dimension; meant for
/// N ≤ 3 with H positive definite.
pub fn box_qp_active_set(h: &DMatrix<f64>, b: &DVector<f64>, set: &BoxSet) -> (Vector, f64) {
    let n = b.len();
    let objective = |x: &Vector| 0.5 * x.dot(&(h * x)) + b.dot(x);
    let mut best: Option<(Vector, f64)> = None;
    for pattern in 0..3usize.pow(n as u32) {
        let mut code = pattern;
        let mut x = Vector::zeros(n);
        let mut free = Vec::new();
        for i in 0..n {
            match code % 3 {
                0 => x[i] = set.lower()[i],
                1 => x[i] = set.upper()[i],
                _ => free.push(i),
            }
            code /= 3;
        }
        if !free.is_empty() {
            let k = free.len();
            let hff = DMatrix::from_fn(k, k, |a, c| h[(free[a], free[c])]);
            let hx = h * &x;
            let rhs = DVector::from_fn(k, |a, _| -(b[free[a]] + hx[free[a]]));
            let Some(sol) = hff.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
        }
        let feasible = (0..n).all(|i| x[i] >= set.lower()[i] - 1e-12 && x[i] <= set.upper()[i] + 1e-12);
        if !feasible {
            continue;
        }
        let value = objective(&x);
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((x, value));
        }
    }
    best.expect("a strictly convex box QP has a vertex or face solution")
}

/// Quadratic data of `(r − 1ᵀx)² + σ‖x + o‖²` as `½xᵀHx + bᵀx + k`.
pub fn regulation_qp(n: usize, signal: f64, sigma: f64, offset: &Vector) -> (DMatrix<f64>, DVector<f64>, f64) {
    let h = DMatrix::from_element(n, n, 2.0) + DMatrix::identity(n, n) * (2.0 * sigma);
    let b = DVector::from_element(n, -2.0 * signal) + offset * (2.0 * sigma);
    let k = signal * signal + sigma * offset.norm_squared();
    (h, b, k)
}

/// Largest eigenvalue by power iteration using a matrix-vector product.
pub fn power_iteration<F: Fn(&Vector) -> Vector>(dim: usize, apply: F, iters: usize) -> f64 {
    let mut v = Vector::from_fn(dim, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    lambda
}
