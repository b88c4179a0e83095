//! Compact convex decision sets and Euclidean projection.

use std::ops::Deref;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

pub type Vector = DVector<f64>;

/// A decision `x_t` (or a tentative one such as the stepper output).
///
/// Produced by [`ConvexSet::project`] it is feasible; constructed directly it
/// is just a coordinate vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DecisionPoint(Vector);

impl DecisionPoint {
    pub fn new(coords: Vector) -> Self {
        Self(coords)
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self(Vector::from_column_slice(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Vector::zeros(dim))
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn into_vector(self) -> Vector {
        self.0
    }

    pub fn distance(&self, other: &DecisionPoint) -> f64 {
        (&self.0 - &other.0).norm()
    }
}

impl Deref for DecisionPoint {
    type Target = Vector;

    fn deref(&self) -> &Vector {
        &self.0
    }
}

impl From<Vector> for DecisionPoint {
    fn from(v: Vector) -> Self {
        Self(v)
    }
}

/// Projection contract for compact convex sets.
pub trait ConvexSet {
    fn dim(&self) -> usize;

    /// Euclidean projection. Errors only on a dimension mismatch.
    fn project(&self, point: &Vector) -> Result<DecisionPoint>;

    fn contains(&self, point: &Vector, tol: f64) -> bool;

    /// `sup { ‖x − y‖ : x, y in the set }`.
    fn diameter(&self) -> f64;

    /// `sup { ‖x‖ : x in the set }`.
    fn norm_bound(&self) -> f64;
}

/// Axis-aligned box `{ x : lower ≤ x ≤ upper }`.
///
/// Degenerate coordinates (`lower[i] == upper[i]`) are allowed and pinned by
/// projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vector,
    upper: Vector,
}

impl BoxSet {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(invalid("lower", "box must have at least one coordinate"));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(invalid("lower/upper", format!("coordinate {i} has a non-finite bound")));
            }
            if lo > hi {
                return Err(invalid(
                    "lower/upper",
                    format!("coordinate {i}: lower {lo} exceeds upper {hi}"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_slices(lower: &[f64], upper: &[f64]) -> Result<Self> {
        Self::new(Vector::from_column_slice(lower), Vector::from_column_slice(upper))
    }

    /// `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vector::from_element(dim, lo), Vector::from_element(dim, hi))
    }

    /// `[-bound, bound]` per coordinate.
    pub fn symmetric(bound: Vector) -> Result<Self> {
        Self::new(-&bound, bound)
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    /// Checks feasibility and reports the first violated coordinate.
    pub fn check_feasible(&self, point: &Vector, tol: f64) -> Result<()> {
        check_dim(self.dim(), point.len())?;
        for i in 0..point.len() {
            let v = point[i];
            if !(v >= self.lower[i] - tol && v <= self.upper[i] + tol) {
                return Err(Error::Infeasible {
                    index: i,
                    value: v,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    pub fn center(&self) -> DecisionPoint {
        DecisionPoint((&self.lower + &self.upper) * 0.5)
    }
}

impl ConvexSet for BoxSet {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, point: &Vector) -> Result<DecisionPoint> {
        check_dim(self.dim(), point.len())?;
        let clamped = Vector::from_fn(point.len(), |i, _| {
            point[i].max(self.lower[i]).min(self.upper[i])
        });
        Ok(DecisionPoint(clamped))
    }

    fn contains(&self, point: &Vector, tol: f64) -> bool {
        self.check_feasible(point, tol).is_ok()
    }

    fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    fn norm_bound(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn project(set: &BoxSet, point: &Vector) -> Result<DecisionPoint> {
    set.project(point)
}

pub fn diameter(set: &BoxSet) -> f64 {
    set.diameter()
}
