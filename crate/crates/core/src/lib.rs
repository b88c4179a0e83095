//! Predictive online convex optimization.
//!
//! Online gradient steppers over box constraints, augmented with a gated
//! predictive step that uses an ε-accurate forecast of the next gradient, plus
//! a demand-response experiment harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand_response;
pub mod error;
pub mod experiment;
pub mod forecaster;
pub mod loss;
pub mod oco;
pub mod predictive;
pub mod regret;
pub mod set;

pub use error::{Error, Result};
pub use forecaster::{descent_check, ForecastGradient, Forecaster, NoiseMode, NoiseSpec};
pub use loss::{BoundHints, Loss, LossRound};
pub use oco::{ogd_step, sigma_ogd_step, OgdParams, OmdState, SigmaOgdParams, Stepper};
pub use predictive::{
    backtracking_search, fixed_step_gate, pocob_update, BacktrackConfig, FixedStepGateConfig, GateReason,
    GateVerdict, PredictiveCounter,
};
pub use regret::{round_optimum, RegretLedger, RoundOptimum};
pub use set::{BoxSet, ConvexSet, DecisionPoint, Vector};
