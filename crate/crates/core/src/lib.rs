//! Probabilistic forecasting with stochastic interpolants.
//!
//! Given pairs `(x0, x1)` from a conditional law, a drift `b_s(x, x0)` is fit by
//! square-loss regression against an interpolant between a point mass at `x0`
//! and the target. Forecasts integrate the SDE
//! `dX = b^g_s(X, x0) ds + g_s dW` from `X_0 = x0` with a tunable diffusion
//! `g`, including the KL-optimal Föllmer choice.

pub mod analytic_gmm;
pub mod drift_model;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod exec;
pub mod field;
pub mod interpolant;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod schedules;

pub use error::{Error, Result};
pub use analytic_gmm::{AnalyticGmmDrift, GmmSpec};
pub use drift_model::{NeuralDrift, TrainConfig};
pub use dynamics::TransitionDataset;
pub use field::DriftField;
pub use interpolant::SamplePair;
pub use sampler::{ForecastEnsemble, SamplerConfig};
pub use schedules::{DiffusionKind, DiffusionSchedule, Schedule, ScheduleKind};
