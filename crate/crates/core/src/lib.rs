//! Marginal distributionally robust optimization for latent covariate
//! mixtures.
//!
//! Models are trained to minimize the worst-case conditional risk over every
//! subpopulation of proportion at least `α₀`, through an `L^p`/Hölder dual
//! with an explicit transport plan. Joint-DRO and ERM baselines, the
//! RKHS/bounded-Hölder variants, simulation generators and worst-case risk
//! evaluators live alongside.
//!
//! All numerical code is generic over [`Scalar`] (`f32`/`f64`); the `*64`
//! and `*32` aliases below fix the precision.

// `!(x >= 0)` is how parameter checks reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod marginal;
pub mod model;
pub mod optimizer;
pub mod risk_duals;
pub mod scalar;
pub mod variational;

pub use error::{DroError, Result};
pub use model::{loss_subgradient, loss_value, Dataset, LossKind, ParamVector};
pub use risk_duals::{cvar_dual, pnorm_dual, replicate_worst_case, RobustSpec};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type ParamVector64 = ParamVector<f64>;
pub type ParamVector32 = ParamVector<f32>;
pub type RobustSpec64 = RobustSpec<f64>;
pub type RobustSpec32 = RobustSpec<f32>;
pub type DualState64 = marginal::DualState<f64>;
pub type DualState32 = marginal::DualState<f32>;
pub type TransportPlan64 = marginal::TransportPlan<f64>;
pub type TransportPlan32 = marginal::TransportPlan<f32>;
pub type RiskReport64 = evaluation::RiskReport<f64>;
pub type RiskReport32 = evaluation::RiskReport<f32>;
pub type OptimizerConfig64 = optimizer::OptimizerConfig<f64>;
pub type OptimizerConfig32 = optimizer::OptimizerConfig<f32>;
