//! Spring-mass running models, their apex return maps, and viable and robust
//! sets of angle-of-attack control over those maps.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod artifact;
pub mod dynamics;
pub mod error;
pub mod optimizer;
pub mod poincare;
pub mod scalar;
pub mod viability;

pub use error::{DynamicsError, Error, Result};
pub use scalar::Scalar;

pub type ModelParams64 = dynamics::ModelParams<f64>;
pub type ModelParams32 = dynamics::ModelParams<f32>;
pub type IntegratorConfig64 = dynamics::IntegratorConfig<f64>;
pub type IntegratorConfig32 = dynamics::IntegratorConfig<f32>;
pub type GridSpec64 = poincare::GridSpec<f64>;
pub type GridSpec32 = poincare::GridSpec<f32>;
pub type TransitionGrid64 = poincare::TransitionGrid<f64>;
pub type TransitionGrid32 = poincare::TransitionGrid<f32>;
pub type SetMask64 = viability::SetMask<f64>;
pub type SetMask32 = viability::SetMask<f32>;
pub type StateMask64 = viability::StateMask<f64>;
pub type StateMask32 = viability::StateMask<f32>;
