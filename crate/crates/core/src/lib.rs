//! Causal-effect estimation for multivariate exposures when residents of one
//! region are exposed to pollution in the regions they travel to.
//!
//! The crate is organised along the analysis pipeline:
//!
//! - [`mobility`]: home-time fractions `tau`, travel shares `alpha` and the
//!   mobility-weighted neighbourhood exposure `G = alpha * W`.
//! - [`basis`]: orthogonal polynomial expansions that can be re-evaluated at
//!   counterfactual exposure levels.
//! - [`model`]: Gibbs sampler for the additive outcome model with a
//!   horseshoe prior on the home/neighbourhood coefficient gap.
//! - [`estimands`]: posterior draws of mean potential outcomes, marginal
//!   curves and intervention effects with direct/spillover decomposition.
//! - [`bias`]: closed-form bias expressions for ignoring or misspecifying
//!   mobility, each paired with a Monte-Carlo OLS oracle.
//! - [`simulate`] and [`experiments`]: the synthetic data generator and the
//!   replicate harness comparing estimators by MSE and interval coverage.

pub mod basis;
pub mod bias;
pub mod error;
pub mod estimands;
pub mod experiments;
pub mod laws;
pub mod mobility;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
