//! Bayesian tests of equality and order hypotheses on correlations in
//! generalized multivariate probit models.
//!
//! Continuous and ordinal outcomes share one latent multivariate normal
//! model per population. Hypotheses are linear equality and inequality
//! constraints on the stacked correlations; they are compared through Bayes
//! factors against the unconstrained model under a uniform prior on each
//! correlation matrix.

// NaN must fail the range checks, so negated comparisons are deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes_factor;
pub mod error;
pub mod gaussian;
pub mod hypothesis;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod model;
pub mod prior;
pub mod sim;
pub mod truncnorm;

pub use error::{Error, Result};
