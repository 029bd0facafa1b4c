//! The zero-inflated Beta mixed-effects location-scale model.
//!
//! Each absolute error is zero with probability `pi` and otherwise
//! Beta-distributed with mean `mu` and precision `phi`. All three have their
//! own per-chart coefficient and a per-participant offset, and the stacked
//! offsets of a participant share one covariance matrix
//! `Sigma = diag(sigma) C diag(sigma)`. Offsets are sampled non-centered as
//! `U = diag(sigma) L z` with `C = L L^T`.

pub mod config;
pub mod data;
pub mod density;
pub mod joint;
pub mod params;
pub mod simulate;

pub use config::{Likelihood, ModelConfig, NormalPrior, PriorSpec, RandomEffects, StudentTPrior, Submodel};
pub use data::{cell_means, StudyData};
pub use density::{inv_logit, logit, zib_logpdf};
pub use joint::{
    grad_log_posterior, link_params, link_with_offsets, log_jacobian, log_likelihood, log_posterior, log_prior,
    prior_terms, LinkedParams, Model, Observation, PriorTerms,
};
pub use params::{flatten, param_names, unflatten, ParamLayout, ParamVector};
pub use simulate::{default_population, simulate_dataset, simulate_responses, PopulationParams};
