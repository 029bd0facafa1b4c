//! Graphical perception studies end to end: stimulus designs, response
//! records and exclusions, the classical bootstrap-of-midmeans analysis, and
//! a Bayesian zero-inflated Beta mixed-effects model with its own NUTS
//! sampler and posterior summaries.

pub mod classical;
pub mod domain;
pub mod error;
pub mod fit;
pub mod model;
pub mod posterior;
pub mod records;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod stimulus;

pub use error::{Error, Result};
