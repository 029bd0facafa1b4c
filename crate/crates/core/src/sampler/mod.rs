//! Multi-chain NUTS with warmup adaptation, thinning and diagnostics.

pub mod adapt;
pub mod diagnostics;
pub mod draws;
pub mod nuts;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::indexed_rng;
use adapt::{DualAveraging, MetricAdaptation};
use nuts::{find_reasonable_step, transition, PhasePoint};

pub use diagnostics::{Diagnostics, ParamDiagnostics};
pub use draws::PosteriorDraws;

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Returns the log density at `theta` and writes its gradient.
    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        Model::log_density_grad(self, theta, grad)
    }
}

/// Wraps a closure `f(theta, grad) -> logp`.
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnDensity { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(theta, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    /// When false, the step size and unit metric are held fixed.
    pub adapt: bool,
    /// Starting step size; found by a doubling heuristic when absent.
    pub initial_step_size: Option<f64>,
    /// SD of the Normal jitter around zero used for initial positions.
    pub init_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            warmup: 1000,
            samples: 1000,
            thin: 1,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            adapt: true,
            initial_step_size: None,
            init_scale: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 || self.samples == 0 || self.thin == 0 || self.max_tree_depth == 0 {
            return Err(Error::validation("chains, samples, thin and max_tree_depth must be at least 1"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::validation("target_accept must lie in (0, 1)"));
        }
        if let Some(e) = self.initial_step_size {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::validation("initial step size must be positive"));
            }
        }
        Ok(())
    }

    pub fn kept_per_chain(&self) -> usize {
        self.samples / self.thin
    }
}

/// Output of one chain, on the unconstrained scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    /// Kept positions, one row per retained iteration.
    pub draws: Vec<Vec<f64>>,
    pub divergent: Vec<bool>,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<usize>,
    pub n_leapfrog: Vec<usize>,
    pub energy: Vec<f64>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Divergent transitions over every post-warmup iteration, kept or not.
    pub divergences: usize,
    pub warmup_divergences: usize,
}

/// Runs `config.n_chains` independent chains in parallel. Chain `c` draws all
/// of its randomness from stream `(seed, c)`.
pub fn sample<D: LogDensity + ?Sized>(density: &D, config: &SamplerConfig) -> Result<Vec<ChainOutput>> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(density, config, c))
        .collect()
}

fn initial_point<D: LogDensity + ?Sized, R: Rng>(density: &D, scale: f64, rng: &mut R) -> Result<PhasePoint> {
    for _ in 0..100 {
        let q: Vec<f64> = (0..density.dim())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let z = PhasePoint::new(density, q);
        if z.is_finite() {
            return Ok(z);
        }
    }
    Err(Error::Initialization(
        "log density or gradient not finite at 100 random starting points".into(),
    ))
}

pub fn run_chain<D: LogDensity + ?Sized>(density: &D, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = indexed_rng(config.seed, chain as u64);
    let dim = density.dim();
    let mut z = initial_point(density, config.init_scale, &mut rng)?;
    let mut inv_metric = vec![1.0; dim];
    let mut eps = match config.initial_step_size {
        Some(e) => e,
        None => find_reasonable_step(density, &z, &inv_metric, 1.0, &mut rng),
    };

    let mut step_adapt = DualAveraging::new(config.target_accept, eps);
    let mut metric_adapt = MetricAdaptation::new(dim, config.warmup);
    let mut warmup_divergences = 0;
    for _ in 0..config.warmup {
        let info = transition(density, &mut z, &inv_metric, eps, config.max_tree_depth, &mut rng);
        warmup_divergences += usize::from(info.divergent);
        if config.adapt {
            eps = step_adapt.update(info.accept_stat);
            if metric_adapt.observe(&z.q, &mut inv_metric) {
                eps = find_reasonable_step(density, &z, &inv_metric, eps, &mut rng);
                step_adapt.restart(eps);
            }
        }
    }
    if config.adapt && config.warmup > 0 {
        eps = step_adapt.final_step();
    }

    let kept = config.kept_per_chain();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(kept),
        divergent: Vec::with_capacity(kept),
        accept_stat: Vec::with_capacity(kept),
        tree_depth: Vec::with_capacity(kept),
        n_leapfrog: Vec::with_capacity(kept),
        energy: Vec::with_capacity(kept),
        step_size: eps,
        inv_metric: Vec::new(),
        divergences: 0,
        warmup_divergences,
    };
    for it in 0..config.samples {
        let info = transition(density, &mut z, &inv_metric, eps, config.max_tree_depth, &mut rng);
        out.divergences += usize::from(info.divergent);
        if (it + 1) % config.thin == 0 {
            out.draws.push(z.q.clone());
            out.divergent.push(info.divergent);
            out.accept_stat.push(info.accept_stat);
            out.tree_depth.push(info.depth);
            out.n_leapfrog.push(info.n_leapfrog);
            out.energy.push(info.energy);
        }
    }
    out.inv_metric = inv_metric;
    Ok(out)
}

/// Per-parameter chains `[chain][iteration]` of coordinate `k`.
pub fn coordinate(chains: &[ChainOutput], k: usize) -> Vec<Vec<f64>> {
    chains.iter().map(|c| c.draws.iter().map(|d| d[k]).collect()).collect()
}
