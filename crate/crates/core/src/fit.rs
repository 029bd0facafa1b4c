//! Fitting the model to observations: build the density, run the sampler and
//! map every kept position back to named natural-scale values.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{cell_means, param_names, flatten, Likelihood, Model, ModelConfig, Observation, ParamVector};
use crate::sampler::{sample, Diagnostics, PosteriorDraws, SamplerConfig};

/// Sampler bookkeeping kept next to the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub step_size: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub max_tree_depth_hits: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub chains: Vec<ChainSummary>,
}

/// Fits `config` to trial-level observations. The Normal baseline is fitted
/// to per-(participant, chart) means, which are formed here.
pub fn fit(config: &ModelConfig, observations: &[Observation], sampler: &SamplerConfig) -> Result<FitOutput> {
    let model = match config.likelihood {
        Likelihood::ZeroInflatedBeta => Model::new(config.clone(), observations)?,
        Likelihood::NormalMeanOnly => Model::new(config.clone(), &cell_means(observations))?,
    };
    let chains = sample(&model, sampler)?;
    let draws = PosteriorDraws::from_chains(param_names(config), &chains, |q| {
        flatten(&ParamVector::from_unconstrained(config, q), config)
    })?;
    let diagnostics = draws.diagnostics()?;
    let chains = chains
        .iter()
        .map(|c| {
            let n = c.accept_stat.len().max(1) as f64;
            ChainSummary {
                step_size: c.step_size,
                divergences: c.divergences,
                warmup_divergences: c.warmup_divergences,
                mean_accept_stat: c.accept_stat.iter().sum::<f64>() / n,
                mean_tree_depth: c.tree_depth.iter().sum::<usize>() as f64 / n,
                max_tree_depth_hits: c.tree_depth.iter().filter(|&&d| d >= sampler.max_tree_depth).count(),
            }
        })
        .collect();
    Ok(FitOutput { draws, diagnostics, chains })
}
