//! Convergence diagnostics on split, rank-normalized chains: R-hat, bulk and
//! tail effective sample size, and Monte Carlo standard errors.
//!
//! Every estimator returns `None` when it is undefined (constant or
//! non-finite draws) instead of NaN.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::stats::{quantile, sort_floats};

fn check(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::validation("diagnostics need at least two chains"));
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::validation("diagnostics need equal-length chains of at least 4 draws"));
    }
    Ok(())
}

fn defined(chains: &[Vec<f64>]) -> bool {
    let all_finite = chains.iter().flatten().all(|x| x.is_finite());
    let first = chains[0][0];
    all_finite && chains.iter().flatten().any(|&x| x != first)
}

/// Halves every chain; with an odd length the middle draw is dropped.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Pooled ranks (average for ties) mapped through the inverse normal CDF at
/// `(r - 3/8) / (S + 1/4)`.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // 1-based average rank of the tie block.
        let rank = (start + 1 + end) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (total as f64 + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Classic potential scale reduction on the given (already split) chains.
fn rhat_basic(chains: &[Vec<f64>]) -> Option<f64> {
    if !defined(chains) {
        return None;
    }
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n * var(&means);
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let var_hat = (n - 1.0) / n * w + b / n;
    let r = (var_hat / w).sqrt();
    r.is_finite().then_some(r)
}

/// Rank-normalized split R-hat: the larger of the bulk and folded versions.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    check(chains)?;
    if !defined(chains) {
        return Ok(None);
    }
    let bulk = rhat_basic(&rank_normalize(&split_chains(chains)));
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let med = quantile(&all, 0.5);
    let folded: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|x| (x - med).abs()).collect()).collect();
    let tail = rhat_basic(&rank_normalize(&split_chains(&folded)));
    Ok(match (bulk, tail) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    })
}

/// Autocovariance of `xs` at `lag` with divisor `n`.
fn autocov(xs: &[f64], m: f64, lag: usize) -> f64 {
    let n = xs.len();
    xs[..n - lag].iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// truncation. Autocovariances are evaluated lazily, lag by lag, until the
/// truncation point.
pub fn ess_raw(chains: &[Vec<f64>]) -> Option<f64> {
    if !defined(chains) || chains.iter().any(|c| c.len() < 4) {
        return None;
    }
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64;
    let chain_var: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0) * n as f64 / (n - 1) as f64).collect();
    let mean_var = mean(&chain_var);
    let mut var_plus = mean_var * (n - 1) as f64 / n as f64;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) {
        return None;
    }
    let rho_at = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho = vec![0.0; n + 1];
    let mut t = 0;
    let mut even = 1.0;
    rho[0] = even;
    let mut odd = rho_at(1);
    rho[1] = odd;
    while t + 5 < n && !(even + odd).is_nan() && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    // Initial monotone sequence.
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            let v = (rho[t - 2] + rho[t - 1]) / 2.0;
            rho[t] = v;
            rho[t + 1] = v;
        }
    }
    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t];
    tau = tau.max(1.0 / total.log10());
    let ess = total / tau;
    ess.is_finite().then_some(ess)
}

/// Bulk ESS: split, rank-normalized draws.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    check(chains)?;
    Ok(ess_raw(&rank_normalize(&split_chains(chains))))
}

/// Tail ESS: the smaller ESS of the 5% and 95% quantile indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    check(chains)?;
    let mut all: Vec<f64> = chains.iter().flatten().copied().collect();
    sort_floats(&mut all);
    let mut out: Option<f64> = None;
    for prob in [0.05, 0.95] {
        let q = crate::stats::quantile_sorted(&all, prob);
        let ind: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|&x| if x <= q { 1.0 } else { 0.0 }).collect())
            .collect();
        let Some(e) = ess_raw(&split_chains(&ind)) else {
            return Ok(None);
        };
        out = Some(out.map_or(e, |o: f64| o.min(e)));
    }
    Ok(out)
}

/// ESS of the raw (not rank-normalized) split draws, for the mean.
pub fn ess_mean(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    check(chains)?;
    Ok(ess_raw(&split_chains(chains)))
}

/// Monte Carlo standard error of the posterior mean.
pub fn mcse_mean(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let Some(ess) = ess_mean(chains)? else {
        return Ok(None);
    };
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    Ok(Some((var(&all) / ess).sqrt()))
}

/// Per-parameter summary written to the diagnostics sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
    pub ess_tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub params: BTreeMap<String, ParamDiagnostics>,
    pub divergences_per_chain: Vec<usize>,
    pub divergence_rate: f64,
    pub warnings: Vec<String>,
}

/// Divergence rate above which a warning is attached.
pub const DIVERGENCE_WARNING_RATE: f64 = 0.2;

impl Diagnostics {
    /// Largest defined R-hat across parameters.
    pub fn max_rhat(&self) -> Option<f64> {
        self.params.values().filter_map(|d| d.rhat).reduce(f64::max)
    }

    pub fn min_ess_bulk(&self) -> Option<f64> {
        self.params.values().filter_map(|d| d.ess_bulk).reduce(f64::min)
    }

    /// `{parameter: {rhat, ess_bulk, ess_tail}}`.
    pub fn params_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.params)?)
    }
}
