//! Parameter layout and the map between the unconstrained vector the sampler
//! moves in and the natural-scale [`ParamVector`].
//!
//! Unconstrained layout for the zero-inflated Beta likelihood, with `V` charts,
//! `K` stacked offset coordinates and `P` participants:
//!
//! | block          | length       | transform                              |
//! |----------------|--------------|----------------------------------------|
//! | `beta_mu`      | V            | identity (log-odds)                    |
//! | `beta_phi`     | V            | identity (log scale)                   |
//! | `beta_pi`      | V            | identity (log-odds)                    |
//! | `log_sd`       | K            | `sd = exp(x)`                          |
//! | `chol_free`    | K(K-1)/2     | canonical partial correlations `tanh(x)` |
//! | `z`            | K * P        | identity, participant-major            |
//!
//! The Normal baseline uses `[beta (V), log_resid_sd (1)]`.

use serde::{Deserialize, Serialize};

use super::config::{Likelihood, ModelConfig, Submodel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_vis: usize,
    pub n_offsets: usize,
    pub n_participants: usize,
    pub likelihood: Likelihood,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        ParamLayout {
            n_vis: config.n_vis,
            n_offsets: config.n_offsets(),
            n_participants: config.n_participants,
            likelihood: config.likelihood,
        }
    }

    pub fn n_chol(&self) -> usize {
        self.n_offsets * self.n_offsets.saturating_sub(1) / 2
    }

    pub fn beta_mu(&self) -> usize {
        0
    }
    pub fn beta_phi(&self) -> usize {
        self.n_vis
    }
    pub fn beta_pi(&self) -> usize {
        2 * self.n_vis
    }
    pub fn log_sd(&self) -> usize {
        3 * self.n_vis
    }
    pub fn chol(&self) -> usize {
        self.log_sd() + self.n_offsets
    }
    pub fn z(&self) -> usize {
        self.chol() + self.n_chol()
    }

    pub fn dim(&self) -> usize {
        match self.likelihood {
            Likelihood::NormalMeanOnly => self.n_vis + 1,
            Likelihood::ZeroInflatedBeta => self.z() + self.n_offsets * self.n_participants,
        }
    }
}

/// Natural-scale parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta_mu: Vec<f64>,
    pub beta_phi: Vec<f64>,
    pub beta_pi: Vec<f64>,
    /// Random-offset SDs, one per stacked offset coordinate.
    pub sigma: Vec<f64>,
    /// Row-major K x K lower-triangular Cholesky factor of the offset
    /// correlation matrix.
    pub corr_chol: Vec<f64>,
    /// Standardized offsets, `z[p * K + k]`.
    pub z: Vec<f64>,
    /// Residual SD of the Normal baseline; `None` for the zero-inflated Beta.
    pub resid_sd: Option<f64>,
}

impl ParamVector {
    pub fn n_offsets(&self) -> usize {
        self.sigma.len()
    }

    /// Average-participant parameters: all offsets zero, identity correlation.
    pub fn zeros(config: &ModelConfig) -> Self {
        let v = config.n_vis;
        let k = config.n_offsets();
        ParamVector {
            beta_mu: vec![0.0; v],
            beta_phi: vec![0.0; v],
            beta_pi: vec![0.0; v],
            sigma: vec![1.0; k],
            corr_chol: identity(k),
            z: vec![0.0; k * config.n_participants],
            resid_sd: (config.likelihood == Likelihood::NormalMeanOnly).then_some(1.0),
        }
    }

    pub fn chol(&self, row: usize, col: usize) -> f64 {
        self.corr_chol[row * self.n_offsets() + col]
    }

    /// Correlation matrix `C = L L^T`, row-major.
    pub fn correlation(&self) -> Vec<f64> {
        let k = self.n_offsets();
        let mut c = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|m| self.chol(i, m) * self.chol(j, m)).sum();
                c[i * k + j] = v;
                c[j * k + i] = v;
            }
        }
        c
    }

    /// Participant offsets `U[:, p] = diag(sigma) L z[:, p]`.
    pub fn offsets(&self, participant: usize) -> Vec<f64> {
        let k = self.n_offsets();
        let z = &self.z[participant * k..(participant + 1) * k];
        offsets_from(&self.sigma, &self.corr_chol, z)
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let v = config.n_vis;
        let k = config.n_offsets();
        let lens_ok = self.beta_mu.len() == v
            && (config.likelihood == Likelihood::NormalMeanOnly
                || (self.beta_phi.len() == v && self.beta_pi.len() == v))
            && self.sigma.len() == k
            && self.corr_chol.len() == k * k
            && self.z.len() == k * config.n_participants;
        if !lens_ok {
            return Err(Error::validation("parameter vector does not match the model shape"));
        }
        if self.sigma.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::validation("random-offset SDs must be non-negative"));
        }
        for i in 0..k {
            let norm: f64 = (0..=i).map(|j| self.chol(i, j).powi(2)).sum();
            if (norm - 1.0).abs() > 1e-8 || self.chol(i, i) <= 0.0 {
                return Err(Error::validation(format!("Cholesky row {i} is not a unit row with positive diagonal")));
            }
            if (i + 1..k).any(|j| self.chol(i, j) != 0.0) {
                return Err(Error::validation("Cholesky factor is not lower triangular"));
            }
        }
        Ok(())
    }
}

pub fn identity(k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = 1.0;
    }
    m
}

pub fn offsets_from(sigma: &[f64], chol: &[f64], z: &[f64]) -> Vec<f64> {
    let k = sigma.len();
    (0..k)
        .map(|i| sigma[i] * (0..=i).map(|j| chol[i * k + j] * z[j]).sum::<f64>())
        .collect()
}

/// Builds a unit-row Cholesky factor from unconstrained coordinates, row by
/// row. Returns the factor and the log-Jacobian of `free -> L`.
pub fn chol_from_free(k: usize, free: &[f64]) -> (Vec<f64>, f64) {
    let mut l = vec![0.0; k * k];
    let mut log_jac = 0.0;
    let mut idx = 0;
    if k > 0 {
        l[0] = 1.0;
    }
    for i in 1..k {
        let mut sum_sq: f64 = 0.0;
        for j in 0..i {
            let y = free[idx];
            idx += 1;
            let t = y.tanh();
            log_jac += log1m_tanh_sq(y);
            if j > 0 {
                log_jac += 0.5 * (1.0 - sum_sq).ln();
            }
            let v = t * (1.0 - sum_sq).sqrt();
            l[i * k + j] = v;
            sum_sq += v * v;
        }
        l[i * k + i] = (1.0 - sum_sq).max(0.0).sqrt();
    }
    (l, log_jac)
}

/// Inverse of [`chol_from_free`].
pub fn chol_to_free(k: usize, l: &[f64]) -> Vec<f64> {
    let mut free = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 1..k {
        let mut sum_sq: f64 = 0.0;
        for j in 0..i {
            let v = l[i * k + j];
            let t = v / (1.0 - sum_sq).sqrt();
            free.push(t.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh());
            sum_sq += v * v;
        }
    }
    free
}

/// `log(1 - tanh(y)^2)`, stable for large `|y|`.
pub fn log1m_tanh_sq(y: f64) -> f64 {
    let a = y.abs();
    2.0 * (std::f64::consts::LN_2 - a - (-2.0 * a).exp().ln_1p())
}

impl ParamVector {
    pub fn from_unconstrained(config: &ModelConfig, theta: &[f64]) -> Self {
        let lay = ParamLayout::new(config);
        let v = lay.n_vis;
        match lay.likelihood {
            Likelihood::NormalMeanOnly => ParamVector {
                beta_mu: theta[..v].to_vec(),
                beta_phi: Vec::new(),
                beta_pi: Vec::new(),
                sigma: Vec::new(),
                corr_chol: Vec::new(),
                z: Vec::new(),
                resid_sd: Some(theta[v].exp()),
            },
            Likelihood::ZeroInflatedBeta => {
                let k = lay.n_offsets;
                let (corr_chol, _) = chol_from_free(k, &theta[lay.chol()..lay.z()]);
                ParamVector {
                    beta_mu: theta[lay.beta_mu()..lay.beta_phi()].to_vec(),
                    beta_phi: theta[lay.beta_phi()..lay.beta_pi()].to_vec(),
                    beta_pi: theta[lay.beta_pi()..lay.log_sd()].to_vec(),
                    sigma: theta[lay.log_sd()..lay.chol()].iter().map(|x| x.exp()).collect(),
                    corr_chol,
                    z: theta[lay.z()..].to_vec(),
                    resid_sd: None,
                }
            }
        }
    }

    pub fn to_unconstrained(&self, config: &ModelConfig) -> Vec<f64> {
        let lay = ParamLayout::new(config);
        let mut theta = Vec::with_capacity(lay.dim());
        match lay.likelihood {
            Likelihood::NormalMeanOnly => {
                theta.extend_from_slice(&self.beta_mu);
                theta.push(self.resid_sd.unwrap_or(1.0).ln());
            }
            Likelihood::ZeroInflatedBeta => {
                theta.extend_from_slice(&self.beta_mu);
                theta.extend_from_slice(&self.beta_phi);
                theta.extend_from_slice(&self.beta_pi);
                theta.extend(self.sigma.iter().map(|s| s.ln()));
                theta.extend(chol_to_free(lay.n_offsets, &self.corr_chol));
                theta.extend_from_slice(&self.z);
            }
        }
        theta
    }
}

/// Canonical parameter names, in the order of [`flatten`].
///
/// `b_mu[vis]`, `b_phi[vis]`, `b_pi[vis]`, `sd[submodel,vis]`, `L[row,col]`
/// (1-based, lower triangle without `L[1,1]`), `z[submodel,vis,participant]`
/// (1-based participant index). The Normal baseline uses `b[vis]` and `sigma`.
pub fn param_names(config: &ModelConfig) -> Vec<String> {
    let labels = &config.vis_labels;
    let mut names = Vec::new();
    if config.likelihood == Likelihood::NormalMeanOnly {
        names.extend(labels.iter().map(|l| format!("b[{l}]")));
        names.push("sigma".into());
        return names;
    }
    for prefix in ["b_mu", "b_phi", "b_pi"] {
        names.extend(labels.iter().map(|l| format!("{prefix}[{l}]")));
    }
    let offset_labels = offset_labels(config);
    names.extend(offset_labels.iter().map(|l| format!("sd[{l}]")));
    let k = offset_labels.len();
    for i in 0..k {
        for j in 0..=i {
            if i > 0 {
                names.push(format!("L[{},{}]", i + 1, j + 1));
            }
        }
    }
    for p in 0..config.n_participants {
        names.extend(offset_labels.iter().map(|l| format!("z[{l},{}]", p + 1)));
    }
    names
}

/// `submodel,vis` label of each stacked offset coordinate.
pub fn offset_labels(config: &ModelConfig) -> Vec<String> {
    config
        .random_effects
        .blocks()
        .into_iter()
        .flat_map(|s| config.vis_labels.iter().map(move |l| format!("{},{l}", s.label())))
        .collect()
}

/// Position of `(submodel, vis)` within the stacked offsets, if that block is
/// enabled.
pub fn offset_index(config: &ModelConfig, submodel: Submodel, vis: usize) -> Option<usize> {
    let block = config.random_effects.blocks().iter().position(|&s| s == submodel)?;
    Some(block * config.n_vis + vis)
}

/// Natural-scale values in [`param_names`] order.
pub fn flatten(params: &ParamVector, config: &ModelConfig) -> Vec<f64> {
    let mut out = Vec::new();
    if config.likelihood == Likelihood::NormalMeanOnly {
        out.extend_from_slice(&params.beta_mu);
        out.push(params.resid_sd.unwrap_or(f64::NAN));
        return out;
    }
    out.extend_from_slice(&params.beta_mu);
    out.extend_from_slice(&params.beta_phi);
    out.extend_from_slice(&params.beta_pi);
    out.extend_from_slice(&params.sigma);
    let k = params.n_offsets();
    for i in 1..k {
        for j in 0..=i {
            out.push(params.chol(i, j));
        }
    }
    out.extend_from_slice(&params.z);
    out
}

/// Inverse of [`flatten`].
pub fn unflatten(values: &[f64], config: &ModelConfig) -> Result<ParamVector> {
    let expected = param_names(config).len();
    if values.len() != expected {
        return Err(Error::validation(format!(
            "expected {expected} parameter values, found {}",
            values.len()
        )));
    }
    let v = config.n_vis;
    if config.likelihood == Likelihood::NormalMeanOnly {
        return Ok(ParamVector {
            beta_mu: values[..v].to_vec(),
            beta_phi: Vec::new(),
            beta_pi: Vec::new(),
            sigma: Vec::new(),
            corr_chol: Vec::new(),
            z: Vec::new(),
            resid_sd: Some(values[v]),
        });
    }
    let k = config.n_offsets();
    let mut it = values.iter().copied();
    let mut take = |n: usize| -> Vec<f64> { it.by_ref().take(n).collect() };
    let beta_mu = take(v);
    let beta_phi = take(v);
    let beta_pi = take(v);
    let sigma = take(k);
    let mut corr_chol = identity(k);
    for i in 1..k {
        let row = take(i + 1);
        corr_chol[i * k..i * k + i + 1].copy_from_slice(&row);
    }
    let z = take(k * config.n_participants);
    Ok(ParamVector {
        beta_mu,
        beta_phi,
        beta_pi,
        sigma,
        corr_chol,
        z,
        resid_sd: None,
    })
}
