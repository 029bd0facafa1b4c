//! Joint log density of the mixed-effects location-scale model and its
//! analytic gradient on the unconstrained scale.
//!
//! Observations are reduced to per-(participant, chart) sufficient statistics
//! on construction: every observation in a cell shares the same `(mu, phi,
//! pi)`, so the likelihood only needs the zero count, the nonzero count and
//! the sums of `log y` and `log(1 - y)`.

use serde::{Deserialize, Serialize};

use super::config::{Likelihood, ModelConfig, Submodel};
use super::density::{
    clamp_link, digamma, half_normal_logpdf, inv_logit, ln_gamma, lkj_log_norm_const, log_inv_logit,
    normal_logpdf, normal_score, student_t_logpdf, student_t_score, LINK_CLAMP,
};
use super::params::{chol_from_free, offset_index, ParamLayout, ParamVector};
use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// One trial-level (or, for the Normal baseline, cell-mean) absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: f64,
    pub vis: usize,
    pub participant: usize,
}

/// Per-observation distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkedParams {
    pub mu: f64,
    pub phi: f64,
    pub pi: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct CellStats {
    participant: usize,
    vis: usize,
    n_zero: f64,
    n_pos: f64,
    sum_log_y: f64,
    sum_log1m_y: f64,
    n: f64,
    sum_y: f64,
    sum_y2: f64,
}

/// Linear predictors for one (chart, participant) pair.
fn linear_predictors(params: &ParamVector, config: &ModelConfig, vis: usize, offsets: &[f64]) -> [f64; 3] {
    let off = |s: Submodel| offset_index(config, s, vis).map_or(0.0, |i| offsets[i]);
    [
        params.beta_mu[vis] + off(Submodel::Mean),
        params.beta_phi[vis] + off(Submodel::Precision),
        params.beta_pi[vis] + off(Submodel::Zeros),
    ]
}

/// `mu = inv_logit(.)`, `phi = exp(.)`, `pi = inv_logit(.)` of the clamped
/// linear predictors, using the participant offsets `U = diag(sigma) L z`.
pub fn link_params(params: &ParamVector, config: &ModelConfig, vis: usize, participant: usize) -> LinkedParams {
    let offsets = if params.n_offsets() == 0 {
        Vec::new()
    } else {
        params.offsets(participant)
    };
    link_with_offsets(params, config, vis, &offsets)
}

/// As [`link_params`] with explicit offsets (empty for "none").
pub fn link_with_offsets(params: &ParamVector, config: &ModelConfig, vis: usize, offsets: &[f64]) -> LinkedParams {
    let [m, f, z] = if offsets.is_empty() {
        [params.beta_mu[vis], params.beta_phi[vis], params.beta_pi[vis]]
    } else {
        linear_predictors(params, config, vis, offsets)
    };
    LinkedParams {
        mu: inv_logit(clamp_link(m)),
        phi: clamp_link(f).exp(),
        pi: inv_logit(clamp_link(z)),
    }
}

/// Prior log density on the natural scale, term by term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PriorTerms {
    pub beta_mu: f64,
    pub beta_phi: f64,
    pub beta_pi: f64,
    pub sd: f64,
    pub lkj: f64,
    pub z: f64,
}

impl PriorTerms {
    pub fn total(&self) -> f64 {
        self.beta_mu + self.beta_phi + self.beta_pi + self.sd + self.lkj + self.z
    }
}

pub fn prior_terms(params: &ParamVector, config: &ModelConfig) -> PriorTerms {
    if config.likelihood == Likelihood::NormalMeanOnly {
        return PriorTerms::default();
    }
    let pr = &config.priors;
    let k = params.n_offsets();
    let log_det: f64 = (0..k).map(|i| 2.0 * params.chol(i, i).ln()).sum();
    PriorTerms {
        beta_mu: params.beta_mu.iter().map(|&b| normal_logpdf(b, pr.beta_mu.loc, pr.beta_mu.scale)).sum(),
        beta_phi: params
            .beta_phi
            .iter()
            .map(|&b| student_t_logpdf(b, pr.beta_phi.df, pr.beta_phi.loc, pr.beta_phi.scale))
            .sum(),
        beta_pi: params.beta_pi.iter().map(|&b| normal_logpdf(b, pr.beta_pi.loc, pr.beta_pi.scale)).sum(),
        sd: params.sigma.iter().map(|&s| half_normal_logpdf(s, pr.sd_scale)).sum(),
        lkj: if k > 1 {
            (pr.lkj_eta - 1.0) * log_det - lkj_log_norm_const(k, pr.lkj_eta)
        } else {
            0.0
        },
        z: params.z.iter().map(|&z| normal_logpdf(z, 0.0, 1.0)).sum(),
    }
}

/// Natural-scale log prior: Normal / Student-t / Normal on the three
/// coefficient blocks, half-Normal on each offset SD, LKJ on the correlation
/// matrix and standard Normal on every standardized offset. The Normal
/// baseline is flat.
pub fn log_prior(params: &ParamVector, config: &ModelConfig) -> f64 {
    prior_terms(params, config).total()
}

/// Log-Jacobian of the unconstrained-to-natural map: `log sigma` terms, the
/// canonical-partial-correlation map to `L`, and `L` to the correlation
/// matrix.
pub fn log_jacobian(params: &ParamVector, config: &ModelConfig) -> f64 {
    if config.likelihood == Likelihood::NormalMeanOnly {
        return 0.0;
    }
    let k = params.n_offsets();
    let free = super::params::chol_to_free(k, &params.corr_chol);
    let (_, jac_free) = chol_from_free(k, &free);
    let jac_corr: f64 = (1..k).map(|i| (k - i - 1) as f64 * params.chol(i, i).ln()).sum();
    params.sigma.iter().map(|s| s.ln()).sum::<f64>() + jac_free + jac_corr
}

/// A model bound to its data, ready for density and gradient evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layout: ParamLayout,
    cells: Vec<CellStats>,
    n_obs: usize,
}

impl Model {
    pub fn new(config: ModelConfig, observations: &[Observation]) -> Result<Self> {
        config.validate()?;
        let v = config.n_vis;
        let mut cells = vec![CellStats::default(); v * config.n_participants];
        for (i, c) in cells.iter_mut().enumerate() {
            c.participant = i / v;
            c.vis = i % v;
        }
        for (i, o) in observations.iter().enumerate() {
            if o.vis >= v || o.participant >= config.n_participants {
                return Err(Error::Domain(format!(
                    "observation {i}: vis {} / participant {} out of range",
                    o.vis, o.participant
                )));
            }
            let y = o.value;
            let c = &mut cells[o.participant * v + o.vis];
            match config.likelihood {
                Likelihood::ZeroInflatedBeta => {
                    if !(0.0..1.0).contains(&y) {
                        return Err(Error::Domain(format!("observation {i}: value {y} outside [0, 1)")));
                    }
                    if y == 0.0 {
                        c.n_zero += 1.0;
                    } else {
                        c.n_pos += 1.0;
                        c.sum_log_y += y.ln();
                        c.sum_log1m_y += (-y).ln_1p();
                    }
                }
                Likelihood::NormalMeanOnly => {
                    if !y.is_finite() {
                        return Err(Error::Domain(format!("observation {i}: value {y} is not finite")));
                    }
                    c.n += 1.0;
                    c.sum_y += y;
                    c.sum_y2 += y * y;
                }
            }
        }
        cells.retain(|c| c.n_zero + c.n_pos + c.n > 0.0);
        Ok(Model {
            layout: ParamLayout::new(&config),
            config,
            cells,
            n_obs: observations.len(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> ParamLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n_observations(&self) -> usize {
        self.n_obs
    }

    /// Unconstrained log density (prior + likelihood + log-Jacobian).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, None, true)
    }

    /// Unconstrained log density and its gradient, written into `grad`.
    pub fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(theta, Some(grad), true)
    }

    /// Log likelihood only.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.evaluate(theta, None, false)
    }

    fn evaluate(&self, theta: &[f64], grad: Option<&mut [f64]>, with_prior: bool) -> f64 {
        assert_eq!(theta.len(), self.dim(), "parameter vector has the wrong length");
        match self.config.likelihood {
            Likelihood::NormalMeanOnly => self.normal_density(theta, grad),
            Likelihood::ZeroInflatedBeta => self.zib_density(theta, grad, with_prior),
        }
    }

    fn normal_density(&self, theta: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let v = self.layout.n_vis;
        let log_sd = theta[v];
        let var = (2.0 * log_sd).exp();
        let mut lp = 0.0;
        let mut g_beta = vec![0.0; v];
        let mut g_log_sd = 0.0;
        for c in &self.cells {
            let b = theta[c.vis];
            let ss = c.sum_y2 - 2.0 * b * c.sum_y + c.n * b * b;
            lp += -c.n * (log_sd + LN_SQRT_2PI) - ss / (2.0 * var);
            g_beta[c.vis] += (c.sum_y - c.n * b) / var;
            g_log_sd += -c.n + ss / var;
        }
        if let Some(g) = grad {
            g[..v].copy_from_slice(&g_beta);
            g[v] = g_log_sd;
        }
        lp
    }

    fn zib_density(&self, theta: &[f64], grad: Option<&mut [f64]>, with_prior: bool) -> f64 {
        let lay = self.layout;
        let (v, k, np) = (lay.n_vis, lay.n_offsets, lay.n_participants);
        let pr = &self.config.priors;
        let want_grad = grad.is_some();

        let beta_mu = &theta[lay.beta_mu()..lay.beta_phi()];
        let beta_phi = &theta[lay.beta_phi()..lay.beta_pi()];
        let beta_pi = &theta[lay.beta_pi()..lay.log_sd()];
        let log_sd = &theta[lay.log_sd()..lay.chol()];
        let free = &theta[lay.chol()..lay.z()];
        let z = &theta[lay.z()..];
        let sd: Vec<f64> = log_sd.iter().map(|x| x.exp()).collect();
        let (l, log_jac_free) = chol_from_free(k, free);

        // lz[p*k + i] = (L z_p)_i, u = sd * lz
        let mut lz = vec![0.0; k * np];
        for p in 0..np {
            let zp = &z[p * k..(p + 1) * k];
            for i in 0..k {
                let row = &l[i * k..i * k + i + 1];
                lz[p * k + i] = row.iter().zip(zp).map(|(a, b)| a * b).sum();
            }
        }
        let blk = |s: Submodel| offset_index(&self.config, s, 0);
        let (blk_mu, blk_phi, blk_pi) = (blk(Submodel::Mean), blk(Submodel::Precision), blk(Submodel::Zeros));
        let u_at = |p: usize, b: Option<usize>, vi: usize| b.map_or(0.0, |b| sd[b + vi] * lz[p * k + b + vi]);

        let mut lp = 0.0;
        let mut g_beta = vec![0.0; 3 * v];
        let mut g_u = vec![0.0; if want_grad { k * np } else { 0 }];

        for c in &self.cells {
            let (p, vi) = (c.participant, c.vis);
            let e_mu = beta_mu[vi] + u_at(p, blk_mu, vi);
            let e_phi = beta_phi[vi] + u_at(p, blk_phi, vi);
            let e_pi = beta_pi[vi] + u_at(p, blk_pi, vi);
            let (cm, cf, cz) = (clamp_link(e_mu), clamp_link(e_phi), clamp_link(e_pi));

            // Zero/nonzero mixture weights.
            lp += c.n_zero * log_inv_logit(cz) + c.n_pos * log_inv_logit(-cz);
            let pi = inv_logit(cz);
            let mut d_pi = c.n_zero * (1.0 - pi) - c.n_pos * pi;

            let (mut d_mu, mut d_phi) = (0.0, 0.0);
            if c.n_pos > 0.0 {
                let mu = inv_logit(cm);
                let phi = cf.exp();
                let a = mu * phi;
                let b = (1.0 - mu) * phi;
                lp += c.n_pos * (ln_gamma(phi) - ln_gamma(a) - ln_gamma(b))
                    + (a - 1.0) * c.sum_log_y
                    + (b - 1.0) * c.sum_log1m_y;
                if want_grad {
                    let da = c.sum_log_y - c.n_pos * digamma(a);
                    let db = c.sum_log1m_y - c.n_pos * digamma(b);
                    d_mu = phi * (da - db) * mu * (1.0 - mu);
                    d_phi = (c.n_pos * digamma(phi) + mu * da + (1.0 - mu) * db) * phi;
                }
            }
            if !want_grad {
                continue;
            }
            if e_mu.abs() > LINK_CLAMP {
                d_mu = 0.0;
            }
            if e_phi.abs() > LINK_CLAMP {
                d_phi = 0.0;
            }
            if e_pi.abs() > LINK_CLAMP {
                d_pi = 0.0;
            }
            g_beta[vi] += d_mu;
            g_beta[v + vi] += d_phi;
            g_beta[2 * v + vi] += d_pi;
            for (b, d) in [(blk_mu, d_mu), (blk_phi, d_phi), (blk_pi, d_pi)] {
                if let Some(b) = b {
                    g_u[p * k + b + vi] += d;
                }
            }
        }

        if !with_prior {
            return lp;
        }

        // Coefficient priors.
        for vi in 0..v {
            lp += normal_logpdf(beta_mu[vi], pr.beta_mu.loc, pr.beta_mu.scale);
            lp += student_t_logpdf(beta_phi[vi], pr.beta_phi.df, pr.beta_phi.loc, pr.beta_phi.scale);
            lp += normal_logpdf(beta_pi[vi], pr.beta_pi.loc, pr.beta_pi.scale);
            if want_grad {
                g_beta[vi] += normal_score(beta_mu[vi], pr.beta_mu.loc, pr.beta_mu.scale);
                g_beta[v + vi] += student_t_score(beta_phi[vi], pr.beta_phi.df, pr.beta_phi.loc, pr.beta_phi.scale);
                g_beta[2 * v + vi] += normal_score(beta_pi[vi], pr.beta_pi.loc, pr.beta_pi.scale);
            }
        }

        // Half-Normal on sd with the log transform's Jacobian.
        let s2 = pr.sd_scale * pr.sd_scale;
        let mut g_log_sd = vec![0.0; k];
        for i in 0..k {
            lp += half_normal_logpdf(sd[i], pr.sd_scale) + log_sd[i];
            g_log_sd[i] = -sd[i] * sd[i] / s2 + 1.0;
        }

        // LKJ on C = L L^T, including the L -> C and free -> L Jacobians.
        let mut g_l = vec![0.0; if want_grad { k * k } else { 0 }];
        if k > 1 {
            lp += log_jac_free - lkj_log_norm_const(k, pr.lkj_eta);
            for i in 1..k {
                let coef = 2.0 * (pr.lkj_eta - 1.0) + (k - i - 1) as f64;
                let lii = l[i * k + i];
                lp += coef * lii.ln();
                if want_grad {
                    g_l[i * k + i] += coef / lii;
                }
            }
        }

        // Standard Normal on z.
        let mut g_z: Vec<f64> = if want_grad { z.iter().map(|x| -x).collect() } else { Vec::new() };
        lp += z.iter().map(|&x| -LN_SQRT_2PI - 0.5 * x * x).sum::<f64>();

        let Some(grad) = grad else {
            return lp;
        };

        // Back-propagate offsets U = diag(sd) L z.
        for p in 0..np {
            for i in 0..k {
                let gu = g_u[p * k + i];
                if gu == 0.0 {
                    continue;
                }
                g_log_sd[i] += gu * sd[i] * lz[p * k + i];
                let a = gu * sd[i];
                for j in 0..=i {
                    g_l[i * k + j] += a * z[p * k + j];
                    g_z[p * k + j] += a * l[i * k + j];
                }
            }
        }

        grad[..3 * v].copy_from_slice(&g_beta);
        grad[lay.log_sd()..lay.chol()].copy_from_slice(&g_log_sd);
        chol_backprop(k, free, &l, &g_l, &mut grad[lay.chol()..lay.z()]);
        grad[lay.z()..].copy_from_slice(&g_z);
        lp
    }
}

/// Reverse-mode pass through [`chol_from_free`]: given `dlp/dL` (including
/// the diagonal), writes `dlp/dfree`, adding the derivative of the map's own
/// log-Jacobian.
fn chol_backprop(k: usize, free: &[f64], l: &[f64], g_l: &[f64], g_free: &mut [f64]) {
    let mut start = 0;
    for i in 1..k {
        let ys = &free[start..start + i];
        let out = &mut g_free[start..start + i];
        start += i;

        // Forward quantities for this row.
        let mut w = vec![0.0; i];
        let mut sum_sq: f64 = 0.0;
        for j in 0..i {
            w[j] = (1.0 - sum_sq).sqrt();
            sum_sq += l[i * k + j] * l[i * k + j];
        }

        let lii = l[i * k + i];
        let mut g_s = if lii > 0.0 { -0.5 * g_l[i * k + i] / lii } else { 0.0 };
        for j in (0..i).rev() {
            let t = ys[j].tanh();
            let lij = l[i * k + j];
            let g_lij = g_l[i * k + j] + 2.0 * lij * g_s;
            let g_t = g_lij * w[j];
            if j > 0 {
                let g_w = g_lij * t + 1.0 / w[j];
                g_s += -0.5 * g_w / w[j];
            }
            out[j] = g_t * (1.0 - t * t) - 2.0 * t;
        }
    }
}

/// Log likelihood of `observations` at natural-scale `params`.
pub fn log_likelihood(params: &ParamVector, observations: &[Observation], config: &ModelConfig) -> Result<f64> {
    let model = Model::new(config.clone(), observations)?;
    Ok(model.log_likelihood(&params.to_unconstrained(config)))
}

/// Natural-scale log posterior: `log_prior + sum of observation log
/// densities`. No Jacobian terms.
pub fn log_posterior(params: &ParamVector, observations: &[Observation], config: &ModelConfig) -> Result<f64> {
    Ok(log_prior(params, config) + log_likelihood(params, observations, config)?)
}

/// Gradient of the unconstrained log density at `params`.
pub fn grad_log_posterior(params: &ParamVector, observations: &[Observation], config: &ModelConfig) -> Result<Vec<f64>> {
    let model = Model::new(config.clone(), observations)?;
    let theta = params.to_unconstrained(config);
    let mut g = vec![0.0; theta.len()];
    model.log_density_grad(&theta, &mut g);
    Ok(g)
}
