//! Forward simulation from the model: population parameters, synthetic
//! observations, and synthetic study responses.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::joint::{link_params, link_with_offsets, LinkedParams, Observation};
use super::params::{identity, ParamVector};
use crate::domain::{ResponseRecord, VisType};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::stimulus::StudyDesign;

/// Population-level parameters used to generate synthetic participants.
/// `sigma` is stacked like the model's offsets (mean block, then precision,
/// then zeros); `corr` defaults to the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub beta_mu: Vec<f64>,
    pub beta_phi: Vec<f64>,
    pub beta_pi: Vec<f64>,
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub corr: Option<Vec<Vec<f64>>>,
}

impl PopulationParams {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Lower Cholesky factor of `corr` (row-major), or the identity.
    pub fn corr_chol(&self) -> Result<Vec<f64>> {
        let k = self.sigma.len();
        match &self.corr {
            None => Ok(identity(k)),
            Some(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::validation(format!("correlation matrix must be {k} x {k}")));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                cholesky(k, &flat)
            }
        }
    }

    /// Draws `n_participants` standardized offset vectors and returns the
    /// full natural-scale parameter vector.
    pub fn realize<R: Rng + ?Sized>(&self, config: &ModelConfig, rng: &mut R) -> Result<ParamVector> {
        let v = config.n_vis;
        let k = config.n_offsets();
        if self.beta_mu.len() != v || self.beta_phi.len() != v || self.beta_pi.len() != v {
            return Err(Error::validation(format!("population parameters need {v} coefficients per submodel")));
        }
        if self.sigma.len() != k {
            return Err(Error::validation(format!("population parameters need {k} offset SDs")));
        }
        if self.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::validation("offset SDs must be non-negative"));
        }
        let z = (0..k * config.n_participants).map(|_| rng.sample(StandardNormal)).collect();
        Ok(ParamVector {
            beta_mu: self.beta_mu.clone(),
            beta_phi: self.beta_phi.clone(),
            beta_pi: self.beta_pi.clone(),
            sigma: self.sigma.clone(),
            corr_chol: self.corr_chol()?,
            z,
            resid_sd: None,
        })
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(k: usize, a: &[f64]) -> Result<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i * k + m] * l[j * k + m]).sum();
            if i == j {
                let d = a[i * k + i] - s;
                if !(d > 0.0) {
                    return Err(Error::Domain("matrix is not positive definite".into()));
                }
                l[i * k + i] = d.sqrt();
            } else {
                l[i * k + j] = (a[i * k + j] - s) / l[j * k + j];
            }
        }
    }
    Ok(l)
}

/// One zero-inflated Beta draw.
pub fn draw_zib<R: Rng + ?Sized>(lp: LinkedParams, rng: &mut R) -> f64 {
    if rng.random::<f64>() < lp.pi {
        return 0.0;
    }
    let a = lp.mu * lp.phi;
    let b = (1.0 - lp.mu) * lp.phi;
    let y: f64 = Beta::new(a, b).map(|d| d.sample(rng)).unwrap_or(lp.mu);
    // Extreme shapes can round to the boundary; keep draws strictly inside.
    y.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// `trials_per_cell` observations per (participant, chart), participant-major.
pub fn simulate_dataset(
    true_params: &ParamVector,
    config: &ModelConfig,
    trials_per_cell: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    true_params.validate(config)?;
    let mut rng = stream_rng(seed, streams::SIMULATION);
    let mut out = Vec::with_capacity(config.n_participants * config.n_vis * trials_per_cell);
    for p in 0..config.n_participants {
        for v in 0..config.n_vis {
            let lp = link_params(true_params, config, v, p);
            for _ in 0..trials_per_cell {
                out.push(Observation { value: draw_zib(lp, &mut rng), vis: v, participant: p });
            }
        }
    }
    Ok(out)
}

/// Converts an absolute error in `[0, 1)` into a judged percent for a trial
/// with the given true proportion: round to whole points, pick a direction at
/// random, and fall back to the other direction (or clamp) at the edges.
pub fn judged_from_error<R: Rng + ?Sized>(true_proportion: u8, error: f64, rng: &mut R) -> u8 {
    let e = (error * 100.0).round() as i32;
    let t = i32::from(true_proportion);
    let (first, second) = if rng.random::<bool>() { (t + e, t - e) } else { (t - e, t + e) };
    let j = if (1..=100).contains(&first) {
        first
    } else if (1..=100).contains(&second) {
        second
    } else {
        first.clamp(1, 100)
    };
    j as u8
}

/// Synthetic responses to every trial of `design` (training included) for
/// `n_participants` people drawn from `population`. Participant ids are
/// `sim001`, `sim002`, ...; offsets for chart `v` follow `VisType::ALL` order.
pub fn simulate_responses(
    population: &PopulationParams,
    design: &StudyDesign,
    n_participants: usize,
    seed: u64,
) -> Result<(Vec<ResponseRecord>, ParamVector)> {
    let config = ModelConfig::final_model(VisType::ALL.len(), n_participants);
    let mut rng = stream_rng(seed, streams::SIMULATION);
    let params = population.realize(&config, &mut rng)?;
    let start: DateTime<Utc> = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).single().expect("valid date");
    let width = n_participants.to_string().len().max(3);
    let mut out = Vec::with_capacity(n_participants * design.trials.len());
    for p in 0..n_participants {
        let id = format!("sim{:0width$}", p + 1);
        let offsets = params.offsets(p);
        let mut clock = start + Duration::hours(p as i64);
        for trial in &design.trials {
            let lp = link_with_offsets(&params, &config, trial.vis.index(), &offsets);
            let err = draw_zib(lp, &mut rng);
            let judged = judged_from_error(trial.true_proportion, err, &mut rng);
            let rt: u64 = rng.random_range(1500..9000);
            clock += Duration::milliseconds(rt as i64 + 400);
            out.push(ResponseRecord {
                participant_id: id.clone(),
                trial_index: trial.trial_index,
                vis: trial.vis,
                true_proportion: trial.true_proportion,
                judged_percent: judged,
                response_time_ms: rt,
                submitted_at: clock,
            });
        }
    }
    Ok((out, params))
}

/// Sensible defaults for synthetic studies with `n_vis` charts: typical
/// errors of a few points, roughly a fifth exact answers, modest offsets.
pub fn default_population(n_vis: usize) -> PopulationParams {
    let ramp = |lo: f64, step: f64| (0..n_vis).map(|v| lo + step * v as f64).collect::<Vec<_>>();
    PopulationParams {
        beta_mu: ramp(-2.8, 0.2),
        beta_phi: vec![2.5; n_vis],
        beta_pi: ramp(-1.2, -0.25),
        sigma: vec![0.4; 3 * n_vis],
        corr: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = [4.0, 2.0, 0.4, 2.0, 3.0, 0.5, 0.4, 0.5, 2.0];
        let l = cholesky(3, &a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|m| l[i * 3 + m] * l[j * 3 + m]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(2, &[1.0, 2.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn judged_stays_in_range() {
        let mut rng = stream_rng(1, 0);
        for t in [5u8, 50, 99] {
            for e in [0.0, 0.03, 0.5, 0.94] {
                let j = judged_from_error(t, e, &mut rng);
                assert!((1..=100).contains(&j));
            }
        }
        assert_eq!(judged_from_error(50, 0.0, &mut rng), 50);
        assert_eq!(judged_from_error(99, 0.5, &mut rng), 49);
    }

    #[test]
    fn all_zero_when_pi_is_one() {
        let cfg = ModelConfig::final_model(2, 2);
        let mut p = ParamVector::zeros(&cfg);
        p.beta_pi = vec![40.0, 40.0];
        p.sigma = vec![0.0; 6];
        let obs = simulate_dataset(&p, &cfg, 50, 3).unwrap();
        assert!(obs.iter().all(|o| o.value == 0.0));
    }
}
