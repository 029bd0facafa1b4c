use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::VisType;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    ZeroInflatedBeta,
    /// Normal likelihood on per-(participant, chart) mean errors with a single
    /// residual SD; the first rung of the model-expansion ladder.
    NormalMeanOnly,
}

/// The three linear submodels. Random-offset blocks are stacked in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Submodel {
    Mean,
    Precision,
    Zeros,
}

impl Submodel {
    pub const ALL: [Submodel; 3] = [Submodel::Mean, Submodel::Precision, Submodel::Zeros];

    /// Short label used in parameter names.
    pub fn label(self) -> &'static str {
        match self {
            Submodel::Mean => "mu",
            Submodel::Precision => "phi",
            Submodel::Zeros => "pi",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Submodel::Mean => 0,
            Submodel::Precision => 1,
            Submodel::Zeros => 2,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mu" | "mean" => Ok(Submodel::Mean),
            "phi" | "precision" => Ok(Submodel::Precision),
            "pi" | "zeros" | "zi" => Ok(Submodel::Zeros),
            other => Err(Error::validation(format!("unknown submodel `{other}`"))),
        }
    }
}

/// Which submodels carry per-participant random offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomEffects {
    pub mean: bool,
    pub precision: bool,
    pub zeros: bool,
}

impl RandomEffects {
    pub const ALL: RandomEffects = RandomEffects {
        mean: true,
        precision: true,
        zeros: true,
    };
    pub const NONE: RandomEffects = RandomEffects {
        mean: false,
        precision: false,
        zeros: false,
    };

    pub fn enabled(&self, s: Submodel) -> bool {
        match s {
            Submodel::Mean => self.mean,
            Submodel::Precision => self.precision,
            Submodel::Zeros => self.zeros,
        }
    }

    pub fn blocks(&self) -> Vec<Submodel> {
        Submodel::ALL.into_iter().filter(|s| self.enabled(*s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub loc: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTPrior {
    pub df: f64,
    pub loc: f64,
    pub scale: f64,
}

/// Prior families and constants. Defaults are the published weakly-informed
/// choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub beta_mu: NormalPrior,
    pub beta_phi: StudentTPrior,
    pub beta_pi: NormalPrior,
    /// Scale of the half-Normal prior on every random-offset SD.
    pub sd_scale: f64,
    /// LKJ concentration for the random-offset correlation matrix.
    pub lkj_eta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            beta_mu: NormalPrior { loc: -2.0, scale: 1.0 },
            beta_phi: StudentTPrior {
                df: 5.0,
                loc: 0.0,
                scale: 10.0,
            },
            beta_pi: NormalPrior {
                loc: -2.5,
                scale: 1.25,
            },
            sd_scale: 0.5,
            lkj_eta: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_vis: usize,
    pub n_participants: usize,
    pub vis_labels: Vec<String>,
    pub likelihood: Likelihood,
    pub random_effects: RandomEffects,
    pub priors: PriorSpec,
}

impl ModelConfig {
    /// The full zero-inflated Beta model with all three random-offset blocks.
    pub fn final_model(n_vis: usize, n_participants: usize) -> Self {
        ModelConfig {
            n_vis,
            n_participants,
            vis_labels: default_labels(n_vis),
            likelihood: Likelihood::ZeroInflatedBeta,
            random_effects: RandomEffects::ALL,
            priors: PriorSpec::default(),
        }
    }

    /// Normal likelihood on mean errors, no random offsets.
    pub fn normal_baseline(n_vis: usize, n_participants: usize) -> Self {
        ModelConfig {
            likelihood: Likelihood::NormalMeanOnly,
            random_effects: RandomEffects::NONE,
            ..Self::final_model(n_vis, n_participants)
        }
    }

    pub fn with_random_effects(mut self, re: RandomEffects) -> Self {
        self.random_effects = re;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vis == 0 || self.n_participants == 0 {
            return Err(Error::validation("model needs at least one chart type and one participant"));
        }
        if self.vis_labels.len() != self.n_vis {
            return Err(Error::validation(format!(
                "{} vis labels for {} chart types",
                self.vis_labels.len(),
                self.n_vis
            )));
        }
        if self.likelihood == Likelihood::NormalMeanOnly && self.random_effects != RandomEffects::NONE {
            return Err(Error::validation("the Normal baseline has no random offsets"));
        }
        let p = &self.priors;
        let positive = [
            p.beta_mu.scale,
            p.beta_phi.df,
            p.beta_phi.scale,
            p.beta_pi.scale,
            p.sd_scale,
            p.lkj_eta,
        ];
        if positive.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::validation("prior scales, df and eta must be positive"));
        }
        Ok(())
    }

    /// Number of stacked random-offset coordinates per participant.
    pub fn n_offsets(&self) -> usize {
        self.random_effects.blocks().len() * self.n_vis
    }

    /// Key-value text form, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let p = &self.priors;
        let mut s = String::new();
        let _ = writeln!(s, "V = {}", self.n_vis);
        let _ = writeln!(s, "P = {}", self.n_participants);
        let _ = writeln!(s, "vis_labels = {}", self.vis_labels.join(","));
        let _ = writeln!(
            s,
            "likelihood = {}",
            match self.likelihood {
                Likelihood::ZeroInflatedBeta => "zero_inflated_beta",
                Likelihood::NormalMeanOnly => "normal_mean_only",
            }
        );
        let _ = writeln!(s, "random_mu = {}", self.random_effects.mean);
        let _ = writeln!(s, "random_phi = {}", self.random_effects.precision);
        let _ = writeln!(s, "random_pi = {}", self.random_effects.zeros);
        let _ = writeln!(s, "prior_beta_mu_loc = {}", p.beta_mu.loc);
        let _ = writeln!(s, "prior_beta_mu_scale = {}", p.beta_mu.scale);
        let _ = writeln!(s, "prior_beta_phi_df = {}", p.beta_phi.df);
        let _ = writeln!(s, "prior_beta_phi_loc = {}", p.beta_phi.loc);
        let _ = writeln!(s, "prior_beta_phi_scale = {}", p.beta_phi.scale);
        let _ = writeln!(s, "prior_beta_pi_loc = {}", p.beta_pi.loc);
        let _ = writeln!(s, "prior_beta_pi_scale = {}", p.beta_pi.scale);
        let _ = writeln!(s, "prior_sd_scale = {}", p.sd_scale);
        let _ = writeln!(s, "prior_lkj_eta = {}", p.lkj_eta);
        s
    }

    /// Parses the key-value form. `V` and `P` are required unless supplied
    /// through `defaults`; unknown keys are rejected; `#` starts a comment.
    pub fn from_text(text: &str, defaults: Option<&ModelConfig>) -> Result<Self> {
        let mut cfg = defaults.cloned().unwrap_or_else(|| ModelConfig::final_model(0, 0));
        let mut labels: Option<Vec<String>> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::validation(format!("model config line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::validation(format!("model config line {}: bad {what} `{value}`", lineno + 1));
            let num = || value.parse::<f64>().map_err(|_| bad(key));
            let flag = || value.parse::<bool>().map_err(|_| bad(key));
            let p = &mut cfg.priors;
            match key {
                "V" => cfg.n_vis = value.parse().map_err(|_| bad(key))?,
                "P" => cfg.n_participants = value.parse().map_err(|_| bad(key))?,
                "vis_labels" => labels = Some(value.split(',').map(|s| s.trim().to_string()).collect()),
                "likelihood" => {
                    cfg.likelihood = match value {
                        "zero_inflated_beta" => Likelihood::ZeroInflatedBeta,
                        "normal_mean_only" => Likelihood::NormalMeanOnly,
                        _ => return Err(bad(key)),
                    }
                }
                "random_mu" => cfg.random_effects.mean = flag()?,
                "random_phi" => cfg.random_effects.precision = flag()?,
                "random_pi" => cfg.random_effects.zeros = flag()?,
                "prior_beta_mu_loc" => p.beta_mu.loc = num()?,
                "prior_beta_mu_scale" => p.beta_mu.scale = num()?,
                "prior_beta_phi_df" => p.beta_phi.df = num()?,
                "prior_beta_phi_loc" => p.beta_phi.loc = num()?,
                "prior_beta_phi_scale" => p.beta_phi.scale = num()?,
                "prior_beta_pi_loc" => p.beta_pi.loc = num()?,
                "prior_beta_pi_scale" => p.beta_pi.scale = num()?,
                "prior_sd_scale" => p.sd_scale = num()?,
                "prior_lkj_eta" => p.lkj_eta = num()?,
                other => {
                    return Err(Error::validation(format!(
                        "model config line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.vis_labels = match labels {
            Some(l) => l,
            None if cfg.vis_labels.len() == cfg.n_vis => cfg.vis_labels,
            None => default_labels(cfg.n_vis),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Chart names for the four study charts, `v1..vN` otherwise.
pub fn default_labels(n_vis: usize) -> Vec<String> {
    if n_vis == VisType::ALL.len() {
        VisType::ALL.iter().map(|v| v.as_str().to_string()).collect()
    } else {
        (1..=n_vis).map(|k| format!("v{k}")).collect()
    }
}
