//! Summaries derived from posterior draws: predictive error CDFs and their
//! pairwise differences, simulated populations, between-person spread,
//! random-offset correlations, ranking distributions and individual scores.
//!
//! Person-level "mean error" is always the model-expected absolute error
//! `(1 - pi) * mu`. Per-draw randomness comes from `indexed_rng(seed, draw)`,
//! so results do not depend on how draws are scheduled across threads.

pub mod output;
pub mod ranking;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::model::params::{offset_index, offsets_from};
use crate::model::{link_with_offsets, unflatten, Likelihood, LinkedParams, ModelConfig, ParamVector, Submodel};
use crate::rng::indexed_rng;
use crate::sampler::PosteriorDraws;
use crate::stats::IntervalSummary;

pub use ranking::{ranking_distribution, ranking_label, RankingDistribution};

/// Mean of the zero-inflated Beta: `(1 - pi) * mu`.
pub fn expected_abs_error(lp: LinkedParams) -> f64 {
    (1.0 - lp.pi) * lp.mu
}

/// Predictive CDF of the absolute error at `e`: `pi + (1 - pi) * I_e(a, b)`.
pub fn zib_cdf(lp: LinkedParams, e: f64) -> f64 {
    if e <= 0.0 {
        return if e < 0.0 { 0.0 } else { lp.pi };
    }
    if e >= 1.0 {
        return 1.0;
    }
    let a = lp.mu * lp.phi;
    let b = (1.0 - lp.mu) * lp.phi;
    lp.pi + (1.0 - lp.pi) * beta_reg(a, b, e).clamp(0.0, 1.0)
}

pub const GRID_POINTS: usize = 141;
pub const GRID_STEP: f64 = 0.0025;

/// 0 to 0.35 in steps of 0.0025.
pub fn error_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|i| i as f64 * GRID_STEP).collect()
}

/// Below this many draws a population of 6,000 simulated people is affordable.
pub const LARGE_POPULATION_MAX_DRAWS: usize = 1000;

pub fn default_n_people(n_draws: usize) -> usize {
    if n_draws <= LARGE_POPULATION_MAX_DRAWS {
        6000
    } else {
        1000
    }
}

/// Whose offsets to apply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Who {
    AverageParticipant,
    Participant(String),
}

/// Posterior draws decoded into natural-scale parameters.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub config: ModelConfig,
    pub participants: Vec<String>,
    pub draws: Vec<ParamVector>,
}

impl Posterior {
    pub fn new(config: ModelConfig, participants: Vec<String>, draws: Vec<ParamVector>) -> Result<Self> {
        if config.likelihood != Likelihood::ZeroInflatedBeta {
            return Err(Error::Unsupported(
                "posterior summaries need the zero-inflated Beta likelihood".into(),
            ));
        }
        if participants.len() != config.n_participants {
            return Err(Error::validation(format!(
                "{} participant ids for a model with {} participants",
                participants.len(),
                config.n_participants
            )));
        }
        if draws.is_empty() {
            return Err(Error::validation("no posterior draws"));
        }
        for d in &draws {
            d.validate(&config)?;
        }
        Ok(Posterior { config, participants, draws })
    }

    /// Decodes draws whose names follow the model's parameter naming.
    pub fn from_draws(config: ModelConfig, participants: Vec<String>, draws: &PosteriorDraws) -> Result<Self> {
        let expected = crate::model::param_names(&config);
        if draws.names != expected {
            return Err(Error::validation("draws do not match the model's parameter names"));
        }
        let params = (0..draws.n_draws())
            .map(|d| unflatten(draws.draw(d), &config))
            .collect::<Result<Vec<_>>>()?;
        Self::new(config, participants, params)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn n_vis(&self) -> usize {
        self.config.n_vis
    }

    pub fn vis_label(&self, v: usize) -> &str {
        &self.config.vis_labels[v]
    }

    pub fn vis_index(&self, label: &str) -> Result<usize> {
        self.config
            .vis_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::validation(format!("unknown chart type `{label}`")))
    }

    pub fn participant_index(&self, id: &str) -> Result<usize> {
        self.participants
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::UnknownParticipant(id.to_string()))
    }

    /// Offsets of `who` in draw `d`; empty for the average participant.
    fn offsets(&self, d: usize, who: &ResolvedWho) -> Vec<f64> {
        match who {
            ResolvedWho::Average => Vec::new(),
            ResolvedWho::Participant(p) => {
                let params = &self.draws[d];
                if params.n_offsets() == 0 {
                    Vec::new()
                } else {
                    params.offsets(*p)
                }
            }
        }
    }

    fn resolve(&self, who: &Who) -> Result<ResolvedWho> {
        Ok(match who {
            Who::AverageParticipant => ResolvedWho::Average,
            Who::Participant(id) => ResolvedWho::Participant(self.participant_index(id)?),
        })
    }

    fn check_vis(&self, v: usize) -> Result<()> {
        if v >= self.n_vis() {
            return Err(Error::validation(format!("chart index {v} out of range")));
        }
        Ok(())
    }

    /// Linked parameters of `who` for chart `vis` in every draw.
    pub fn linked(&self, vis: usize, who: &Who) -> Result<Vec<LinkedParams>> {
        self.check_vis(vis)?;
        let who = self.resolve(who)?;
        Ok((0..self.n_draws())
            .map(|d| link_with_offsets(&self.draws[d], &self.config, vis, &self.offsets(d, &who)))
            .collect())
    }
}

enum ResolvedWho {
    Average,
    Participant(usize),
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::validation("error grid must be nonempty and strictly increasing"));
    }
    if grid.iter().any(|e| !(0.0..1.0).contains(e)) {
        return Err(Error::validation("error grid must lie within [0, 1)"));
    }
    Ok(())
}

/// Pointwise bands over an error grid, plus the per-draw curves behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    pub grid: Vec<f64>,
    /// `per_draw[d][g]`.
    pub per_draw: Vec<Vec<f64>>,
    pub bands: Vec<IntervalSummary>,
}

impl CdfEstimate {
    fn from_curves(grid: &[f64], per_draw: Vec<Vec<f64>>) -> Self {
        let bands = (0..grid.len())
            .map(|g| IntervalSummary::from_samples(&per_draw.iter().map(|c| c[g]).collect::<Vec<_>>()))
            .collect();
        CdfEstimate { grid: grid.to_vec(), per_draw, bands }
    }
}

/// Posterior predictive CDF of the absolute error for one chart.
pub fn predictive_cdf(post: &Posterior, vis: usize, grid: &[f64], who: &Who) -> Result<CdfEstimate> {
    check_grid(grid)?;
    let linked = post.linked(vis, who)?;
    let curves = linked
        .par_iter()
        .map(|&lp| grid.iter().map(|&e| zib_cdf(lp, e)).collect())
        .collect();
    Ok(CdfEstimate::from_curves(grid, curves))
}

/// `CDF_a(e) - CDF_b(e)` per draw for the average participant.
pub fn cdf_difference(post: &Posterior, vis_a: usize, vis_b: usize, grid: &[f64]) -> Result<CdfEstimate> {
    let a = predictive_cdf(post, vis_a, grid, &Who::AverageParticipant)?;
    let b = predictive_cdf(post, vis_b, grid, &Who::AverageParticipant)?;
    let curves = a
        .per_draw
        .iter()
        .zip(&b.per_draw)
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x - y).collect())
        .collect();
    Ok(CdfEstimate::from_curves(grid, curves))
}

/// People simulated from one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPopulation {
    pub n_people: usize,
    /// `offsets[person]`, stacked like the model's offsets.
    pub offsets: Vec<Vec<f64>>,
    /// `expected_error[person][vis]`.
    pub expected_error: Vec<Vec<f64>>,
}

/// Draws `n_people` offset vectors from `MVN(0, diag(sigma) C diag(sigma))`
/// and evaluates every person's expected error per chart.
pub fn simulate_population<R: Rng + ?Sized>(
    params: &ParamVector,
    config: &ModelConfig,
    n_people: usize,
    rng: &mut R,
) -> Result<SimulatedPopulation> {
    let k = params.n_offsets();
    if params.corr_chol.len() != k * k {
        return Err(Error::Domain("offset covariance cannot be reconstructed".into()));
    }
    for i in 0..k {
        let d = params.chol(i, i);
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Domain("correlation Cholesky factor is not positive definite".into()));
        }
    }
    let mut offsets = Vec::with_capacity(n_people);
    let mut expected = Vec::with_capacity(n_people);
    let mut z = vec![0.0; k];
    for _ in 0..n_people {
        z.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        let u = offsets_from(&params.sigma, &params.corr_chol, &z);
        expected.push(
            (0..config.n_vis)
                .map(|v| expected_abs_error(link_with_offsets(params, config, v, &u)))
                .collect(),
        );
        offsets.push(u);
    }
    Ok(SimulatedPopulation { n_people, offsets, expected_error: expected })
}

/// Runs `f` on a fresh population for every draw, in parallel, with the
/// population of draw `d` seeded by `(seed, d)`.
pub(crate) fn per_draw_population<T, F>(post: &Posterior, n_people: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&SimulatedPopulation) -> T + Sync,
{
    (0..post.n_draws())
        .into_par_iter()
        .map(|d| {
            let mut rng = indexed_rng(seed, d as u64);
            let pop = simulate_population(&post.draws[d], &post.config, n_people, &mut rng)?;
            Ok(f(&pop))
        })
        .collect()
}

/// Sample SD, shifted by the first value so identical inputs give exactly 0.
fn sample_sd(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    let n = xs.len() as f64;
    let m = xs.iter().map(|x| x - x0).sum::<f64>() / n;
    (xs.iter().map(|x| (x - x0 - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Posterior of the SD across people of expected error, per chart.
#[derive(Debug, Clone, PartialEq)]
pub struct BetweenPersonSd {
    pub vis_labels: Vec<String>,
    /// `per_draw[d][vis]`, as fractions.
    pub per_draw: Vec<Vec<f64>>,
    /// Per chart, in percentage points.
    pub summary_pp: Vec<IntervalSummary>,
}

pub fn between_person_sd(post: &Posterior, n_people: usize, seed: u64) -> Result<BetweenPersonSd> {
    if n_people < 2 {
        return Err(Error::validation("between-person SD needs at least two simulated people"));
    }
    let v = post.n_vis();
    let per_draw = per_draw_population(post, n_people, seed, |pop| {
        (0..v)
            .map(|j| sample_sd(&pop.expected_error.iter().map(|e| e[j]).collect::<Vec<_>>()))
            .collect::<Vec<f64>>()
    })?;
    let summary_pp = (0..v)
        .map(|j| IntervalSummary::from_samples(&per_draw.iter().map(|d| d[j]).collect::<Vec<_>>()).scaled(100.0))
        .collect();
    Ok(BetweenPersonSd { vis_labels: post.config.vis_labels.clone(), per_draw, summary_pp })
}

/// One entry of a submodel's correlation block.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSummary {
    pub submodel: Submodel,
    pub vis_a: usize,
    pub vis_b: usize,
    pub per_draw: Vec<f64>,
    pub summary: IntervalSummary,
}

/// The V x V block of the offset correlation matrix for one submodel, every
/// ordered pair including the diagonal.
pub fn offset_correlations(post: &Posterior, submodel: Submodel) -> Result<Vec<CorrelationSummary>> {
    let v = post.n_vis();
    let Some(base) = offset_index(&post.config, submodel, 0) else {
        return Err(Error::validation(format!(
            "the {} submodel has no random offsets in this model",
            submodel.label()
        )));
    };
    let k = post.config.n_offsets();
    let mats: Vec<Vec<f64>> = post.draws.iter().map(|d| d.correlation()).collect();
    let mut out = Vec::with_capacity(v * v);
    for a in 0..v {
        for b in 0..v {
            let per_draw: Vec<f64> = mats
                .iter()
                .map(|c| if a == b { 1.0 } else { c[(base + a) * k + base + b] })
                .collect();
            let summary = IntervalSummary::from_samples(&per_draw);
            out.push(CorrelationSummary { submodel, vis_a: a, vis_b: b, per_draw, summary });
        }
    }
    Ok(out)
}

/// Expected error per chart for `who`, per draw: `[draw][vis]`.
pub fn expected_error_draws(post: &Posterior, who: &Who) -> Result<Vec<Vec<f64>>> {
    let per_vis = (0..post.n_vis())
        .map(|v| post.linked(v, who))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..post.n_draws())
        .map(|d| per_vis.iter().map(|lp| expected_abs_error(lp[d])).collect())
        .collect())
}

/// Assessment of one person: model-expected error per chart and the
/// posterior probability of each personal ranking of the charts.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantScore {
    pub participant_id: String,
    /// Per chart, in percentage points.
    pub expected_pp: Vec<IntervalSummary>,
    /// Per chart mean of the person's observed errors, in percentage points;
    /// `None` when no data were supplied for that chart.
    pub empirical_mean_pp: Vec<Option<f64>>,
    /// `(ordering, probability)`, orderings as chart indices best first.
    pub ranking_probabilities: Vec<(Vec<usize>, f64)>,
}

/// Scores `who`. `observed` holds that person's observed absolute errors as
/// `(vis, value)` pairs and only feeds the empirical means.
pub fn score(post: &Posterior, who: &Who, observed: &[(usize, f64)]) -> Result<ParticipantScore> {
    let v = post.n_vis();
    let draws = expected_error_draws(post, who)?;
    let expected_pp = (0..v)
        .map(|j| IntervalSummary::from_samples(&draws.iter().map(|d| d[j]).collect::<Vec<_>>()).scaled(100.0))
        .collect();
    let empirical_mean_pp = (0..v)
        .map(|j| {
            let xs: Vec<f64> = observed.iter().filter(|o| o.0 == j).map(|o| o.1).collect();
            (!xs.is_empty()).then(|| 100.0 * xs.iter().sum::<f64>() / xs.len() as f64)
        })
        .collect();
    let mut counts = vec![0usize; ranking::factorial(v)];
    for d in &draws {
        counts[ranking::ordering_index(&ranking::rank_charts(d))] += 1;
    }
    let perms = ranking::permutations(v);
    let n = draws.len() as f64;
    let ranking_probabilities = perms.into_iter().zip(counts).map(|(p, c)| (p, c as f64 / n)).collect();
    let participant_id = match who {
        Who::AverageParticipant => "average".to_string(),
        Who::Participant(id) => id.clone(),
    };
    Ok(ParticipantScore { participant_id, expected_pp, empirical_mean_pp, ranking_probabilities })
}

/// [`score`] for a fitted participant by id.
pub fn score_participant(post: &Posterior, participant_id: &str, observed: &[(usize, f64)]) -> Result<ParticipantScore> {
    score(post, &Who::Participant(participant_id.to_string()), observed)
}
