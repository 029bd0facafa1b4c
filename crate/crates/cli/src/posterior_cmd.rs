//! `analyze-posterior` and `score`.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use visperf_core::model::StudyData;
use visperf_core::posterior::output::{
    write_cdf, write_corr, write_diff, write_rank, write_rank_draws, write_score_rankings, write_scores, write_sd,
};
use visperf_core::posterior::{
    between_person_sd, cdf_difference, default_n_people, error_grid, offset_correlations, predictive_cdf,
    ranking_distribution, score_participant, Posterior, Who,
};
use visperf_core::records::load_responses;
use visperf_core::stimulus::StudyDesign;

use crate::commands::{load_fit, sibling, write_with, Ctx};
use crate::manifest::{beside, Recorder};
use crate::{PosteriorArgs, ScoreArgs, What};

pub fn analyze(ctx: &Ctx, a: &PosteriorArgs) -> Result<()> {
    let mut rec = ctx.recorder("analyze-posterior");
    let (_, post) = load_fit(&a.draws, &mut rec)?;
    let grid = error_grid();
    let n_people = a.n_people.unwrap_or_else(|| default_n_people(post.n_draws()));
    let labels = post.config.vis_labels.clone();
    match a.what {
        What::Cdf => {
            let who = match a.participants.as_slice() {
                [] => Who::AverageParticipant,
                [id] => Who::Participant(id.clone()),
                _ => bail!("--what cdf takes at most one --participant"),
            };
            let rows = (0..post.n_vis())
                .map(|v| Ok((labels[v].clone(), predictive_cdf(&post, v, &grid, &who)?)))
                .collect::<Result<Vec<_>>>()?;
            write_with(&a.out, |w| write_cdf(w, &rows))?;
        }
        What::Diff => {
            let mut rows = Vec::new();
            for va in 0..post.n_vis() {
                for vb in (0..post.n_vis()).filter(|&vb| vb != va) {
                    rows.push((labels[va].clone(), labels[vb].clone(), cdf_difference(&post, va, vb, &grid)?));
                }
            }
            write_with(&a.out, |w| write_diff(w, &rows))?;
        }
        What::Sd => {
            let sd = between_person_sd(&post, n_people, ctx.seed)?;
            write_with(&a.out, |w| write_sd(w, &sd))?;
        }
        What::Corr => {
            let mut rows = Vec::new();
            for s in post.config.random_effects.blocks() {
                rows.extend(offset_correlations(&post, s)?);
            }
            write_with(&a.out, |w| write_corr(w, &post, &rows))?;
        }
        What::Rank => {
            let dist = ranking_distribution(&post, n_people, ctx.seed)?;
            write_with(&a.out, |w| write_rank(w, &dist))?;
            let per_draw = sibling(&a.out, "_draws");
            write_with(&per_draw, |w| write_rank_draws(w, &dist))?;
            rec.output(per_draw);
        }
        What::Score => {
            let observed = observed_errors(a.responses.as_deref(), a.design.as_deref(), &mut rec)?;
            write_scores_files(&post, &a.participants, &observed, &a.out, &mut rec)?;
        }
    }
    rec.output(&a.out);
    let config = serde_json::json!({ "args": a, "n_people": n_people, "n_draws": post.n_draws() });
    rec.finish(&config, &beside(&a.out))
}

pub fn score(ctx: &Ctx, a: &ScoreArgs) -> Result<()> {
    let mut rec = ctx.recorder("score");
    let (_, post) = load_fit(&a.draws, &mut rec)?;
    let observed = observed_errors(a.responses.as_deref(), a.design.as_deref(), &mut rec)?;
    write_scores_files(&post, &a.participants, &observed, &a.out, &mut rec)?;
    rec.output(&a.out);
    rec.finish(a, &beside(&a.out))
}

type Observed = HashMap<String, Vec<(usize, f64)>>;

/// Main-phase `(vis, error)` pairs per participant id.
fn observed_errors(responses: Option<&Path>, design: Option<&Path>, rec: &mut Recorder) -> Result<Observed> {
    let (Some(responses), Some(design)) = (responses, design) else {
        return Ok(Observed::new());
    };
    let design_data = StudyDesign::load(design).with_context(|| format!("loading design {}", design.display()))?;
    let records = load_responses(responses).with_context(|| format!("loading responses {}", responses.display()))?;
    rec.input(design);
    rec.input(responses);
    let data = StudyData::from_responses(&records, &design_data)?;
    let mut out = Observed::new();
    for o in &data.observations {
        out.entry(data.participants[o.participant].clone()).or_default().push((o.vis, o.value));
    }
    Ok(out)
}

/// Scores plus a `<stem>_rankings` file of personal ranking probabilities.
fn write_scores_files(post: &Posterior, ids: &[String], observed: &Observed, out: &Path, rec: &mut Recorder) -> Result<()> {
    let ids: Vec<String> = if ids.is_empty() { post.participants.clone() } else { ids.to_vec() };
    let scores = ids
        .iter()
        .map(|id| score_participant(post, id, observed.get(id).map_or(&[][..], Vec::as_slice)))
        .collect::<visperf_core::Result<Vec<_>>>()?;
    write_with(out, |w| write_scores(w, post, &scores))?;
    let rankings = sibling(out, "_rankings");
    write_with(&rankings, |w| write_score_rankings(w, post, &scores))?;
    rec.output(rankings);
    Ok(())
}
