//! CSV tables for posterior summaries. Numbers use the shortest
//! representation that reads back to the same value.

use std::io::Write;

use super::{BetweenPersonSd, CdfEstimate, CorrelationSummary, ParticipantScore, Posterior, RankingDistribution};
use crate::error::Result;
use crate::stats::IntervalSummary;

pub const CDF_HEADER: [&str; 7] = ["vis", "error", "median", "lo66", "hi66", "lo95", "hi95"];
pub const DIFF_HEADER: [&str; 8] = ["visA", "visB", "error", "median", "lo66", "hi66", "lo95", "hi95"];
pub const SD_HEADER: [&str; 6] = ["vis", "median_pp", "lo66_pp", "hi66_pp", "lo95_pp", "hi95_pp"];
pub const CORR_HEADER: [&str; 8] = ["submodel", "visA", "visB", "median", "lo66", "hi66", "lo95", "hi95"];
pub const RANK_HEADER: [&str; 6] = ["ranking", "median", "lo66", "hi66", "lo95", "hi95"];
pub const RANK_DRAWS_HEADER: [&str; 3] = ["draw", "ranking", "proportion"];
pub const SCORE_HEADER: [&str; 8] = [
    "participant_id",
    "vis",
    "median_pp",
    "lo66_pp",
    "hi66_pp",
    "lo95_pp",
    "hi95_pp",
    "empirical_mean_pp",
];
pub const SCORE_RANK_HEADER: [&str; 3] = ["participant_id", "ranking", "probability"];

fn bands(s: &IntervalSummary) -> [String; 5] {
    [s.median, s.lo66, s.hi66, s.lo95, s.hi95].map(|x| x.to_string())
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| crate::Error::io("<csv output>", e))
}

/// One block of rows per chart.
pub fn write_cdf<W: Write>(out: W, rows: &[(String, CdfEstimate)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CDF_HEADER)?;
    for (vis, est) in rows {
        for (e, s) in est.grid.iter().zip(&est.bands) {
            let mut rec = vec![vis.clone(), e.to_string()];
            rec.extend(bands(s));
            w.write_record(&rec)?;
        }
    }
    finish(w)
}

pub fn write_diff<W: Write>(out: W, rows: &[(String, String, CdfEstimate)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIFF_HEADER)?;
    for (a, b, est) in rows {
        for (e, s) in est.grid.iter().zip(&est.bands) {
            let mut rec = vec![a.clone(), b.clone(), e.to_string()];
            rec.extend(bands(s));
            w.write_record(&rec)?;
        }
    }
    finish(w)
}

pub fn write_sd<W: Write>(out: W, sd: &BetweenPersonSd) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SD_HEADER)?;
    for (vis, s) in sd.vis_labels.iter().zip(&sd.summary_pp) {
        let mut rec = vec![vis.clone()];
        rec.extend(bands(s));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn write_corr<W: Write>(out: W, post: &Posterior, rows: &[CorrelationSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CORR_HEADER)?;
    for r in rows {
        let mut rec = vec![
            r.submodel.label().to_string(),
            post.vis_label(r.vis_a).to_string(),
            post.vis_label(r.vis_b).to_string(),
        ];
        rec.extend(bands(&r.summary));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn write_rank<W: Write>(out: W, dist: &RankingDistribution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RANK_HEADER)?;
    for (label, s) in dist.labels.iter().zip(&dist.summary) {
        let mut rec = vec![label.clone()];
        rec.extend(bands(s));
        w.write_record(&rec)?;
    }
    finish(w)
}

/// Long format, 1-based draw index.
pub fn write_rank_draws<W: Write>(out: W, dist: &RankingDistribution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RANK_DRAWS_HEADER)?;
    for (d, props) in dist.per_draw.iter().enumerate() {
        for (label, p) in dist.labels.iter().zip(props) {
            w.write_record([(d + 1).to_string(), label.clone(), p.to_string()])?;
        }
    }
    finish(w)
}

/// `median_pp` .. `hi95_pp` summarize the model-expected error;
/// `empirical_mean_pp` is the plain mean of that person's observed errors,
/// blank when there are none.
pub fn write_scores<W: Write>(out: W, post: &Posterior, scores: &[ParticipantScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_HEADER)?;
    for s in scores {
        for (v, (m, e)) in s.expected_pp.iter().zip(&s.empirical_mean_pp).enumerate() {
            let mut rec = vec![s.participant_id.clone(), post.vis_label(v).to_string()];
            rec.extend(bands(m));
            rec.push(e.map(|x| x.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    finish(w)
}

pub fn write_score_rankings<W: Write>(out: W, post: &Posterior, scores: &[ParticipantScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_RANK_HEADER)?;
    for s in scores {
        for (order, p) in &s.ranking_probabilities {
            let label = super::ranking_label(order, &post.config.vis_labels);
            w.write_record([s.participant_id.clone(), label, p.to_string()])?;
        }
    }
    finish(w)
}
