//! Cleveland & McGill style replication analysis: adjusted log error, per-cell
//! averaging over repetitions, midmeans per (chart, proportion) cell, and a
//! participant-level bootstrap of the per-chart means of midmeans.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Phase, ResponseRecord, VisType};
use crate::error::{Error, Result};
use crate::rng::indexed_rng;
use crate::stats::{mean, quantile_sorted, sort_floats};
use crate::stimulus::{proportion_set, StudyDesign};

/// `log2(|judged - true| + 1/8)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogError(pub f64);

pub fn log_abs_error(judged_percent: u8, true_proportion: u8) -> LogError {
    let diff = f64::from(judged_percent.abs_diff(true_proportion));
    LogError((diff + 0.125).log2())
}

/// Mean of the central half: sort, drop `floor(n/4)` values from each end,
/// average the rest.
pub fn midmean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::validation("midmean of an empty list"));
    }
    let mut v = values.to_vec();
    sort_floats(&mut v);
    let trim = v.len() / 4;
    Ok(mean(&v[trim..v.len() - trim]))
}

/// Per-participant mean log error in each (chart, proportion) cell.
#[derive(Debug, Clone)]
pub struct CellTable {
    participants: Vec<String>,
    proportions: Vec<u8>,
    /// `cells[participant][vis * n_props + prop]`
    cells: Vec<Vec<f64>>,
}

impl CellTable {
    /// Averages the per-trial log errors of every main-phase response within
    /// its (participant, chart, proportion) cell. Every participant must have
    /// at least one response in all 80 cells.
    pub fn build(responses: &[ResponseRecord], design: &StudyDesign) -> Result<Self> {
        let proportions = proportion_set();
        let n_cells = VisType::ALL.len() * proportions.len();
        let prop_slot = |p: u8| proportions.iter().position(|&q| q == p);

        let mut sums: BTreeMap<&str, Vec<(f64, usize)>> = BTreeMap::new();
        for r in responses {
            let trial = design.trial(r.trial_index).ok_or_else(|| {
                Error::validation(format!("response references unknown trial {}", r.trial_index))
            })?;
            if trial.phase != Phase::Main {
                continue;
            }
            if trial.vis != r.vis || trial.true_proportion != r.true_proportion {
                return Err(Error::validation(format!(
                    "response for trial {} disagrees with the design ({} {}% vs {} {}%)",
                    r.trial_index, r.vis, r.true_proportion, trial.vis, trial.true_proportion
                )));
            }
            let slot = prop_slot(r.true_proportion).ok_or_else(|| {
                Error::validation(format!("proportion {} is not in the design", r.true_proportion))
            })?;
            let cell = r.vis.index() * proportions.len() + slot;
            let entry = sums
                .entry(r.participant_id.as_str())
                .or_insert_with(|| vec![(0.0, 0); n_cells]);
            entry[cell].0 += log_abs_error(r.judged_percent, r.true_proportion).0;
            entry[cell].1 += 1;
        }

        let mut missing = Vec::new();
        let mut participants = Vec::with_capacity(sums.len());
        let mut cells = Vec::with_capacity(sums.len());
        for (id, acc) in sums {
            let mut row = Vec::with_capacity(n_cells);
            for (c, &(s, n)) in acc.iter().enumerate() {
                if n == 0 {
                    let vis = VisType::ALL[c / proportions.len()];
                    missing.push(format!("{id}/{vis}/{}", proportions[c % proportions.len()]));
                    row.push(f64::NAN);
                } else {
                    row.push(s / n as f64);
                }
            }
            participants.push(id.to_string());
            cells.push(row);
        }
        if !missing.is_empty() {
            return Err(Error::MissingCells(missing));
        }
        if participants.is_empty() {
            return Err(Error::validation("no main-phase responses"));
        }
        Ok(CellTable {
            participants,
            proportions,
            cells,
        })
    }

    pub fn participants(&self) -> &[String] {
        &self.participants
    }

    /// Means of midmeans per chart for the participant multiset `sample`
    /// (indices into [`CellTable::participants`], repeats allowed).
    pub fn means_of_midmeans(&self, sample: &[usize]) -> [f64; 4] {
        let n_props = self.proportions.len();
        let mut column = Vec::with_capacity(sample.len());
        let mut out = [0.0; 4];
        for vis in VisType::ALL {
            let mut acc = 0.0;
            for prop in 0..n_props {
                let cell = vis.index() * n_props + prop;
                column.clear();
                column.extend(sample.iter().map(|&p| self.cells[p][cell]));
                acc += midmean(&column).expect("sample is nonempty");
            }
            out[vis.index()] = acc / n_props as f64;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisEstimate {
    pub vis: VisType,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub per_vis: Vec<VisEstimate>,
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapResult {
    pub fn get(&self, vis: VisType) -> &VisEstimate {
        &self.per_vis[vis.index()]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vis", "estimate_log2", "ci_low", "ci_high", "B", "seed"])?;
        for e in &self.per_vis {
            w.write_record([
                e.vis.as_str().to_string(),
                format!("{:.6}", e.estimate),
                format!("{:.6}", e.ci_low),
                format!("{:.6}", e.ci_high),
                self.replicates.to_string(),
                self.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }
}

/// Bootstraps the means of midmeans: `replicates` resamples of whole
/// participants with replacement, 95% percentile intervals.
pub fn cm_pipeline(
    responses: &[ResponseRecord],
    design: &StudyDesign,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if replicates == 0 {
        return Err(Error::validation("bootstrap needs at least one replicate"));
    }
    let table = CellTable::build(responses, design)?;
    Ok(bootstrap_table(&table, replicates, seed))
}

pub fn bootstrap_table(table: &CellTable, replicates: usize, seed: u64) -> BootstrapResult {
    let n = table.participants().len();
    let reps: Vec<[f64; 4]> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = indexed_rng(seed, b as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            table.means_of_midmeans(&sample)
        })
        .collect();
    summarize_replicates(&reps, seed)
}

/// As [`bootstrap_table`] with caller-chosen resamples, one per replicate.
/// A single identity resample gives the plain means of midmeans.
pub fn bootstrap_with_resamples(table: &CellTable, resamples: &[Vec<usize>], seed: u64) -> Result<BootstrapResult> {
    let n = table.participants().len();
    if resamples.is_empty() || resamples.iter().any(|r| r.is_empty() || r.iter().any(|&p| p >= n)) {
        return Err(Error::validation("resamples must be nonempty and index existing participants"));
    }
    let reps: Vec<[f64; 4]> = resamples.iter().map(|r| table.means_of_midmeans(r)).collect();
    Ok(summarize_replicates(&reps, seed))
}

fn summarize_replicates(reps: &[[f64; 4]], seed: u64) -> BootstrapResult {
    let per_vis = VisType::ALL
        .iter()
        .map(|&vis| {
            let mut xs: Vec<f64> = reps.iter().map(|r| r[vis.index()]).collect();
            // Shifted so identical replicates average to exactly their value.
            let x0 = xs[0];
            let estimate = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64;
            sort_floats(&mut xs);
            VisEstimate {
                vis,
                estimate,
                ci_low: quantile_sorted(&xs, 0.025),
                ci_high: quantile_sorted(&xs, 0.975),
            }
        })
        .collect();
    BootstrapResult {
        per_vis,
        replicates: reps.len(),
        seed,
    }
}
