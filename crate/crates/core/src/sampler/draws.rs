//! Post-warmup draws keyed by (chain, iteration, parameter), with CSV I/O.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::diagnostics::{ess_bulk, ess_tail, split_rhat, Diagnostics, ParamDiagnostics, DIVERGENCE_WARNING_RATE};
use super::ChainOutput;
use crate::error::{Error, Result};

pub const DRAWS_HEADER: [&str; 4] = ["chain", "iteration", "parameter", "value"];

/// Natural-scale draws. `values` is chain-major: chain, then iteration, then
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub n_chains: usize,
    pub n_iter: usize,
    pub values: Vec<f64>,
    /// `divergent[chain][iteration]`.
    pub divergent: Vec<Vec<bool>>,
    pub step_size: Vec<f64>,
    pub inv_metric: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    /// Maps every kept unconstrained position through `transform` to the
    /// values named by `names`.
    pub fn from_chains<F>(names: Vec<String>, chains: &[ChainOutput], transform: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let n_chains = chains.len();
        let n_iter = chains.first().map_or(0, |c| c.draws.len());
        if chains.iter().any(|c| c.draws.len() != n_iter) {
            return Err(Error::validation("chains have different lengths"));
        }
        let mut values = Vec::with_capacity(n_chains * n_iter * names.len());
        for c in chains {
            for q in &c.draws {
                let row = transform(q);
                if row.len() != names.len() {
                    return Err(Error::validation("transform returned the wrong number of values"));
                }
                if row.iter().any(|v| v.is_nan()) {
                    return Err(Error::Domain("a posterior draw contains NaN".into()));
                }
                values.extend(row);
            }
        }
        Ok(PosteriorDraws {
            names,
            n_chains,
            n_iter,
            values,
            divergent: chains.iter().map(|c| c.divergent.clone()).collect(),
            step_size: chains.iter().map(|c| c.step_size).collect(),
            inv_metric: chains.iter().map(|c| c.inv_metric.clone()).collect(),
        })
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.n_chains * self.n_iter
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, chain: usize, iter: usize, param: usize) -> f64 {
        self.values[(chain * self.n_iter + iter) * self.n_params() + param]
    }

    /// Draw `d` of the pooled sample (chain-major order).
    pub fn draw(&self, d: usize) -> &[f64] {
        let p = self.n_params();
        &self.values[d * p..(d + 1) * p]
    }

    /// `[chain][iteration]` values of one parameter.
    pub fn chains_of(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_iter).map(|i| self.get(c, i, param)).collect())
            .collect()
    }

    pub fn pooled(&self, param: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|d| self.draw(d)[param]).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DRAWS_HEADER)?;
        for c in 0..self.n_chains {
            for i in 0..self.n_iter {
                for (p, name) in self.names.iter().enumerate() {
                    w.write_record([
                        (c + 1).to_string(),
                        (i + 1).to_string(),
                        name.clone(),
                        self.get(c, i, p).to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("<draws>", e))?;
        Ok(())
    }

    /// Reads `chain,iteration,parameter,value`. Sampler metadata (divergences,
    /// step sizes, metric) is not part of the CSV and comes back empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != DRAWS_HEADER {
            return Err(Error::Parse {
                row: 1,
                column: "header".into(),
                message: format!("expected `{}`", DRAWS_HEADER.join(",")),
            });
        }
        let mut names: Vec<String> = Vec::new();
        let mut name_idx: HashMap<String, usize> = HashMap::new();
        let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let parse_idx = |k: usize| -> Result<usize> {
                field(k)
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::Parse { row, column: DRAWS_HEADER[k].into(), message: "expected a positive integer".into() })
            };
            let chain = parse_idx(0)? - 1;
            let iter = parse_idx(1)? - 1;
            let name = field(2).to_string();
            let value: f64 = field(3)
                .parse()
                .map_err(|_| Error::Parse { row, column: "value".into(), message: format!("bad number `{}`", field(3)) })?;
            let p = *name_idx.entry(name.clone()).or_insert_with(|| {
                names.push(name);
                names.len() - 1
            });
            rows.push((chain, iter, p, value));
        }
        let n_chains = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n_iter = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let n_params = names.len();
        if rows.len() != n_chains * n_iter * n_params {
            return Err(Error::validation("draws file is not a complete chain x iteration x parameter grid"));
        }
        let mut values = vec![f64::NAN; rows.len()];
        for (c, i, p, v) in rows {
            values[(c * n_iter + i) * n_params + p] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::validation("draws file has duplicate or missing entries"));
        }
        Ok(PosteriorDraws {
            names,
            n_chains,
            n_iter,
            values,
            divergent: vec![vec![false; n_iter]; n_chains],
            step_size: Vec::new(),
            inv_metric: Vec::new(),
        })
    }

    /// R-hat and ESS for every parameter, plus divergence bookkeeping.
    pub fn diagnostics(&self) -> Result<Diagnostics> {
        let mut params = std::collections::BTreeMap::new();
        for (p, name) in self.names.iter().enumerate() {
            let chains = self.chains_of(p);
            let d = if self.n_chains >= 2 && self.n_iter >= 4 {
                ParamDiagnostics {
                    rhat: split_rhat(&chains)?,
                    ess_bulk: ess_bulk(&chains)?,
                    ess_tail: ess_tail(&chains)?,
                }
            } else {
                ParamDiagnostics { rhat: None, ess_bulk: None, ess_tail: None }
            };
            params.insert(name.clone(), d);
        }
        let per_chain: Vec<usize> = self.divergent.iter().map(|c| c.iter().filter(|&&d| d).count()).collect();
        let total: usize = per_chain.iter().sum();
        let rate = if self.n_draws() > 0 { total as f64 / self.n_draws() as f64 } else { 0.0 };
        let mut warnings = Vec::new();
        if rate > DIVERGENCE_WARNING_RATE {
            warnings.push(format!(
                "WARNING: {:.1}% of post-warmup transitions diverged; the posterior summaries are unreliable",
                100.0 * rate
            ));
        }
        Ok(Diagnostics { params, divergences_per_chain: per_chain, divergence_rate: rate, warnings })
    }
}
