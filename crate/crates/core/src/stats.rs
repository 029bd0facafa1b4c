//! Small descriptive-statistics helpers shared by the analysis modules.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with an `n - 1` denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Linear-interpolation quantile (Hyndman & Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sort_floats(xs: &mut [f64]) {
    xs.sort_by(f64::total_cmp);
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    sort_floats(&mut v);
    quantile_sorted(&v, q)
}

/// Median with central 66% and 95% intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub median: f64,
    pub lo66: f64,
    pub hi66: f64,
    pub lo95: f64,
    pub hi95: f64,
}

impl IntervalSummary {
    pub fn from_samples(xs: &[f64]) -> Self {
        let mut v = xs.to_vec();
        sort_floats(&mut v);
        IntervalSummary {
            median: quantile_sorted(&v, 0.5),
            lo66: quantile_sorted(&v, 0.17),
            hi66: quantile_sorted(&v, 0.83),
            lo95: quantile_sorted(&v, 0.025),
            hi95: quantile_sorted(&v, 0.975),
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        IntervalSummary {
            median: self.median * k,
            lo66: self.lo66 * k,
            hi66: self.hi66 * k,
            lo95: self.lo95 * k,
            hi95: self.hi95 * k,
        }
    }

    pub fn contains95(&self, x: f64) -> bool {
        self.lo95 <= x && x <= self.hi95
    }
}
