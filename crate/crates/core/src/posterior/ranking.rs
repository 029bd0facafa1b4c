//! Distribution of personal chart rankings over simulated populations.

use super::{per_draw_population, Posterior};
use crate::error::{Error, Result};
use crate::stats::IntervalSummary;

/// Rankings are enumerated only up to this many charts.
pub const MAX_RANKED_CHARTS: usize = 5;

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// All orderings of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(factorial(n));
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot has a successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Lexicographic index of an ordering (its Lehmer code).
pub fn ordering_index(order: &[usize]) -> usize {
    let n = order.len();
    let mut idx = 0;
    for i in 0..n {
        let smaller_later = order[i + 1..].iter().filter(|&&x| x < order[i]).count();
        idx += smaller_later * factorial(n - 1 - i);
    }
    idx
}

/// Charts sorted from lowest to highest expected error; ties keep chart
/// order.
pub fn rank_charts(errors: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
    order
}

/// `bar<pie<stacked_bar<bubble` style label.
pub fn ranking_label(order: &[usize], labels: &[String]) -> String {
    order.iter().map(|&v| labels[v].as_str()).collect::<Vec<_>>().join("<")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingDistribution {
    /// Every ordering, best chart first, lexicographic.
    pub orderings: Vec<Vec<usize>>,
    pub labels: Vec<String>,
    /// `per_draw[d][ordering]`: share of the simulated population.
    pub per_draw: Vec<Vec<f64>>,
    pub summary: Vec<IntervalSummary>,
}

/// Per draw, simulates `n_people` people and tallies the share holding each
/// ranking of the charts by expected error.
pub fn ranking_distribution(post: &Posterior, n_people: usize, seed: u64) -> Result<RankingDistribution> {
    let v = post.n_vis();
    if v > MAX_RANKED_CHARTS {
        return Err(Error::Unsupported(format!(
            "ranking {v} charts means {} orderings; at most {MAX_RANKED_CHARTS} charts are supported",
            factorial(v)
        )));
    }
    if n_people == 0 {
        return Err(Error::validation("rankings need at least one simulated person"));
    }
    let n_orders = factorial(v);
    let per_draw = per_draw_population(post, n_people, seed, |pop| {
        let mut counts = vec![0usize; n_orders];
        for e in &pop.expected_error {
            counts[ordering_index(&rank_charts(e))] += 1;
        }
        counts.into_iter().map(|c| c as f64 / n_people as f64).collect::<Vec<f64>>()
    })?;
    let orderings = permutations(v);
    let labels = orderings.iter().map(|o| ranking_label(o, &post.config.vis_labels)).collect();
    let summary = (0..n_orders)
        .map(|o| IntervalSummary::from_samples(&per_draw.iter().map(|d| d[o]).collect::<Vec<_>>()))
        .collect();
    Ok(RankingDistribution { orderings, labels, per_draw, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn enumerates_all_orderings() {
        let p = permutations(4);
        assert_eq!(p.len(), 24);
        assert_eq!(p[0], vec![0, 1, 2, 3]);
        assert_eq!(p[23], vec![3, 2, 1, 0]);
        for (i, o) in p.iter().enumerate() {
            assert_eq!(ordering_index(o), i);
        }
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn ties_follow_chart_order() {
        assert_eq!(rank_charts(&[0.1, 0.1, 0.05, 0.1]), vec![2, 0, 1, 3]);
    }

    proptest! {
        #[test]
        fn ranking_sorts(errors in proptest::collection::vec(0.0f64..1.0, 1..6)) {
            let order = rank_charts(&errors);
            for w in order.windows(2) {
                prop_assert!(errors[w[0]] <= errors[w[1]]);
            }
        }
    }
}
