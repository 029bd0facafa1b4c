use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use rand::Rng;
use visperf_core::classical::*;
use visperf_core::domain::{Phase, ResponseRecord, VisType};
use visperf_core::rng::stream_rng;
use visperf_core::stimulus::{generate_design, StudyDesign};

/// Main-phase responses whose error in points for (participant, chart) is
/// drawn uniformly from `0..=max_err(participant, vis)`.
fn responses(design: &StudyDesign, n_people: usize, seed: u64, max_err: impl Fn(usize, VisType) -> u8) -> Vec<ResponseRecord> {
    let mut rng = stream_rng(seed, 0);
    let at = Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap();
    let mut out = Vec::new();
    for p in 0..n_people {
        for t in design.trials.iter().filter(|t| t.phase == Phase::Main) {
            let e = rng.random_range(0..=max_err(p, t.vis)) as i32;
            let tp = i32::from(t.true_proportion);
            let j = if tp + e <= 100 { tp + e } else { tp - e };
            out.push(ResponseRecord {
                participant_id: format!("q{p:03}"),
                trial_index: t.trial_index,
                vis: t.vis,
                true_proportion: t.true_proportion,
                judged_percent: j.clamp(1, 100) as u8,
                response_time_ms: 2000,
                submitted_at: at,
            });
        }
    }
    out
}

/// Straightforward means of midmeans over all participants, written from
/// the definition without the library's cell table.
fn brute_force(responses: &[ResponseRecord]) -> BTreeMap<VisType, f64> {
    let mut cells: BTreeMap<(String, VisType, u8), Vec<f64>> = BTreeMap::new();
    for r in responses {
        let d = (i32::from(r.judged_percent) - i32::from(r.true_proportion)).abs() as f64;
        cells
            .entry((r.participant_id.clone(), r.vis, r.true_proportion))
            .or_default()
            .push((d + 0.125).ln() / 2f64.ln());
    }
    let mut per_condition: BTreeMap<(VisType, u8), Vec<f64>> = BTreeMap::new();
    for ((_, vis, prop), errs) in cells {
        let m = errs.iter().sum::<f64>() / errs.len() as f64;
        per_condition.entry((vis, prop)).or_default().push(m);
    }
    let mut per_vis: BTreeMap<VisType, Vec<f64>> = BTreeMap::new();
    for ((vis, _), mut xs) in per_condition {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = xs.len() / 4;
        let kept = &xs[k..xs.len() - k];
        per_vis.entry(vis).or_default().push(kept.iter().sum::<f64>() / kept.len() as f64);
    }
    per_vis.into_iter().map(|(v, m)| (v, m.iter().sum::<f64>() / m.len() as f64)).collect()
}

#[test]
fn identity_resample_matches_brute_force() {
    let design = generate_design(3);
    let rows = responses(&design, 13, 1, |p, v| 3 + (p as u8 % 5) * 4 + v.index() as u8 * 3);
    let table = CellTable::build(&rows, &design).unwrap();
    let identity: Vec<usize> = (0..13).collect();
    let result = bootstrap_with_resamples(&table, &[identity], 0).unwrap();
    assert_eq!(result.replicates, 1);
    let oracle = brute_force(&rows);
    for vis in VisType::ALL {
        let e = result.get(vis);
        assert!((e.estimate - oracle[&vis]).abs() < 1e-10, "{vis}");
        assert_eq!(e.ci_low, e.estimate);
        assert_eq!(e.ci_high, e.estimate);
    }
}

#[test]
fn midmean_hand_values() {
    assert_eq!(midmean(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap(), 4.5);
    assert_eq!(midmean(&[2.75; 4]).unwrap(), 2.75);
    assert_eq!(midmean(&[10.0, 20.0, 30.0, 40.0]).unwrap(), 25.0);
    assert!(midmean(&[]).is_err());
}

#[test]
fn thousand_replicates() {
    let design = generate_design(5);
    let rows = responses(&design, 20, 2, |_, _| 10);
    let r = cm_pipeline(&rows, &design, 1000, 9).unwrap();
    assert_eq!(r.replicates, 1000);
    for e in &r.per_vis {
        assert!(e.ci_low <= e.estimate && e.estimate <= e.ci_high);
    }
    assert_eq!(r, cm_pipeline(&rows, &design, 1000, 9).unwrap());
}

#[test]
fn single_participant_has_no_spread() {
    let design = generate_design(5);
    let rows = responses(&design, 1, 4, |_, _| 12);
    let r = cm_pipeline(&rows, &design, 50, 1).unwrap();
    for e in &r.per_vis {
        assert_eq!(e.ci_low, e.estimate);
        assert_eq!(e.ci_high, e.estimate);
    }
}

#[test]
fn ordered_error_distributions_are_ranked() {
    let design = generate_design(8);
    // Bar errors are at most 4 points, bubble errors at least as spread as 20.
    let rows = responses(&design, 15, 6, |_, v| match v {
        VisType::Bar => 4,
        VisType::Pie => 8,
        VisType::StackedBar => 12,
        VisType::Bubble => 20,
    });
    let r = cm_pipeline(&rows, &design, 200, 2).unwrap();
    let oracle = brute_force(&rows);
    assert!(r.get(VisType::Bar).estimate < r.get(VisType::Bubble).estimate);
    assert!(oracle[&VisType::Bar] < oracle[&VisType::Bubble]);
    for w in VisType::ALL.windows(2) {
        assert!(r.get(w[0]).estimate < r.get(w[1]).estimate);
        assert!(oracle[&w[0]] < oracle[&w[1]]);
    }
}

#[test]
fn missing_cells_are_listed() {
    let design = generate_design(5);
    let mut rows = responses(&design, 2, 4, |_, _| 5);
    rows.retain(|r| !(r.participant_id == "q001" && r.vis == VisType::Pie && r.true_proportion == 35));
    let err = cm_pipeline(&rows, &design, 10, 1).unwrap_err().to_string();
    assert!(err.contains("q001/pie/35"), "{err}");
}

/// Percentile intervals widen as people differ more, averaged over seeds.
#[test]
fn interval_widens_with_between_person_variance() {
    let design = generate_design(2);
    let width = |spread: u8| {
        (0..5)
            .map(|s| {
                let rows = responses(&design, 12, 100 + s, |p, _| 5 + spread * (p as u8 % 4));
                let r = cm_pipeline(&rows, &design, 200, s).unwrap();
                r.per_vis.iter().map(|e| e.ci_high - e.ci_low).sum::<f64>()
            })
            .sum::<f64>()
    };
    let (narrow, wide) = (width(0), width(6));
    assert!(narrow < wide, "{narrow} vs {wide}");
}
