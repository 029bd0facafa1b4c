//! Shared value types: chart types, trials, participant responses, and the
//! attention-check exclusion rule.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stimulus::StudyDesign;

/// The four chart types under test, in canonical effectiveness order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisType {
    Bar,
    Pie,
    StackedBar,
    Bubble,
}

impl VisType {
    pub const ALL: [VisType; 4] = [
        VisType::Bar,
        VisType::Pie,
        VisType::StackedBar,
        VisType::Bubble,
    ];

    /// Stable 1-based code used in file formats.
    pub fn code(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    /// Zero-based position in [`VisType::ALL`].
    pub fn index(self) -> usize {
        match self {
            VisType::Bar => 0,
            VisType::Pie => 1,
            VisType::StackedBar => 2,
            VisType::Bubble => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VisType::Bar => "bar",
            VisType::Pie => "pie",
            VisType::StackedBar => "stacked_bar",
            VisType::Bubble => "bubble",
        }
    }

    /// Noun used for a single marked element in feedback text.
    pub fn element_noun(self) -> &'static str {
        match self {
            VisType::Bar => "bar",
            VisType::Pie => "slice",
            VisType::StackedBar => "segment",
            VisType::Bubble => "bubble",
        }
    }
}

impl fmt::Display for VisType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VisType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bar" => Ok(VisType::Bar),
            "pie" => Ok(VisType::Pie),
            "stacked_bar" => Ok(VisType::StackedBar),
            "bubble" => Ok(VisType::Bubble),
            other => Err(Error::validation(format!("unknown vis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Main,
}

/// One stimulus. `marked[0]` is the slot of the smaller comparison value and
/// `marked[1]` the slot of the larger one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_index: usize,
    pub phase: Phase,
    pub vis: VisType,
    pub true_proportion: u8,
    pub repetition: u8,
    pub values: [f64; 5],
    pub marked: [usize; 2],
}

impl Trial {
    pub fn smaller(&self) -> f64 {
        self.values[self.marked[0]]
    }

    pub fn larger(&self) -> f64 {
        self.values[self.marked[1]]
    }

    /// Ratio of the marked values; equals `true_proportion / 100`.
    pub fn marked_ratio(&self) -> f64 {
        self.smaller() / self.larger()
    }
}

/// One participant judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub participant_id: String,
    pub trial_index: usize,
    pub vis: VisType,
    pub true_proportion: u8,
    pub judged_percent: u8,
    pub response_time_ms: u64,
    pub submitted_at: DateTime<Utc>,
}

impl ResponseRecord {
    pub fn abs_error(&self) -> Result<AbsError> {
        abs_error(self.judged_percent, self.true_proportion)
    }

    /// Absolute error in percentage points.
    pub fn error_pp(&self) -> u8 {
        self.judged_percent.abs_diff(self.true_proportion)
    }
}

/// Absolute judgment error on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AbsError(f64);

impl AbsError {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn pp(self) -> f64 {
        self.0 * 100.0
    }
}

pub fn validate_judged(judged_percent: u8) -> Result<()> {
    if (1..=100).contains(&judged_percent) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "judged percent {judged_percent} outside [1, 100]"
        )))
    }
}

pub fn validate_true_proportion(true_proportion: u8) -> Result<()> {
    if (1..=99).contains(&true_proportion) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "true proportion {true_proportion} outside [1, 99]"
        )))
    }
}

/// `|judged - true| / 100`.
pub fn abs_error(judged_percent: u8, true_proportion: u8) -> Result<AbsError> {
    validate_judged(judged_percent)?;
    validate_true_proportion(true_proportion)?;
    Ok(AbsError(
        f64::from(judged_percent.abs_diff(true_proportion)) / 100.0,
    ))
}

/// True proportions used as attention checks.
pub const CHECK_PROPORTIONS: [u8; 2] = [5, 99];
/// Trials per check condition in a complete session (15 repetitions x 4 charts).
pub const CHECK_TRIALS_PER_CONDITION: usize = 60;
/// Errors strictly above this many percentage points count as extreme.
pub const EXTREME_ERROR_PP: u8 = 50;
/// A participant is excluded once either check condition reaches this count.
pub const EXCLUSION_THRESHOLD: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub participant_id: String,
    pub extreme_count_p5: usize,
    pub extreme_count_p99: usize,
    pub trials_p5: usize,
    pub trials_p99: usize,
    pub incomplete: bool,
    pub excluded: bool,
    pub threshold_used: usize,
}

/// Applies the attention-check rule to every participant present in
/// `responses`. Training-phase responses are ignored. Reports are ordered by
/// participant id.
pub fn apply_exclusions(responses: &[ResponseRecord], design: &StudyDesign) -> Vec<ExclusionReport> {
    #[derive(Default)]
    struct Tally {
        extreme: [usize; 2],
        trials: [usize; 2],
    }

    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    for r in responses {
        let tally = tallies.entry(r.participant_id.as_str()).or_default();
        let is_main = design
            .trial(r.trial_index)
            .is_some_and(|t| t.phase == Phase::Main);
        if !is_main {
            continue;
        }
        if let Some(slot) = CHECK_PROPORTIONS
            .iter()
            .position(|&p| p == r.true_proportion)
        {
            tally.trials[slot] += 1;
            if r.error_pp() > EXTREME_ERROR_PP {
                tally.extreme[slot] += 1;
            }
        }
    }

    tallies
        .into_iter()
        .map(|(id, t)| {
            let incomplete = t.trials.iter().any(|&n| n < CHECK_TRIALS_PER_CONDITION);
            let over = t.extreme.iter().any(|&n| n >= EXCLUSION_THRESHOLD);
            ExclusionReport {
                participant_id: id.to_string(),
                extreme_count_p5: t.extreme[0],
                extreme_count_p99: t.extreme[1],
                trials_p5: t.trials[0],
                trials_p99: t.trials[1],
                incomplete,
                excluded: over && !incomplete,
                threshold_used: EXCLUSION_THRESHOLD,
            }
        })
        .collect()
}

/// Drops every response belonging to an excluded participant.
pub fn retain_included(responses: Vec<ResponseRecord>, reports: &[ExclusionReport]) -> Vec<ResponseRecord> {
    let excluded: std::collections::HashSet<&str> = reports
        .iter()
        .filter(|r| r.excluded)
        .map(|r| r.participant_id.as_str())
        .collect();
    responses
        .into_iter()
        .filter(|r| !excluded.contains(r.participant_id.as_str()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::generate_design;
    use chrono::TimeZone;

    #[test]
    fn abs_error_examples() {
        assert_eq!(abs_error(50, 50).unwrap().value(), 0.0);
        assert!((abs_error(55, 50).unwrap().value() - 0.05).abs() < 1e-15);
        assert!((abs_error(100, 5).unwrap().value() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn abs_error_rejects_out_of_range_judgment() {
        assert!(matches!(abs_error(0, 50), Err(Error::Validation(_))));
        assert!(matches!(abs_error(101, 50), Err(Error::Validation(_))));
    }

    #[test]
    fn vis_codes_are_stable() {
        for (i, v) in VisType::ALL.iter().enumerate() {
            assert_eq!(v.code() as usize, i + 1);
            assert_eq!(VisType::from_code(v.code()), Some(*v));
            assert_eq!(v.as_str().parse::<VisType>().unwrap(), *v);
        }
        assert_eq!(VisType::from_code(0), None);
        assert_eq!(VisType::from_code(5), None);
    }

    /// Builds a full set of main-phase responses for one participant where
    /// `extreme_p5` / `extreme_p99` check trials are answered with an error
    /// above 50pp and every other trial is answered exactly.
    fn participant(design: &StudyDesign, id: &str, extreme_p5: usize, extreme_p99: usize) -> Vec<ResponseRecord> {
        let at = Utc.with_ymd_and_hms(2021, 3, 1, 12, 0, 0).unwrap();
        let mut left = [extreme_p5, extreme_p99];
        design
            .main_trials()
            .map(|t| {
                let slot = CHECK_PROPORTIONS.iter().position(|&p| p == t.true_proportion);
                let judged = match slot {
                    Some(s) if left[s] > 0 => {
                        left[s] -= 1;
                        if t.true_proportion == 5 { 80 } else { 10 }
                    }
                    _ => t.true_proportion,
                };
                ResponseRecord {
                    participant_id: id.into(),
                    trial_index: t.trial_index,
                    vis: t.vis,
                    true_proportion: t.true_proportion,
                    judged_percent: judged,
                    response_time_ms: 1000,
                    submitted_at: at,
                }
            })
            .collect()
    }

    #[test]
    fn exclusion_boundaries() {
        let design = generate_design(1);
        let mut all = participant(&design, "a", 16, 0);
        all.extend(participant(&design, "b", 15, 15));
        all.extend(participant(&design, "c", 0, 0));
        let reports = apply_exclusions(&all, &design);
        assert_eq!(reports.len(), 3);
        assert!(reports[0].excluded);
        assert_eq!(reports[0].extreme_count_p5, 16);
        assert!(!reports[1].excluded);
        assert_eq!(reports[1].extreme_count_p99, 15);
        assert!(!reports[2].excluded);
        assert!(reports.iter().all(|r| !r.incomplete && r.trials_p5 == 60 && r.trials_p99 == 60));
    }

    #[test]
    fn incomplete_participant_is_flagged_not_excluded() {
        let design = generate_design(1);
        let mut rows = participant(&design, "d", 20, 0);
        // Keep only the first 500 main trials.
        rows.truncate(500);
        let reports = apply_exclusions(&rows, &design);
        assert!(reports[0].incomplete);
        assert!(!reports[0].excluded);
    }

    #[test]
    fn exclusion_is_monotone_in_extreme_errors() {
        let design = generate_design(4);
        for base in [14usize, 15, 16, 30] {
            let rows = participant(&design, "m", base, 0);
            let before = apply_exclusions(&rows, &design)[0].excluded;
            let after = apply_exclusions(&participant(&design, "m", base + 1, 0), &design)[0].excluded;
            assert!(!before || after, "excluded -> retained at {base}");
        }
    }
}
