//! Deterministic generation of the study design: 8 training trials followed
//! by 1200 shuffled main trials (4 charts x 20 proportions x 15 repetitions).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Phase, Trial, VisType};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};

pub const REPETITIONS: u8 = 15;
pub const TRAINING_TRIALS: usize = 8;
pub const MAIN_TRIALS: usize = 4 * 20 * REPETITIONS as usize;
pub const TOTAL_TRIALS: usize = TRAINING_TRIALS + MAIN_TRIALS;

/// Training answers, two per chart type in [`VisType::ALL`] order.
pub const TRAINING_PROPORTIONS: [u8; TRAINING_TRIALS] = [42, 67, 25, 80, 13, 55, 95, 30];

/// Smallest slice share allowed in a pie.
const MIN_PIE_SLICE: f64 = 0.02;

/// `{5, 10, ..., 95} ∪ {99}`, sorted.
pub fn proportion_set() -> Vec<u8> {
    (1..=19).map(|k| k * 5).chain(std::iter::once(99)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub seed: u64,
    pub trials: Vec<Trial>,
}

impl StudyDesign {
    pub fn trial(&self, trial_index: usize) -> Option<&Trial> {
        self.trials
            .get(trial_index)
            .filter(|t| t.trial_index == trial_index)
            .or_else(|| self.trials.iter().find(|t| t.trial_index == trial_index))
    }

    pub fn training_trials(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.phase == Phase::Training)
    }

    pub fn main_trials(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.phase == Phase::Main)
    }

    pub fn proportion_set(&self) -> Vec<u8> {
        proportion_set()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let design: StudyDesign = serde_json::from_str(text)?;
        design.validate()?;
        Ok(design)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks trial geometry and coverage.
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.trials.iter().enumerate() {
            if t.trial_index != i {
                return Err(Error::validation(format!("trial at position {i} has index {}", t.trial_index)));
            }
            check_trial_geometry(t)?;
        }
        let main = self.main_trials().count();
        if main != MAIN_TRIALS {
            return Err(Error::validation(format!("expected {MAIN_TRIALS} main trials, found {main}")));
        }
        Ok(())
    }
}

pub fn check_trial_geometry(t: &Trial) -> Result<()> {
    let [s, l] = t.marked;
    if s == l || s > 4 || l > 4 {
        return Err(Error::validation(format!("trial {}: bad marked pair {:?}", t.trial_index, t.marked)));
    }
    let ratio = t.marked_ratio();
    if (ratio - f64::from(t.true_proportion) / 100.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "trial {}: marked ratio {ratio} does not match {}%",
            t.trial_index, t.true_proportion
        )));
    }
    if t.vis == VisType::Pie && (t.values.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("trial {}: pie values do not sum to 1", t.trial_index)));
    }
    Ok(())
}

/// Draws the five values of one stimulus and the slots of the smaller and
/// larger marked values (returned as `[smaller, larger]`).
pub fn generate_trial_values<R: Rng + ?Sized>(vis: VisType, proportion: u8, rng: &mut R) -> ([f64; 5], [usize; 2]) {
    let p = f64::from(proportion) / 100.0;

    let (smaller, larger, distractors) = if vis == VisType::Pie {
        // The upper bound leaves at least 3 x MIN_PIE_SLICE for the distractors;
        // the lower bound keeps the smaller slice at or above MIN_PIE_SLICE.
        let lo = 0.12f64.max(MIN_PIE_SLICE / p);
        let hi = (1.0 - 3.0 * MIN_PIE_SLICE) / (1.0 + p);
        let larger = rng.random_range(lo..hi);
        let smaller = p * larger;
        let remainder = 1.0 - smaller - larger;
        let w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let total: f64 = w.iter().sum();
        let free = remainder - 3.0 * MIN_PIE_SLICE;
        let d = w.map(|wi| MIN_PIE_SLICE + free * wi / total);
        (smaller, larger, d)
    } else {
        let larger = rng.random_range(0.5..1.0);
        let smaller = p * larger;
        let d = [
            rng.random_range(0.05..=1.0),
            rng.random_range(0.05..=1.0),
            rng.random_range(0.05..=1.0),
        ];
        (smaller, larger, d)
    };

    let s_slot = rng.random_range(0..5usize);
    let mut l_slot = rng.random_range(0..4usize);
    if l_slot >= s_slot {
        l_slot += 1;
    }

    let mut values = [0.0; 5];
    values[s_slot] = smaller;
    values[l_slot] = larger;
    let mut rest = distractors.into_iter();
    for (slot, v) in values.iter_mut().enumerate() {
        if slot != s_slot && slot != l_slot {
            *v = rest.next().expect("three distractors fill three slots");
        }
    }
    (values, [s_slot, l_slot])
}

/// Builds the full design for `seed`. The same seed always yields the same
/// design, so every participant sees an identical stimulus set.
pub fn generate_design(seed: u64) -> StudyDesign {
    let mut values_rng = stream_rng(seed, streams::DESIGN_VALUES);
    let mut shuffle_rng = stream_rng(seed, streams::DESIGN_SHUFFLE);

    let mut trials = Vec::with_capacity(TOTAL_TRIALS);
    for (i, &p) in TRAINING_PROPORTIONS.iter().enumerate() {
        let vis = VisType::ALL[i % 4];
        let (values, marked) = generate_trial_values(vis, p, &mut values_rng);
        trials.push(Trial {
            trial_index: i,
            phase: Phase::Training,
            vis,
            true_proportion: p,
            repetition: (i / 4 + 1) as u8,
            values,
            marked,
        });
    }

    let mut main = Vec::with_capacity(MAIN_TRIALS);
    for vis in VisType::ALL {
        for p in proportion_set() {
            for repetition in 1..=REPETITIONS {
                let (values, marked) = generate_trial_values(vis, p, &mut values_rng);
                main.push(Trial {
                    trial_index: 0,
                    phase: Phase::Main,
                    vis,
                    true_proportion: p,
                    repetition,
                    values,
                    marked,
                });
            }
        }
    }
    main.shuffle(&mut shuffle_rng);
    for (k, mut t) in main.into_iter().enumerate() {
        t.trial_index = TRAINING_TRIALS + k;
        trials.push(t);
    }

    StudyDesign { seed, trials }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingFeedback {
    pub trial_index: usize,
    pub true_proportion: u8,
    pub feedback_text: String,
}

/// Feedback shown after a training answer, e.g. "The correct answer is 42%.
/// The smaller bar is just over 2/5 the size of the larger one."
pub fn training_feedback(trial: &Trial) -> Result<TrainingFeedback> {
    if trial.phase != Phase::Training {
        return Err(Error::validation(format!(
            "trial {} is not a training trial",
            trial.trial_index
        )));
    }
    let p = trial.true_proportion;
    let noun = trial.vis.element_noun();
    let target = f64::from(p) / 100.0;

    // Closest simple fraction; ties go to the smaller denominator.
    let mut best = (1u8, 1u8, f64::INFINITY);
    for den in [2u8, 3, 4, 5, 10] {
        for num in 1..=den {
            let gap = (target - f64::from(num) / f64::from(den)).abs();
            if gap < best.2 - 1e-12 {
                best = (num, den, gap);
            }
        }
    }
    let (num, den, _) = best;
    let frac = f64::from(num) / f64::from(den);
    let relation = if (target - frac).abs() < 1e-12 {
        "exactly"
    } else if target > frac {
        "just over"
    } else {
        "just under"
    };
    let gloss = if num == den {
        format!("The smaller {noun} is almost the same size as the larger one.")
    } else {
        let g = gcd(num, den);
        format!(
            "The smaller {noun} is {relation} {}/{} the size of the larger one.",
            num / g,
            den / g
        )
    };
    Ok(TrainingFeedback {
        trial_index: trial.trial_index,
        true_proportion: p,
        feedback_text: format!("The correct answer is {p}%. {gloss}"),
    })
}

fn gcd(a: u8, b: u8) -> u8 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use std::collections::HashMap;

    #[test]
    fn proportion_set_shape() {
        let set = proportion_set();
        assert_eq!(set.len(), 20);
        assert_eq!(set[0], 5);
        assert_eq!(*set.last().unwrap(), 99);
        assert!(set.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pie_values_sum_to_one() {
        let mut rng = stream_rng(11, 0);
        let (v, _) = generate_trial_values(VisType::Pie, 50, &mut rng);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bar_ratio_at_99() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..100 {
            let (v, m) = generate_trial_values(VisType::Bar, 99, &mut rng);
            assert!((v[m[0]] / v[m[1]] - 0.99).abs() < 1e-9);
        }
    }

    #[test]
    fn trial_values_are_deterministic() {
        let a = generate_trial_values(VisType::Bubble, 5, &mut stream_rng(42, 0));
        let b = generate_trial_values(VisType::Bubble, 5, &mut stream_rng(42, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn design_counts() {
        let d = generate_design(7);
        assert_eq!(d.trials.len(), TOTAL_TRIALS);
        assert_eq!(d.main_trials().count(), 1200);
        assert_eq!(d.training_trials().count(), 8);
        assert_eq!(
            d.main_trials()
                .filter(|t| t.vis == VisType::Pie && t.true_proportion == 35)
                .count(),
            15
        );
        let mut cells: HashMap<(VisType, u8), usize> = HashMap::new();
        for t in d.main_trials() {
            *cells.entry((t.vis, t.true_proportion)).or_default() += 1;
        }
        assert_eq!(cells.len(), 80);
        assert!(cells.values().all(|&n| n == 15));
        let mut per_vis = [0; 4];
        for t in d.training_trials() {
            per_vis[t.vis.index()] += 1;
        }
        assert_eq!(per_vis, [2, 2, 2, 2]);
        d.validate().unwrap();
    }

    #[test]
    fn same_seed_same_design() {
        assert_eq!(generate_design(99), generate_design(99));
        assert_ne!(generate_design(99).trials, generate_design(100).trials);
    }

    #[test]
    fn design_json_round_trip() {
        let d = generate_design(5);
        let back = StudyDesign::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn feedback_examples() {
        let d = generate_design(1);
        let first = &d.trials[0];
        assert_eq!(first.true_proportion, 42);
        let fb = training_feedback(first).unwrap();
        assert_eq!(
            fb.feedback_text,
            "The correct answer is 42%. The smaller bar is just over 2/5 the size of the larger one."
        );

        let mut fifty = first.clone();
        fifty.true_proportion = 50;
        assert!(training_feedback(&fifty).unwrap().feedback_text.contains("50%"));

        let main = d.main_trials().next().unwrap();
        assert!(training_feedback(main).is_err());
    }

    #[test]
    fn training_mixes_rounded_and_unrounded_answers() {
        let d = generate_design(0);
        let unrounded = d.training_trials().filter(|t| t.true_proportion % 5 != 0).count();
        assert!(unrounded >= 2, "only {unrounded} non-rounded training answers");
    }
}
