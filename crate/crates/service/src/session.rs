//! Session state as a pure fold over journal events.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use visperf_core::domain::{Phase, ResponseRecord, Trial};
use visperf_core::stimulus::{training_feedback, StudyDesign};

use crate::error::ServiceError;

/// Main trials between breaks.
pub const BREAK_EVERY: usize = 60;
/// Inactivity longer than this between two submissions is recorded as a gap.
pub const GAP_SECONDS: i64 = 10 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Training,
    Main,
    Demographics,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: String,
    pub age: String,
    pub country: String,
    pub degree: String,
    pub vis_experience: u8,
    pub stats_experience: u8,
}

impl Demographics {
    pub fn validate(&self) -> Result<(), ServiceError> {
        for (name, v) in [("vis_experience", self.vis_experience), ("stats_experience", self.stats_experience)] {
            if !(1..=7).contains(&v) {
                return Err(ServiceError::Validation(format!("{name} must be between 1 and 7, got {v}")));
            }
        }
        Ok(())
    }
}

/// Screens shown between trials. Consumed once delivered by `next`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "marker", rename_all = "snake_case")]
pub enum Marker {
    Feedback { trial_index: usize },
    MainStart,
    Break { number: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredResponse {
    pub trial_index: usize,
    pub judged_percent: u8,
    pub response_time_ms: u64,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub before_trial: usize,
    pub seconds: i64,
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session_id: String,
        participant_id: String,
        design_seed: u64,
        at: DateTime<Utc>,
    },
    Response(StoredResponse),
    MarkerDelivered {
        at: DateTime<Utc>,
    },
    Demographics {
        demographics: Demographics,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub participant_id: String,
    pub design_seed: u64,
    /// Position in the design's trial list of the next trial to answer.
    pub cursor: usize,
    pub phase: SessionPhase,
    pub created_at: DateTime<Utc>,
    pub last_activity: DateTime<Utc>,
    pub responses: Vec<StoredResponse>,
    pub pending: VecDeque<Marker>,
    pub demographics: Option<Demographics>,
    pub gaps: Vec<Gap>,
    /// Journal events folded into this state.
    pub events: usize,
}

/// What the participant should see next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextPayload {
    Trial {
        trial_index: usize,
        phase: Phase,
        vis: String,
        values: [f64; 5],
        marked: [usize; 2],
        progress: Progress,
    },
    Feedback {
        trial_index: usize,
        feedback_text: String,
        progress: Progress,
    },
    /// Training is over and the main trials begin.
    Phase {
        phase: Phase,
        progress: Progress,
    },
    Break {
        number: usize,
        total: usize,
        progress: Progress,
    },
    Demographics {
        progress: Progress,
    },
    Complete {
        progress: Progress,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub answered: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub cursor: usize,
    pub duplicate: bool,
}

fn n_training(design: &StudyDesign) -> usize {
    design.trials.iter().filter(|t| t.phase == Phase::Training).count()
}

impl Session {
    pub fn from_created(event: &Event) -> Option<Session> {
        let Event::Created { session_id, participant_id, design_seed, at } = event else {
            return None;
        };
        Some(Session {
            session_id: session_id.clone(),
            participant_id: participant_id.clone(),
            design_seed: *design_seed,
            cursor: 0,
            phase: SessionPhase::Training,
            created_at: *at,
            last_activity: *at,
            responses: Vec::new(),
            pending: VecDeque::new(),
            demographics: None,
            gaps: Vec::new(),
            events: 1,
        })
    }

    pub fn is_active(&self) -> bool {
        self.phase != SessionPhase::Complete
    }

    pub fn main_answered(&self, design: &StudyDesign) -> usize {
        self.cursor.saturating_sub(n_training(design))
    }

    fn progress(&self, design: &StudyDesign) -> Progress {
        Progress { answered: self.cursor, total: design.trials.len() }
    }

    /// Folds one event into the state. Events are validated before they are
    /// journaled, so applying them cannot fail.
    pub fn apply(&mut self, event: &Event, design: &StudyDesign) {
        self.events += 1;
        match event {
            Event::Created { .. } => {}
            Event::Response(r) => {
                let secs = (r.submitted_at - self.last_activity).num_seconds();
                if secs > GAP_SECONDS && !self.responses.is_empty() {
                    self.gaps.push(Gap { before_trial: r.trial_index, seconds: secs });
                }
                self.last_activity = r.submitted_at;
                self.responses.push(r.clone());
                let trial = &design.trials[self.cursor];
                self.cursor += 1;
                match trial.phase {
                    Phase::Training => {
                        self.pending.push_back(Marker::Feedback { trial_index: trial.trial_index });
                        if self.cursor == n_training(design) {
                            self.pending.push_back(Marker::MainStart);
                            self.phase = SessionPhase::Main;
                        }
                    }
                    Phase::Main => {
                        let answered = self.main_answered(design);
                        if answered % BREAK_EVERY == 0 {
                            self.pending.push_back(Marker::Break { number: answered / BREAK_EVERY });
                        }
                        if self.cursor == design.trials.len() {
                            self.phase = SessionPhase::Demographics;
                        }
                    }
                }
            }
            Event::MarkerDelivered { at } => {
                self.pending.pop_front();
                self.last_activity = *at;
            }
            Event::Demographics { demographics, at } => {
                self.demographics = Some(demographics.clone());
                self.phase = SessionPhase::Complete;
                self.last_activity = *at;
            }
        }
    }

    /// The payload `next` returns, and whether it consumes a marker.
    pub fn next_payload(&self, design: &StudyDesign) -> (NextPayload, bool) {
        let progress = self.progress(design);
        if let Some(m) = self.pending.front() {
            let payload = match m {
                Marker::Feedback { trial_index } => {
                    let trial = design.trial(*trial_index).expect("journaled trial exists");
                    let fb = training_feedback(trial).expect("feedback markers follow training trials");
                    NextPayload::Feedback { trial_index: *trial_index, feedback_text: fb.feedback_text, progress }
                }
                Marker::MainStart => NextPayload::Phase { phase: Phase::Main, progress },
                Marker::Break { number } => NextPayload::Break {
                    number: *number,
                    total: (design.trials.len() - n_training(design)) / BREAK_EVERY,
                    progress,
                },
            };
            return (payload, true);
        }
        let payload = match self.phase {
            SessionPhase::Training | SessionPhase::Main => trial_payload(&design.trials[self.cursor], progress),
            SessionPhase::Demographics => NextPayload::Demographics { progress },
            SessionPhase::Complete => NextPayload::Complete { progress },
        };
        (payload, false)
    }

    /// Checks a submission. `Ok(None)` is an idempotent resubmission of the
    /// last accepted answer.
    pub fn check_submit(
        &self,
        design: &StudyDesign,
        trial_index: usize,
        judged_percent: i64,
    ) -> Result<Option<()>, ServiceError> {
        if !(1..=100).contains(&judged_percent) {
            return Err(ServiceError::Validation(format!(
                "judged_percent must be an integer between 1 and 100, got {judged_percent}"
            )));
        }
        if let Some(last) = self.responses.last() {
            if last.trial_index == trial_index {
                return if i64::from(last.judged_percent) == judged_percent {
                    Ok(None)
                } else {
                    Err(ServiceError::Conflict(format!(
                        "trial {trial_index} was already answered; answers cannot be revised"
                    )))
                };
            }
        }
        if !matches!(self.phase, SessionPhase::Training | SessionPhase::Main) {
            return Err(ServiceError::Conflict("all trials have been answered".into()));
        }
        if !self.pending.is_empty() {
            return Err(ServiceError::Conflict("fetch the next screen before answering".into()));
        }
        let expected = design.trials[self.cursor].trial_index;
        if trial_index != expected {
            return Err(ServiceError::Conflict(format!("expected an answer to trial {expected}, got {trial_index}")));
        }
        Ok(Some(()))
    }

    /// Response records in answer order, main phase only unless
    /// `include_training`.
    pub fn records(&self, design: &StudyDesign, include_training: bool) -> Vec<ResponseRecord> {
        self.responses
            .iter()
            .filter_map(|r| {
                let t = design.trial(r.trial_index)?;
                (include_training || t.phase == Phase::Main).then(|| ResponseRecord {
                    participant_id: self.participant_id.clone(),
                    trial_index: r.trial_index,
                    vis: t.vis,
                    true_proportion: t.true_proportion,
                    judged_percent: r.judged_percent,
                    response_time_ms: r.response_time_ms,
                    submitted_at: r.submitted_at,
                })
            })
            .collect()
    }
}

/// The true proportion is deliberately not sent.
fn trial_payload(t: &Trial, progress: Progress) -> NextPayload {
    NextPayload::Trial {
        trial_index: t.trial_index,
        phase: t.phase,
        vis: t.vis.as_str().to_string(),
        values: t.values,
        marked: t.marked,
        progress,
    }
}
