//! Turning study responses into model observations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::joint::Observation;
use crate::domain::{Phase, ResponseRecord, VisType};
use crate::error::{Error, Result};
use crate::stimulus::StudyDesign;

/// Main-phase observations with participants indexed in sorted id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyData {
    pub participants: Vec<String>,
    pub observations: Vec<Observation>,
}

impl StudyData {
    pub fn from_responses(responses: &[ResponseRecord], design: &StudyDesign) -> Result<Self> {
        let mut by_id: BTreeMap<&str, Vec<Observation>> = BTreeMap::new();
        for r in responses {
            let trial = design
                .trial(r.trial_index)
                .ok_or_else(|| Error::validation(format!("response references unknown trial {}", r.trial_index)))?;
            if trial.phase != Phase::Main {
                continue;
            }
            let value = r.abs_error()?.value();
            by_id.entry(r.participant_id.as_str()).or_default().push(Observation {
                value,
                vis: r.vis.index(),
                participant: 0,
            });
        }
        let mut participants = Vec::with_capacity(by_id.len());
        let mut observations = Vec::new();
        for (p, (id, obs)) in by_id.into_iter().enumerate() {
            participants.push(id.to_string());
            observations.extend(obs.into_iter().map(|o| Observation { participant: p, ..o }));
        }
        Ok(StudyData { participants, observations })
    }

    pub fn n_vis(&self) -> usize {
        VisType::ALL.len()
    }

    pub fn participant_index(&self, id: &str) -> Result<usize> {
        self.participants
            .iter()
            .position(|p| p == id)
            .ok_or_else(|| Error::UnknownParticipant(id.to_string()))
    }

    /// Mean error per (participant, chart), the unit of the Normal baseline.
    pub fn cell_means(&self) -> Vec<Observation> {
        cell_means(&self.observations)
    }
}

pub fn cell_means(observations: &[Observation]) -> Vec<Observation> {
    let mut acc: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for o in observations {
        let e = acc.entry((o.participant, o.vis)).or_insert((0.0, 0));
        e.0 += o.value;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((participant, vis), (s, n))| Observation { value: s / n as f64, vis, participant })
        .collect()
}
