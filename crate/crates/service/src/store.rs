//! Sessions persisted as one append-only JSONL journal each, plus periodic
//! snapshots. Opening a store replays every journal from its latest snapshot.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use visperf_core::records::responses_to_string;
use visperf_core::stimulus::{generate_design, StudyDesign};

use crate::error::ServiceError;
use crate::session::{Ack, Demographics, Event, NextPayload, Session, SessionPhase, StoredResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreOptions {
    /// `fsync` every journal append.
    pub durable: bool,
    /// Write a snapshot after this many events of a session.
    pub snapshot_every: usize,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { durable: true, snapshot_every: 100 }
    }
}

/// Which sessions and phases an export covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportFilter {
    #[serde(default)]
    pub include_training: bool,
    #[serde(default)]
    pub include_partial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Export {
    pub csv: String,
    /// Incomplete sessions whose responses are in `csv`.
    pub partial_sessions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub participant_id: String,
    pub design_seed: u64,
    pub phase: SessionPhase,
    pub cursor: usize,
    pub gaps: usize,
}

struct Slot {
    session: Session,
    design: Arc<StudyDesign>,
    journal: File,
    journal_path: PathBuf,
}

#[derive(Default)]
struct Index {
    sessions: BTreeMap<String, Arc<Mutex<Slot>>>,
    /// Participant id to the id of their active session.
    active: HashMap<String, String>,
    designs: HashMap<u64, Arc<StudyDesign>>,
}

pub struct Store {
    dir: PathBuf,
    options: StoreOptions,
    index: Mutex<Index>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Journal timestamps carry whole milliseconds, the precision of the CSV.
fn now() -> DateTime<Utc> {
    let t = Utc::now();
    t.duration_trunc(TimeDelta::milliseconds(1)).unwrap_or(t)
}

impl Index {
    fn design(&mut self, seed: u64) -> Arc<StudyDesign> {
        self.designs.entry(seed).or_insert_with(|| Arc::new(generate_design(seed))).clone()
    }
}

impl Store {
    /// Opens (or creates) a store under `dir` and replays its journals.
    pub fn open(dir: impl AsRef<Path>, options: StoreOptions) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().join("sessions");
        fs::create_dir_all(&dir).map_err(|e| ServiceError::io(&dir, e))?;
        let mut index = Index::default();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| ServiceError::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let slot = replay(&path, &mut index)?;
            let s = &slot.session;
            if s.is_active() {
                index.active.insert(s.participant_id.clone(), s.session_id.clone());
            }
            index.sessions.insert(s.session_id.clone(), Arc::new(Mutex::new(slot)));
        }
        Ok(Store { dir, options, index: Mutex::new(index) })
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Mutex<Slot>>, ServiceError> {
        lock(&self.index)
            .sessions
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(session_id.to_string()))
    }

    fn append(&self, slot: &mut Slot, event: Event) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(&event).expect("events serialize");
        line.push('\n');
        slot.journal
            .write_all(line.as_bytes())
            .map_err(|e| ServiceError::io(&slot.journal_path, e))?;
        if self.options.durable {
            slot.journal.sync_data().map_err(|e| ServiceError::io(&slot.journal_path, e))?;
        }
        slot.session.apply(&event, &slot.design);
        if self.options.snapshot_every > 0 && slot.session.events % self.options.snapshot_every == 0 {
            write_snapshot(&slot.journal_path, &slot.session)?;
        }
        Ok(())
    }

    pub fn create_session(&self, participant_id: &str, design_seed: u64) -> Result<Session, ServiceError> {
        let participant_id = participant_id.trim();
        if participant_id.is_empty() {
            return Err(ServiceError::Validation("participant_id must not be empty".into()));
        }
        let mut index = lock(&self.index);
        if let Some(existing) = index.active.get(participant_id) {
            return Err(ServiceError::DuplicateSession {
                participant_id: participant_id.to_string(),
                session_id: existing.clone(),
            });
        }
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let event = Event::Created {
            session_id: session_id.clone(),
            participant_id: participant_id.to_string(),
            design_seed,
            at: now(),
        };
        let journal_path = self.dir.join(format!("{session_id}.jsonl"));
        let journal = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&journal_path)
            .map_err(|e| ServiceError::io(&journal_path, e))?;
        let design = index.design(design_seed);
        let session = Session::from_created(&event).expect("created event");
        let mut slot = Slot { session, design, journal, journal_path };
        // Written directly: `Created` is already folded in.
        let line = serde_json::to_string(&event).expect("events serialize") + "\n";
        slot.journal
            .write_all(line.as_bytes())
            .map_err(|e| ServiceError::io(&slot.journal_path, e))?;
        if self.options.durable {
            slot.journal.sync_data().map_err(|e| ServiceError::io(&slot.journal_path, e))?;
        }
        let out = slot.session.clone();
        index.active.insert(participant_id.to_string(), session_id.clone());
        index.sessions.insert(session_id, Arc::new(Mutex::new(slot)));
        Ok(out)
    }

    pub fn session(&self, session_id: &str) -> Result<Session, ServiceError> {
        let slot = self.slot(session_id)?;
        let s = lock(&slot).session.clone();
        Ok(s)
    }

    /// The next screen. Feedback, phase and break screens are shown once.
    pub fn next(&self, session_id: &str) -> Result<NextPayload, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut slot = lock(&slot);
        let (payload, consumes) = slot.session.next_payload(&slot.design);
        if consumes {
            self.append(&mut slot, Event::MarkerDelivered { at: now() })?;
        }
        Ok(payload)
    }

    pub fn submit(
        &self,
        session_id: &str,
        trial_index: usize,
        judged_percent: i64,
        response_time_ms: u64,
    ) -> Result<Ack, ServiceError> {
        let slot = self.slot(session_id)?;
        let mut slot = lock(&slot);
        match slot.session.check_submit(&slot.design, trial_index, judged_percent)? {
            None => Ok(Ack { cursor: slot.session.cursor, duplicate: true }),
            Some(()) => {
                let event = Event::Response(StoredResponse {
                    trial_index,
                    judged_percent: judged_percent as u8,
                    response_time_ms,
                    submitted_at: now(),
                });
                self.append(&mut slot, event)?;
                Ok(Ack { cursor: slot.session.cursor, duplicate: false })
            }
        }
    }

    pub fn submit_demographics(&self, session_id: &str, demographics: Demographics) -> Result<(), ServiceError> {
        demographics.validate()?;
        let slot = self.slot(session_id)?;
        let participant = {
            let mut slot = lock(&slot);
            if slot.session.phase != SessionPhase::Demographics || !slot.session.pending.is_empty() {
                return Err(ServiceError::Conflict("demographics are collected after the last trial".into()));
            }
            self.append(&mut slot, Event::Demographics { demographics, at: now() })?;
            slot.session.participant_id.clone()
        };
        let mut index = lock(&self.index);
        if index.active.get(&participant).is_some_and(|s| s == session_id) {
            index.active.remove(&participant);
        }
        Ok(())
    }

    fn all_slots(&self) -> Vec<Arc<Mutex<Slot>>> {
        lock(&self.index).sessions.values().cloned().collect()
    }

    pub fn summaries(&self) -> Vec<SessionSummary> {
        let mut out: Vec<SessionSummary> = self
            .all_slots()
            .iter()
            .map(|s| {
                let s = &lock(s).session;
                SessionSummary {
                    session_id: s.session_id.clone(),
                    participant_id: s.participant_id.clone(),
                    design_seed: s.design_seed,
                    phase: s.phase,
                    cursor: s.cursor,
                    gaps: s.gaps.len(),
                }
            })
            .collect();
        out.sort_by(|a, b| (&a.participant_id, &a.session_id).cmp(&(&b.participant_id, &b.session_id)));
        out
    }

    /// Responses in the canonical CSV, sessions ordered by participant id
    /// then session creation.
    pub fn export(&self, filter: ExportFilter) -> Export {
        let mut sessions: Vec<(Session, Arc<StudyDesign>)> = self
            .all_slots()
            .iter()
            .map(|s| {
                let s = lock(s);
                (s.session.clone(), s.design.clone())
            })
            .filter(|(s, _)| filter.include_partial || s.phase == SessionPhase::Complete)
            .collect();
        sessions.sort_by(|(a, _), (b, _)| {
            (&a.participant_id, a.created_at, &a.session_id).cmp(&(&b.participant_id, b.created_at, &b.session_id))
        });
        let mut records = Vec::new();
        let mut partial_sessions = Vec::new();
        for (s, design) in &sessions {
            if s.phase != SessionPhase::Complete {
                partial_sessions.push(s.session_id.clone());
            }
            records.extend(s.records(design, filter.include_training));
        }
        Export { csv: responses_to_string(&records), partial_sessions }
    }
}

fn snapshot_path(journal: &Path) -> PathBuf {
    journal.with_extension("snapshot.json")
}

fn write_snapshot(journal: &Path, session: &Session) -> Result<(), ServiceError> {
    let path = snapshot_path(journal);
    let tmp = path.with_extension("tmp");
    let text = serde_json::to_string(session).expect("sessions serialize");
    fs::write(&tmp, text).map_err(|e| ServiceError::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| ServiceError::io(&path, e))
}

/// Rebuilds one session: latest snapshot, then the journal lines after it. A
/// final line without its newline is a torn append and is cut off.
fn replay(path: &Path, index: &mut Index) -> Result<Slot, ServiceError> {
    let corrupt = |line: usize, message: String| ServiceError::Corrupt { path: path.to_path_buf(), line, message };
    let bytes = fs::read(path).map_err(|e| ServiceError::io(path, e))?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        tracing::warn!(path = %path.display(), "dropping a torn journal line");
        let f = OpenOptions::new().write(true).open(path).map_err(|e| ServiceError::io(path, e))?;
        f.set_len(complete as u64).map_err(|e| ServiceError::io(path, e))?;
    }
    let mut events = Vec::new();
    for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let event: Event = serde_json::from_slice(line).map_err(|e| corrupt(i + 1, e.to_string()))?;
        events.push(event);
    }
    let first = events.first().ok_or_else(|| corrupt(1, "empty journal".into()))?;
    let created = Session::from_created(first).ok_or_else(|| corrupt(1, "journal must start with a created event".into()))?;
    let design = index.design(created.design_seed);

    let mut session = match fs::read_to_string(snapshot_path(path)) {
        Ok(text) => match serde_json::from_str::<Session>(&text) {
            Ok(s) if s.events <= events.len() && s.session_id == created.session_id => s,
            _ => created,
        },
        Err(_) => created,
    };
    for e in &events[session.events..] {
        session.apply(e, &design);
    }
    let journal = OpenOptions::new().append(true).open(path).map_err(|e| ServiceError::io(path, e))?;
    Ok(Slot { session, design, journal, journal_path: path.to_path_buf() })
}
