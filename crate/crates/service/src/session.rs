//! Study sessions and their append-only event logs.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use glossmt_core::pipeline::sha256_hex;
use glossmt_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "human-only")]
    HumanOnly,
    #[serde(rename = "human+llm")]
    HumanLlm,
}

impl Condition {
    pub fn other(self) -> Self {
        match self {
            Condition::HumanOnly => Condition::HumanLlm,
            Condition::HumanLlm => Condition::HumanOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    SessionStart,
    InstanceOpen,
    WordSearch,
    CorpusSearch,
    LlmView,
    Edit,
    Submit,
}

impl ActionKind {
    /// Kinds a client may log directly through the event endpoint.
    pub fn client_loggable(self) -> bool {
        matches!(self, ActionKind::WordSearch | ActionKind::CorpusSearch | ActionKind::Edit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionEvent {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<u64>,
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default)]
    pub payload: String,
    pub ts_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub instance_id: u64,
    pub condition: Condition,
}

/// Payload of the `session-start` event; enough to rebuild the session from its log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStart {
    pub participant: String,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub participant: String,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
    pub started_ms: u64,
    /// Time of the last submit once every instance is submitted.
    pub ended_ms: Option<u64>,
}

/// Shuffles `ids` with `seed` and alternates conditions, starting with a seed-chosen one.
pub fn assign(ids: &[u64], seed: u64) -> Vec<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = ids.to_vec();
    order.shuffle(&mut rng);
    let mut condition = if rng.gen::<bool>() { Condition::HumanLlm } else { Condition::HumanOnly };
    order
        .into_iter()
        .map(|instance_id| {
            let a = Assignment { instance_id, condition };
            condition = condition.other();
            a
        })
        .collect()
}

/// One session's log, mirrored in memory and on disk.
pub struct SessionLog {
    start: SessionStart,
    events: Vec<ActionEvent>,
    file: File,
    path: PathBuf,
}

impl SessionLog {
    pub fn id(&self) -> &str {
        &self.events[0].session_id
    }

    pub fn events(&self) -> &[ActionEvent] {
        &self.events
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn condition_of(&self, instance_id: u64) -> Option<Condition> {
        self.start
            .assignments
            .iter()
            .find(|a| a.instance_id == instance_id)
            .map(|a| a.condition)
    }

    pub fn is_opened(&self, instance_id: u64) -> bool {
        self.has(ActionKind::InstanceOpen, instance_id)
    }

    pub fn is_submitted(&self, instance_id: u64) -> bool {
        self.has(ActionKind::Submit, instance_id)
    }

    fn has(&self, kind: ActionKind, instance_id: u64) -> bool {
        self.events
            .iter()
            .any(|e| e.kind == kind && e.instance_id == Some(instance_id))
    }

    /// First assignment not yet submitted, with its 0-based position.
    pub fn next_pending(&self) -> Option<(usize, Assignment)> {
        self.start
            .assignments
            .iter()
            .copied()
            .enumerate()
            .find(|(_, a)| !self.is_submitted(a.instance_id))
    }

    /// The opened, unsubmitted instance the participant is working on.
    pub fn current_instance(&self) -> Option<u64> {
        self.next_pending()
            .map(|(_, a)| a.instance_id)
            .filter(|&id| self.is_opened(id))
    }

    pub fn session(&self) -> Session {
        let all_done = self
            .start
            .assignments
            .iter()
            .all(|a| self.is_submitted(a.instance_id));
        let ended_ms = all_done
            .then(|| self.events.iter().filter(|e| e.kind == ActionKind::Submit).map(|e| e.ts_ms).max())
            .flatten();
        Session {
            id: self.id().to_string(),
            participant: self.start.participant.clone(),
            seed: self.start.seed,
            assignments: self.start.assignments.clone(),
            started_ms: self.events[0].ts_ms,
            ended_ms,
        }
    }

    /// Appends an event stamped by `clock`, never earlier than the previous event.
    pub fn append(
        &mut self,
        clock: &dyn Clock,
        kind: ActionKind,
        instance_id: Option<u64>,
        lang: Option<String>,
        payload: String,
    ) -> Result<ActionEvent> {
        let last = self.events.last().map_or(0, |e| e.ts_ms);
        let event = ActionEvent {
            session_id: self.id().to_string(),
            instance_id,
            kind,
            lang,
            payload,
            ts_ms: clock.now_ms().max(last),
        };
        write_event(&mut self.file, &self.path, &event)?;
        self.events.push(event.clone());
        Ok(event)
    }
}

fn write_event(file: &mut File, path: &Path, event: &ActionEvent) -> Result<()> {
    let mut line = serde_json::to_string(event)?;
    line.push('\n');
    file.write_all(line.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a session log file.
pub fn read_log(path: &Path) -> Result<Vec<ActionEvent>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn start_of(events: &[ActionEvent]) -> Result<SessionStart> {
    match events.first() {
        Some(e) if e.kind == ActionKind::SessionStart => Ok(serde_json::from_str(&e.payload)?),
        _ => Err(Error::Data("session log does not begin with session-start".into())),
    }
}

pub type SharedLog = Arc<Mutex<SessionLog>>;

/// All sessions, one JSONL file each under `dir`.
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, SharedLog>>,
    counter: AtomicU64,
}

impl SessionStore {
    /// Opens `dir`, replaying any existing session logs.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let events = read_log(&path)?;
            let start = start_of(&events)?;
            let id = events[0].session_id.clone();
            let file = OpenOptions::new().append(true).open(&path).map_err(|e| Error::io(&path, e))?;
            let log = SessionLog {
                start,
                events,
                file,
                path,
            };
            sessions.insert(id, Arc::new(Mutex::new(log)));
        }
        log::info!("loaded {} session(s) from {}", sessions.len(), dir.display());
        Ok(Self {
            dir: dir.to_path_buf(),
            sessions: RwLock::new(sessions),
            counter: AtomicU64::new(0),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, id: &str) -> Option<SharedLog> {
        self.sessions.read().expect("session map").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self, clock: &dyn Clock, participant: &str, seed: u64, ids: &[u64]) -> Result<Session> {
        if ids.is_empty() {
            return Err(Error::Data("no instances to assign".into()));
        }
        let start = SessionStart {
            participant: participant.to_string(),
            seed,
            assignments: assign(ids, seed),
        };
        let now = clock.now_ms();
        let mut sessions = self.sessions.write().expect("session map");
        let id = loop {
            let n = self.counter.fetch_add(1, Ordering::SeqCst);
            let id = sha256_hex(format!("{participant}\n{seed}\n{now}\n{n}").as_bytes())[..12].to_string();
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let path = self.dir.join(format!("{id}.jsonl"));
        let mut file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let first = ActionEvent {
            session_id: id.clone(),
            instance_id: None,
            kind: ActionKind::SessionStart,
            lang: None,
            payload: serde_json::to_string(&start)?,
            ts_ms: now,
        };
        write_event(&mut file, &path, &first)?;
        let log = SessionLog {
            start,
            events: vec![first],
            file,
            path,
        };
        let session = log.session();
        sessions.insert(id, Arc::new(Mutex::new(log)));
        Ok(session)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn assignment_is_a_seeded_alternating_permutation() {
        let ids: Vec<u64> = (1..=8).collect();
        let a = assign(&ids, 42);
        assert_eq!(a, assign(&ids, 42));
        let mut got: Vec<u64> = a.iter().map(|x| x.instance_id).collect();
        got.sort();
        assert_eq!(got, ids);
        for w in a.windows(2) {
            assert_ne!(w[0].condition, w[1].condition);
        }
        let firsts: std::collections::HashSet<_> = (0..16).map(|s| assign(&ids, s)[0].condition).collect();
        assert_eq!(firsts.len(), 2);
    }

    #[test]
    fn timestamps_never_go_backwards() {
        let tmp = tempfile::tempdir().unwrap();
        let store = SessionStore::open(tmp.path()).unwrap();
        let clock = ManualClock::new(1_000);
        let s = store.create(&clock, "p1", 3, &[1, 2]).unwrap();
        let log = store.get(&s.id).unwrap();
        let mut log = log.lock().unwrap();
        clock.set(500);
        let e = log.append(&clock, ActionKind::Edit, Some(1), None, "x".into()).unwrap();
        assert_eq!(e.ts_ms, 1_000);
        clock.set(2_000);
        let e = log.append(&clock, ActionKind::Edit, Some(1), None, "y".into()).unwrap();
        assert_eq!(e.ts_ms, 2_000);
    }

    #[test]
    fn store_replays_logs_from_disk() {
        let tmp = tempfile::tempdir().unwrap();
        let clock = ManualClock::new(10);
        let id = {
            let store = SessionStore::open(tmp.path()).unwrap();
            let s = store.create(&clock, "p1", 9, &[5, 6, 7]).unwrap();
            let log = store.get(&s.id).unwrap();
            log.lock()
                .unwrap()
                .append(&clock, ActionKind::InstanceOpen, Some(s.assignments[0].instance_id), None, String::new())
                .unwrap();
            s.id
        };
        let store = SessionStore::open(tmp.path()).unwrap();
        assert_eq!(store.len(), 1);
        let log = store.get(&id).unwrap();
        let log = log.lock().unwrap();
        assert_eq!(log.events().len(), 2);
        assert_eq!(log.session().participant, "p1");
        assert!(log.current_instance().is_some());
    }
}
