//! Aligned corpus, profiles, sessions and the append-only response log.
//!
//! All state changes are [`Event`]s appended to a JSON-lines log. The
//! in-memory [`StoreState`] is a fold over that log, so reopening a store
//! replays it to the same state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::analytics::{aggregate_items, AnalyticsError, ItemStats};
use crate::phoneme::{PhonemeInventory, TokenizeError};
use crate::pwld::CostConfig;
use crate::task::{
    score_answer, Answer, AudioSpan, ScoredResponse, Task, TaskDoc, TaskError, WordItem, WordRef,
};

pub const LOG_FILE: &str = "events.jsonl";
/// Profile fields required when the minimum-profile policy is on.
pub const MINIMUM_PROFILE_FIELDS: [&str; 2] = ["l1_language", "age"];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line_id}{}: {message}", word_index.map(|i| format!(", word {i}")).unwrap_or_default())]
    Alignment {
        line_id: String,
        word_index: Option<usize>,
        message: String,
    },
    #[error("line {line_id}, word {word_index}: {source}")]
    AlignmentIpa {
        line_id: String,
        word_index: usize,
        source: TokenizeError,
    },
    #[error("unknown profile {0}")]
    UnknownProfile(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown line {0}")]
    UnknownLine(String),
    #[error("profile is missing required fields: {}", .0.join(", "))]
    MissingProfileFields(Vec<&'static str>),
    #[error("session {session_id} expects task {expected:?}, got {got}")]
    Conflict {
        session_id: String,
        expected: Option<String>,
        got: String,
    },
    #[error("typed answer: {0}")]
    InvalidIpa(TokenizeError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("event log line {line}: {message}")]
    Replay { line: usize, message: String },
}

impl StoreError {
    /// Failures of the underlying storage rather than of the request.
    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub index: usize,
    pub source_token: String,
    pub ipa_token: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedLine {
    pub line_id: String,
    pub source_text: String,
    pub ipa_text: String,
    pub audio_ref: String,
    pub words: Vec<WordAlignment>,
}

impl AlignedLine {
    /// Checks timing and transcription invariants; normalizes IPA to NFC.
    pub fn validated(mut self, inv: &PhonemeInventory) -> Result<Self, StoreError> {
        let fail = |word_index: Option<usize>, message: String| StoreError::Alignment {
            line_id: self.line_id.clone(),
            word_index,
            message,
        };
        if self.line_id.is_empty() {
            return Err(fail(None, "empty line_id".into()));
        }
        if self.words.is_empty() {
            return Err(fail(None, "line has no words".into()));
        }
        let mut previous_end = None;
        for (pos, w) in self.words.iter().enumerate() {
            if w.index != pos {
                return Err(fail(
                    Some(pos),
                    format!("index field is {}, expected {pos}", w.index),
                ));
            }
            if w.start_ms >= w.end_ms {
                return Err(fail(
                    Some(pos),
                    format!("window {}..{} is empty or reversed", w.start_ms, w.end_ms),
                ));
            }
            if let Some(end) = previous_end {
                if w.start_ms < end {
                    return Err(fail(
                        Some(pos),
                        format!(
                            "starts at {} before the previous word ends at {end}",
                            w.start_ms
                        ),
                    ));
                }
            }
            previous_end = Some(w.end_ms);
        }

        self.ipa_text = self.ipa_text.nfc().collect();
        for w in &mut self.words {
            w.ipa_token = w.ipa_token.nfc().collect();
        }
        let tokens: Vec<&str> = self.ipa_text.split_whitespace().collect();
        let words: Vec<&str> = self.words.iter().map(|w| w.ipa_token.as_str()).collect();
        if tokens != words {
            return Err(fail(
                None,
                format!(
                    "ipa_text {:?} does not match the word tokens {:?}",
                    self.ipa_text, words
                ),
            ));
        }
        for w in &self.words {
            inv.tokenize(&w.ipa_token)
                .map_err(|source| StoreError::AlignmentIpa {
                    line_id: self.line_id.clone(),
                    word_index: w.index,
                    source,
                })?;
        }
        Ok(self)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AlignmentDoc {
    Many(Vec<AlignedLine>),
    One(AlignedLine),
}

/// Parses an alignment document holding one line object or an array of them.
pub fn parse_alignment(doc: &str, inv: &PhonemeInventory) -> Result<Vec<AlignedLine>, StoreError> {
    let lines = match serde_json::from_str::<AlignmentDoc>(doc)? {
        AlignmentDoc::Many(lines) => lines,
        AlignmentDoc::One(line) => vec![line],
    };
    let mut seen = HashSet::new();
    lines
        .into_iter()
        .map(|line| {
            if !seen.insert(line.line_id.clone()) {
                return Err(StoreError::Alignment {
                    line_id: line.line_id,
                    word_index: None,
                    message: "duplicate line_id in document".into(),
                });
            }
            line.validated(inv)
        })
        .collect()
}

/// Profile fields as submitted; everything is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileInput {
    pub l1_language: Option<String>,
    pub l2_languages: Vec<String>,
    pub age: Option<u32>,
    pub gender: Option<String>,
    pub education: Option<String>,
    pub nationality: Option<String>,
}

impl ProfileInput {
    pub fn missing_minimum(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        if self
            .l1_language
            .as_deref()
            .is_none_or(|s| s.trim().is_empty())
        {
            missing.push(MINIMUM_PROFILE_FIELDS[0]);
        }
        if self.age.is_none() {
            missing.push(MINIMUM_PROFILE_FIELDS[1]);
        }
        missing
    }

    /// Whether the participant reports knowing Persian, which puts them
    /// outside the study population.
    pub fn knows_persian(&self) -> bool {
        self.l1_language
            .iter()
            .chain(&self.l2_languages)
            .any(|lang| is_persian(lang))
    }
}

fn is_persian(lang: &str) -> bool {
    matches!(
        lang.trim().to_lowercase().as_str(),
        "persian" | "farsi" | "fa" | "fas" | "per" | "فارسی"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub profile_id: String,
    #[serde(flatten)]
    pub fields: ProfileInput,
    pub eligible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationMode {
    OnSite,
    #[default]
    Online,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Option { index: usize },
    Typed { ipa: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub seq_no: u64,
    pub session_id: String,
    pub profile_id: String,
    pub task_id: String,
    pub payload: Payload,
    pub received_at: DateTime<Utc>,
    pub participation_mode: ParticipationMode,
}

/// A response before the store assigns its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct NewResponse {
    pub session_id: String,
    pub task_id: String,
    pub payload: Payload,
    pub participation_mode: ParticipationMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub seq_no: u64,
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub profile_id: String,
    pub created_at: DateTime<Utc>,
    pub task_queue: Vec<String>,
    pub cursor: usize,
}

impl Session {
    pub fn current_task(&self) -> Option<&str> {
        self.task_queue.get(self.cursor).map(String::as_str)
    }

    pub fn is_complete(&self) -> bool {
        self.cursor >= self.task_queue.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    LinesIngested { lines: Vec<AlignedLine> },
    TasksPublished { tasks: Vec<TaskDoc> },
    ProfileCreated { profile: UserProfile },
    SessionCreated { session: Session },
    ResponseRecorded { record: ResponseRecord },
}

/// Everything the log has established so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreState {
    pub lines: BTreeMap<String, AlignedLine>,
    pub tasks: BTreeMap<String, Task>,
    pub active_tasks: Vec<String>,
    pub profiles: HashMap<String, UserProfile>,
    pub sessions: HashMap<String, Session>,
    pub responses: Vec<ResponseRecord>,
}

impl StoreState {
    /// Folds one event into the state. Events are validated before they are
    /// appended, so only a corrupted log fails here.
    pub fn apply(
        &mut self,
        event: Event,
        inv: &PhonemeInventory,
        cfg: &CostConfig,
    ) -> Result<(), StoreError> {
        match event {
            Event::LinesIngested { lines } => {
                for line in lines {
                    self.lines.insert(line.line_id.clone(), line);
                }
            }
            Event::TasksPublished { tasks } => {
                self.active_tasks.clear();
                for doc in tasks {
                    let task = Task::from_doc(&doc, inv, cfg)?;
                    self.active_tasks.push(task.id().to_owned());
                    self.tasks.insert(task.id().to_owned(), task);
                }
            }
            Event::ProfileCreated { profile } => {
                self.profiles.insert(profile.profile_id.clone(), profile);
            }
            Event::SessionCreated { session } => {
                self.sessions.insert(session.session_id.clone(), session);
            }
            Event::ResponseRecorded { record } => {
                let expected = self.responses.len() as u64 + 1;
                if record.seq_no != expected {
                    return Err(StoreError::Replay {
                        line: 0,
                        message: format!(
                            "response seq_no {} where {expected} was due",
                            record.seq_no
                        ),
                    });
                }
                let session = self
                    .sessions
                    .get_mut(&record.session_id)
                    .ok_or_else(|| StoreError::UnknownSession(record.session_id.clone()))?;
                if session.current_task() == Some(record.task_id.as_str()) {
                    session.cursor += 1;
                }
                self.responses.push(record);
            }
        }
        Ok(())
    }

    fn next_seq_no(&self) -> u64 {
        self.responses.len() as u64 + 1
    }

    /// Active tasks by ascending complexity, ties by id; tasks without a
    /// complexity go last.
    pub fn ordered_queue(&self) -> Vec<String> {
        let mut tasks: Vec<&Task> = self
            .active_tasks
            .iter()
            .filter_map(|id| self.tasks.get(id))
            .collect();
        tasks.sort_by(|a, b| match (a.complexity(), b.complexity()) {
            (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.id().cmp(b.id())),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.id().cmp(b.id()),
        });
        tasks.into_iter().map(|t| t.id().to_owned()).collect()
    }
}

/// Which responses feed the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisFilter {
    /// Keep only each profile's first answer to a task.
    pub first_attempt_only: bool,
    /// Drop profiles flagged as knowing Persian.
    pub eligible_only: bool,
    /// Drop sessions that did not answer their whole queue.
    pub completed_sessions_only: bool,
}

impl Default for AnalysisFilter {
    fn default() -> Self {
        AnalysisFilter {
            first_attempt_only: true,
            eligible_only: true,
            completed_sessions_only: true,
        }
    }
}

struct Inner {
    state: StoreState,
    log: Option<File>,
}

/// Handle to a store. Appends are serialized; reads run concurrently.
pub struct Store {
    inner: RwLock<Inner>,
    inv: Arc<PhonemeInventory>,
    cfg: CostConfig,
    path: Option<PathBuf>,
}

impl Store {
    pub fn in_memory(inv: Arc<PhonemeInventory>, cfg: CostConfig) -> Self {
        Store {
            inner: RwLock::new(Inner {
                state: StoreState::default(),
                log: None,
            }),
            inv,
            cfg,
            path: None,
        }
    }

    /// Opens (creating if needed) the store in `dir` and replays its log.
    pub fn open(
        dir: impl AsRef<Path>,
        inv: Arc<PhonemeInventory>,
        cfg: CostConfig,
    ) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        let state = if path.exists() {
            replay(BufReader::new(File::open(&path)?), &inv, &cfg)?
        } else {
            StoreState::default()
        };
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Store {
            inner: RwLock::new(Inner {
                state,
                log: Some(log),
            }),
            inv,
            cfg,
            path: Some(path),
        })
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inv
    }

    pub fn cost_config(&self) -> &CostConfig {
        &self.cfg
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn read(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Snapshot of the current state.
    pub fn state(&self) -> StoreState {
        self.read().state.clone()
    }

    /// Durably appends `event`, then folds it in. The state is untouched if
    /// the append fails.
    fn commit(&self, inner: &mut Inner, event: Event) -> Result<(), StoreError> {
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(&event)?;
            line.push(b'\n');
            log.write_all(&line)?;
            log.sync_data()?;
        }
        inner.state.apply(event, &self.inv, &self.cfg)
    }

    pub fn ingest_alignment(&self, doc: &str) -> Result<Vec<AlignedLine>, StoreError> {
        let lines = parse_alignment(doc, &self.inv)?;
        let mut inner = self.write();
        self.commit(
            &mut inner,
            Event::LinesIngested {
                lines: lines.clone(),
            },
        )?;
        Ok(lines)
    }

    pub fn line(&self, line_id: &str) -> Option<AlignedLine> {
        self.read().state.lines.get(line_id).cloned()
    }

    pub fn lines(&self) -> Vec<AlignedLine> {
        self.read().state.lines.values().cloned().collect()
    }

    /// Every corpus word as a task-generation candidate.
    pub fn word_items(&self) -> Vec<WordItem> {
        let inner = self.read();
        inner
            .state
            .lines
            .values()
            .flat_map(|line| {
                line.words.iter().map(|w| WordItem {
                    word_ref: WordRef {
                        line_id: line.line_id.clone(),
                        word_index: w.index,
                    },
                    audio_span: AudioSpan {
                        start_ms: w.start_ms,
                        end_ms: w.end_ms,
                    },
                    truth: self
                        .inv
                        .tokenize(&w.ipa_token)
                        .expect("stored tokens were validated on ingest"),
                })
            })
            .collect()
    }

    /// Replaces the active task set.
    pub fn publish_tasks(&self, tasks: &[Task]) -> Result<(), StoreError> {
        let mut inner = self.write();
        for t in tasks {
            let line = inner
                .state
                .lines
                .get(&t.word_ref().line_id)
                .ok_or_else(|| StoreError::UnknownLine(t.word_ref().line_id.clone()))?;
            if t.word_ref().word_index >= line.words.len() {
                return Err(StoreError::Alignment {
                    line_id: line.line_id.clone(),
                    word_index: Some(t.word_ref().word_index),
                    message: format!("task {} refers to a missing word", t.id()),
                });
            }
        }
        let docs = tasks.iter().map(Task::to_doc).collect();
        self.commit(&mut inner, Event::TasksPublished { tasks: docs })
    }

    pub fn task(&self, task_id: &str) -> Option<Task> {
        self.read().state.tasks.get(task_id).cloned()
    }

    pub fn active_tasks(&self) -> Vec<Task> {
        let inner = self.read();
        inner
            .state
            .active_tasks
            .iter()
            .filter_map(|id| inner.state.tasks.get(id).cloned())
            .collect()
    }

    /// Stores a profile, flagging Persian speakers as ineligible. With
    /// `require_minimum` set, profiles lacking the minimum fields are refused.
    pub fn create_profile(
        &self,
        fields: ProfileInput,
        require_minimum: bool,
    ) -> Result<UserProfile, StoreError> {
        if require_minimum {
            let missing = fields.missing_minimum();
            if !missing.is_empty() {
                return Err(StoreError::MissingProfileFields(missing));
            }
        }
        let profile = UserProfile {
            profile_id: uuid::Uuid::new_v4().simple().to_string(),
            eligible: !fields.knows_persian(),
            fields,
        };
        let mut inner = self.write();
        self.commit(
            &mut inner,
            Event::ProfileCreated {
                profile: profile.clone(),
            },
        )?;
        Ok(profile)
    }

    pub fn profile(&self, profile_id: &str) -> Option<UserProfile> {
        self.read().state.profiles.get(profile_id).cloned()
    }

    /// Opens a session whose queue holds every active task, easiest first.
    pub fn create_session(&self, profile_id: &str) -> Result<Session, StoreError> {
        let mut inner = self.write();
        if !inner.state.profiles.contains_key(profile_id) {
            return Err(StoreError::UnknownProfile(profile_id.to_owned()));
        }
        let session = Session {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            profile_id: profile_id.to_owned(),
            created_at: Utc::now(),
            task_queue: inner.state.ordered_queue(),
            cursor: 0,
        };
        self.commit(
            &mut inner,
            Event::SessionCreated {
                session: session.clone(),
            },
        )?;
        Ok(session)
    }

    pub fn session(&self, session_id: &str) -> Option<Session> {
        self.read().state.sessions.get(session_id).cloned()
    }

    /// Current task of a session, `None` once the queue is exhausted.
    pub fn next_task(&self, session_id: &str) -> Result<Option<Task>, StoreError> {
        let inner = self.read();
        let session = inner
            .state
            .sessions
            .get(session_id)
            .ok_or_else(|| StoreError::UnknownSession(session_id.to_owned()))?;
        Ok(session
            .current_task()
            .and_then(|id| inner.state.tasks.get(id))
            .cloned())
    }

    fn check_payload(&self, task: &Task, payload: &Payload) -> Result<(), StoreError> {
        match payload {
            Payload::Option { index } if *index >= task.options().len() => {
                Err(TaskError::OptionOutOfRange {
                    id: task.id().to_owned(),
                    index: *index,
                    len: task.options().len(),
                }
                .into())
            }
            Payload::Option { .. } => Ok(()),
            Payload::Typed { ipa } => self
                .inv
                .tokenize(ipa)
                .map(drop)
                .map_err(StoreError::InvalidIpa),
        }
    }

    fn append_response(
        &self,
        inner: &mut Inner,
        r: NewResponse,
        profile_id: String,
    ) -> Result<Receipt, StoreError> {
        let payload = match r.payload {
            Payload::Typed { ipa } => Payload::Typed {
                ipa: ipa.nfc().collect(),
            },
            other => other,
        };
        let record = ResponseRecord {
            seq_no: inner.state.next_seq_no(),
            session_id: r.session_id.clone(),
            profile_id,
            task_id: r.task_id,
            payload,
            received_at: Utc::now(),
            participation_mode: r.participation_mode,
        };
        let seq_no = record.seq_no;
        self.commit(inner, Event::ResponseRecorded { record })?;
        let cursor = inner.state.sessions[&r.session_id].cursor;
        Ok(Receipt { seq_no, cursor })
    }

    /// Appends a response. The session's cursor advances when the response
    /// answers its current task.
    pub fn record_response(&self, r: NewResponse) -> Result<Receipt, StoreError> {
        let mut inner = self.write();
        let profile_id = inner
            .state
            .sessions
            .get(&r.session_id)
            .ok_or_else(|| StoreError::UnknownSession(r.session_id.clone()))?
            .profile_id
            .clone();
        let task = inner
            .state
            .tasks
            .get(&r.task_id)
            .ok_or_else(|| StoreError::UnknownTask(r.task_id.clone()))?;
        self.check_payload(task, &r.payload)?;
        self.append_response(&mut inner, r, profile_id)
    }

    /// Answers the session's current task. Fails with a conflict when
    /// `task_id` is not the task at the cursor; nothing is recorded then.
    pub fn submit(&self, r: NewResponse) -> Result<Receipt, StoreError> {
        let mut inner = self.write();
        let session = inner
            .state
            .sessions
            .get(&r.session_id)
            .ok_or_else(|| StoreError::UnknownSession(r.session_id.clone()))?;
        if session.current_task() != Some(r.task_id.as_str()) {
            return Err(StoreError::Conflict {
                session_id: r.session_id.clone(),
                expected: session.current_task().map(str::to_owned),
                got: r.task_id.clone(),
            });
        }
        let profile_id = session.profile_id.clone();
        let task = inner
            .state
            .tasks
            .get(&r.task_id)
            .ok_or_else(|| StoreError::UnknownTask(r.task_id.clone()))?;
        self.check_payload(task, &r.payload)?;
        self.append_response(&mut inner, r, profile_id)
    }

    pub fn responses(&self) -> Vec<ResponseRecord> {
        self.read().state.responses.clone()
    }

    fn score_record(
        &self,
        state: &StoreState,
        record: &ResponseRecord,
    ) -> Result<ScoredResponse, StoreError> {
        let task = state
            .tasks
            .get(&record.task_id)
            .ok_or_else(|| StoreError::UnknownTask(record.task_id.clone()))?;
        let answer = match &record.payload {
            Payload::Option { index } => Answer::Option(*index),
            Payload::Typed { ipa } => {
                Answer::Typed(self.inv.tokenize(ipa).map_err(StoreError::InvalidIpa)?)
            }
        };
        Ok(score_answer(task, &answer, &self.cfg)?)
    }

    /// Every stored response scored against its task, in log order.
    pub fn scored_responses(&self) -> Result<Vec<(ResponseRecord, ScoredResponse)>, StoreError> {
        let inner = self.read();
        inner
            .state
            .responses
            .iter()
            .map(|r| Ok((r.clone(), self.score_record(&inner.state, r)?)))
            .collect()
    }

    /// Scored responses that pass `filter`, in log order.
    pub fn analysis_responses(
        &self,
        filter: AnalysisFilter,
    ) -> Result<Vec<ScoredResponse>, StoreError> {
        let inner = self.read();
        let state = &inner.state;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for record in &state.responses {
            if filter.eligible_only
                && state
                    .profiles
                    .get(&record.profile_id)
                    .is_none_or(|p| !p.eligible)
            {
                continue;
            }
            if filter.completed_sessions_only
                && state
                    .sessions
                    .get(&record.session_id)
                    .is_none_or(|s| !s.is_complete())
            {
                continue;
            }
            if filter.first_attempt_only
                && !seen.insert((record.profile_id.as_str(), record.task_id.as_str()))
            {
                continue;
            }
            out.push(self.score_record(state, record)?);
        }
        Ok(out)
    }

    /// Per-item statistics over the filtered responses, sorted by task id.
    pub fn item_stats(&self, filter: AnalysisFilter) -> Result<Vec<ItemStats>, StoreError> {
        let responses = self.analysis_responses(filter)?;
        let tasks: Vec<Task> = self.read().state.tasks.values().cloned().collect();
        Ok(aggregate_items(&tasks, &responses)?)
    }
}

/// Rebuilds state by folding every event of a JSON-lines log.
pub fn replay(
    reader: impl BufRead,
    inv: &PhonemeInventory,
    cfg: &CostConfig,
) -> Result<StoreState, StoreError> {
    let mut state = StoreState::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(&line).map_err(|e| StoreError::Replay {
            line: i + 1,
            message: e.to_string(),
        })?;
        state.apply(event, inv, cfg).map_err(|e| match e {
            StoreError::Replay { message, .. } => StoreError::Replay {
                line: i + 1,
                message,
            },
            other => StoreError::Replay {
                line: i + 1,
                message: other.to_string(),
            },
        })?;
    }
    Ok(state)
}
