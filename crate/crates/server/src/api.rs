//! JSON HTTP API used by the participant UI.
//!
//! Task views never carry the ground truth, the complexity score or the task
//! class; line views show the displayed transcription of task words.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use phonolearn_core::analytics::export_csv;
use phonolearn_core::store::{
    AnalysisFilter, NewResponse, ParticipationMode, Payload, ProfileInput, StoreError,
};
use phonolearn_core::task::{AudioSpan, Task, TaskError};
use phonolearn_core::Store;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

/// Header an operator sets on on-site submissions.
pub const PARTICIPATION_HEADER: &str = "x-participation-mode";

pub const DEFAULT_INTRO: &str = include_str!("../assets/intro.md");

/// Study policy switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Policy {
    /// Lax pilot behaviour: optional profile fields, partial sessions count.
    pub pilot_compat: bool,
}

impl Policy {
    pub fn require_profile_minimum(&self) -> bool {
        !self.pilot_compat
    }

    pub fn analysis_filter(&self) -> AnalysisFilter {
        AnalysisFilter {
            completed_sessions_only: !self.pilot_compat,
            ..AnalysisFilter::default()
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub policy: Policy,
    pub intro: Arc<str>,
    pub assets_dir: PathBuf,
}

pub fn router(state: AppState) -> Router {
    let audio = ServeDir::new(&state.assets_dir);
    Router::new()
        .route("/api/profiles", post(create_profile))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_task))
        .route("/api/sessions/{id}/responses", post(submit))
        .route("/api/lines/{id}", get(line))
        .route("/api/symbols", get(symbols))
        .route("/api/export.csv", get(export))
        .nest_service("/api/audio", audio)
        .with_state(state)
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownProfile(_)
            | StoreError::UnknownSession(_)
            | StoreError::UnknownTask(_)
            | StoreError::UnknownLine(_) => StatusCode::NOT_FOUND,
            StoreError::Conflict { .. } => StatusCode::CONFLICT,
            StoreError::MissingProfileFields(_)
            | StoreError::InvalidIpa(_)
            | StoreError::Task(TaskError::OptionOutOfRange { .. }) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error": e.to_string() });
        match &e {
            StoreError::InvalidIpa(t) => {
                body["position"] = json!(t.position);
                body["found"] = json!(t.found.to_string());
            }
            StoreError::MissingProfileFields(fields) => body["missing"] = json!(fields),
            StoreError::Conflict { expected, .. } => body["expected_task_id"] = json!(expected),
            _ => {}
        }
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        ApiError { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize, Deserialize)]
pub struct ProfileCreated {
    pub profile_id: String,
    pub eligible: bool,
}

async fn create_profile(
    State(state): State<AppState>,
    Json(input): Json<ProfileInput>,
) -> ApiResult<(StatusCode, Json<ProfileCreated>)> {
    let profile = state
        .store
        .create_profile(input, state.policy.require_profile_minimum())?;
    Ok((
        StatusCode::CREATED,
        Json(ProfileCreated {
            profile_id: profile.profile_id,
            eligible: profile.eligible,
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionRequest {
    pub profile_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub profile_id: String,
    pub queue_length: usize,
    pub intro: String,
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<SessionRequest>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let session = state.store.create_session(&req.profile_id)?;
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: session.session_id,
            profile_id: session.profile_id,
            queue_length: session.task_queue.len(),
            intro: state.intro.to_string(),
        }),
    ))
}

/// What the client sees of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub line_id: String,
    pub word_index: usize,
    pub audio_ref: String,
    pub audio_span: AudioSpan,
    pub displayed: String,
    pub options: Vec<String>,
    /// Zero-based queue position and queue length.
    pub position: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextTask {
    Task { task: TaskView },
    Complete,
}

fn task_view(task: &Task, audio_ref: String, position: usize, total: usize) -> TaskView {
    TaskView {
        task_id: task.id().to_owned(),
        line_id: task.word_ref().line_id.clone(),
        word_index: task.word_ref().word_index,
        audio_ref,
        audio_span: task.audio_span(),
        displayed: task.displayed().as_ipa().to_owned(),
        options: task
            .options()
            .iter()
            .map(|o| o.as_ipa().to_owned())
            .collect(),
        position,
        total,
    }
}

async fn next_task(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<NextTask>> {
    let session = state
        .store
        .session(&id)
        .ok_or_else(|| StoreError::UnknownSession(id.clone()))?;
    let Some(task) = state.store.next_task(&id)? else {
        return Ok(Json(NextTask::Complete));
    };
    let audio_ref = state
        .store
        .line(&task.word_ref().line_id)
        .map(|l| l.audio_ref)
        .unwrap_or_default();
    Ok(Json(NextTask::Task {
        task: task_view(&task, audio_ref, session.cursor, session.task_queue.len()),
    }))
}

/// Answer body: exactly one of `option_index` and `typed`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub typed: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitReceipt {
    pub seq_no: u64,
    pub cursor: usize,
    pub complete: bool,
}

fn participation_mode(headers: &HeaderMap) -> ApiResult<ParticipationMode> {
    match headers.get(PARTICIPATION_HEADER).map(|v| v.to_str()) {
        None => Ok(ParticipationMode::Online),
        Some(Ok("on_site")) => Ok(ParticipationMode::OnSite),
        Some(Ok("online")) => Ok(ParticipationMode::Online),
        Some(_) => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("{PARTICIPATION_HEADER} must be `on_site` or `online`"),
        )),
    }
}

async fn submit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<SubmitRequest>,
) -> ApiResult<(StatusCode, Json<SubmitReceipt>)> {
    let payload = match (req.option_index, req.typed) {
        (Some(index), None) => Payload::Option { index },
        (None, Some(ipa)) => Payload::Typed { ipa },
        _ => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "give exactly one of `option_index` and `typed`",
            ))
        }
    };
    let receipt = state.store.submit(NewResponse {
        session_id: id.clone(),
        task_id: req.task_id,
        payload,
        participation_mode: participation_mode(&headers)?,
    })?;
    let total = state.store.session(&id).map_or(0, |s| s.task_queue.len());
    Ok((
        StatusCode::CREATED,
        Json(SubmitReceipt {
            seq_no: receipt.seq_no,
            cursor: receipt.cursor,
            complete: receipt.cursor >= total,
        }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordView {
    pub index: usize,
    pub source_token: String,
    pub ipa_token: String,
    pub start_ms: u64,
    pub end_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineView {
    pub line_id: String,
    pub source_text: String,
    pub ipa_text: String,
    pub audio_ref: String,
    pub words: Vec<WordView>,
}

async fn line(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<LineView>> {
    let line = state
        .store
        .line(&id)
        .ok_or_else(|| StoreError::UnknownLine(id.clone()))?;
    let tasks: HashMap<usize, Task> = state
        .store
        .active_tasks()
        .into_iter()
        .filter(|t| t.word_ref().line_id == id)
        .map(|t| (t.word_ref().word_index, t))
        .collect();
    let words: Vec<WordView> = line
        .words
        .iter()
        .map(|w| {
            let task = tasks.get(&w.index);
            WordView {
                index: w.index,
                source_token: w.source_token.clone(),
                ipa_token: task.map_or_else(
                    || w.ipa_token.clone(),
                    |t| t.displayed().as_ipa().to_owned(),
                ),
                start_ms: w.start_ms,
                end_ms: w.end_ms,
                task_id: task.map(|t| t.id().to_owned()),
            }
        })
        .collect();
    Ok(Json(LineView {
        line_id: line.line_id,
        source_text: line.source_text,
        ipa_text: words
            .iter()
            .map(|w| w.ipa_token.as_str())
            .collect::<Vec<_>>()
            .join(" "),
        audio_ref: line.audio_ref,
        words,
    }))
}

async fn symbols(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(
        state
            .store
            .inventory()
            .symbols()
            .map(str::to_owned)
            .collect(),
    )
}

async fn export(State(state): State<AppState>) -> ApiResult<Response> {
    let items = state.store.item_stats(state.policy.analysis_filter())?;
    Ok((
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        export_csv(&items),
    )
        .into_response())
}
