//! HTTP access to runs and to the bug report of a run waiting for human review.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/runs` | one [`RunSummaryView`] per run |
//! | GET | `/runs/{id}` | one [`RunSummaryView`] |
//! | GET | `/runs/{id}/report` | the report under review |
//! | POST | `/runs/{id}/decisions` | apply a batch of [`ReviewDecision`]s |
//! | POST | `/runs/{id}/release` | let the run continue |
//! | GET | `/runs/{id}/events` | server-sent events: the log so far, then live |
//!
//! Every view is computed from the run's event log and every mutation is an
//! append to it. Errors use the envelope `{code, message, detail}`.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use proofloop_core::{BugReport, Step, VerdictKind};
use proofloop_orchestrator::{
    ApplyError, EventPayload, LogError, LogStore, Projection, ReviewDecision, RunEvent, TerminalKind,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummaryView {
    pub run_id: String,
    pub step: Step,
    pub iteration: u32,
    pub consecutive_passes: u32,
    pub consecutive_major_fails: u32,
    pub latest_verdict: Option<VerdictKind>,
    /// The run is blocked until a reviewer releases it.
    pub pending_review: bool,
    pub terminal: Option<TerminalKind>,
}

impl RunSummaryView {
    pub fn of(p: &Projection) -> Self {
        Self {
            run_id: p.run_id().to_string(),
            step: p.state.step,
            iteration: p.state.iteration(),
            consecutive_passes: p.state.consecutive_passes(),
            consecutive_major_fails: p.state.consecutive_major_fails(),
            latest_verdict: p.state.latest_report().map(|r| r.verdict_kind),
            pending_review: p.awaiting_human(),
            terminal: p.terminal.as_ref().map(|t| t.terminal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseAck {
    pub run_id: String,
    pub released: bool,
    pub next_step: Step,
    pub consecutive_passes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    fn not_in_review(p: &Projection) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", format!("run {} is not waiting for review", p.run_id()))
            .with_detail(serde_json::json!({ "step": p.state.step }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        match &e {
            LogError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            LogError::InvalidRunId(_) => Self::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
            LogError::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            LogError::Refused(ApplyError::Decision(d)) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", d.to_string())
            }
            LogError::Refused(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "log_error", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

#[derive(Clone)]
pub struct ApiState {
    pub store: Arc<LogStore>,
    /// When set, POST requests need `Authorization: Bearer <token>`.
    pub token: Option<String>,
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/report", get(get_report))
        .route("/runs/{id}/decisions", post(submit_decisions))
        .route("/runs/{id}/release", post(release_run))
        .route("/runs/{id}/events", get(events))
        .with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: ApiState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

fn authorize(state: &ApiState, headers: &HeaderMap) -> Result<(), ApiError> {
    let Some(token) = &state.token else {
        return Ok(());
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if presented == Some(token.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "a valid bearer token is required"))
    }
}

async fn list_runs(State(state): State<ApiState>) -> Result<Json<Vec<RunSummaryView>>, ApiError> {
    let mut views = Vec::new();
    for id in state.store.run_ids()? {
        match state.store.get(&id) {
            Ok(log) => views.push(RunSummaryView::of(&log.projection())),
            Err(e) => tracing::warn!(run = %id, error = %e, "skipping unreadable run log"),
        }
    }
    Ok(Json(views))
}

async fn get_run(State(state): State<ApiState>, Path(id): Path<String>) -> Result<Json<RunSummaryView>, ApiError> {
    Ok(Json(RunSummaryView::of(&state.store.get(&id)?.projection())))
}

fn report_under_review(p: &Projection) -> Result<BugReport, ApiError> {
    match &p.pending_review {
        Some(pending) if p.awaiting_human() => Ok(pending.current.clone()),
        _ => Err(ApiError::not_in_review(p)),
    }
}

async fn get_report(State(state): State<ApiState>, Path(id): Path<String>) -> Result<Json<BugReport>, ApiError> {
    Ok(Json(report_under_review(&state.store.get(&id)?.projection())?))
}

async fn submit_decisions(
    State(state): State<ApiState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<Vec<ReviewDecision>>, JsonRejection>,
) -> Result<Json<BugReport>, ApiError> {
    authorize(&state, &headers)?;
    let Json(decisions) = body?;
    let log = state.store.get(&id)?;
    let mut refused = None;
    log.transact(|p| {
        if !p.awaiting_human() {
            refused = Some(ApiError::not_in_review(p));
            return Ok(Vec::new());
        }
        // Checked here as well as in the log so the caller gets the position.
        let mut scratch = p.pending_review.clone().expect("a run awaiting review has a pending report");
        if let Err(e) = scratch.apply(p.run_id(), &decisions) {
            refused = Some(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()));
            return Ok(Vec::new());
        }
        Ok(decisions
            .into_iter()
            .map(|decision| EventPayload::ReviewDecisionApplied { decision })
            .collect())
    })?;
    if let Some(e) = refused {
        return Err(e);
    }
    Ok(Json(report_under_review(&log.projection())?))
}

async fn release_run(
    State(state): State<ApiState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Json<ReleaseAck>, ApiError> {
    authorize(&state, &headers)?;
    let log = state.store.get(&id)?;
    let mut refused = None;
    log.transact(|p| {
        if !p.awaiting_human() {
            refused = Some(ApiError::not_in_review(p));
            return Ok(Vec::new());
        }
        Ok(vec![EventPayload::ReviewReleased {
            timed_out: false,
            fallback: None,
        }])
    })?;
    if let Some(e) = refused {
        return Err(e);
    }
    let p = log.projection();
    Ok(Json(ReleaseAck {
        run_id: id,
        released: true,
        next_step: p.state.step,
        consecutive_passes: p.state.consecutive_passes(),
    }))
}

fn sse_event(event: &RunEvent) -> Result<Event, Infallible> {
    Ok(Event::default()
        .id(event.seq.to_string())
        .event(event.payload.kind())
        .data(serde_json::to_string(event).expect("events serialize")))
}

fn is_terminal(event: &RunEvent) -> bool {
    matches!(event.payload, EventPayload::Terminal { .. })
}

/// The log so far, then new events as they are appended. The stream ends
/// after the terminal event, or if the client falls too far behind.
async fn events(
    State(state): State<ApiState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let log = state.store.get(&id)?;
    let (backlog, receiver) = log.subscribe();
    let finished = backlog.last().is_some_and(is_terminal);
    let live = stream::unfold((receiver, finished), |(mut rx, done)| async move {
        if done {
            return None;
        }
        match rx.recv().await {
            Ok(event) => {
                let done = is_terminal(&event);
                Some((sse_event(&event), (rx, done)))
            }
            Err(_) => None,
        }
    });
    let backlog = stream::iter(backlog.iter().map(sse_event).collect::<Vec<_>>());
    Ok(Sse::new(backlog.chain(live)).keep_alive(KeepAlive::default()))
}
