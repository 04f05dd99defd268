use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, State};
use axum::handler::HandlerWithoutStateExt;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chatpoints_core::{Analytics, InstanceId, NeighborSpace, ProjectionConfig};
use chatpoints_dialogue::{ChatTarget, NewNote, NoteUpdate, PromptContext};
use chatpoints_gateway::Speech;
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::app::AppState;
use crate::error::ApiError;
use crate::projection::{JobStatus, StartError};

type AppResult<T> = Result<T, ApiError>;
type St = State<Arc<AppState>>;

#[derive(FromRequest)]
#[from_request(via(axum::Json), rejection(ApiError))]
struct ApiJson<T>(T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Path), rejection(ApiError))]
struct ApiPath<T>(T);

#[derive(FromRequestParts)]
#[from_request(via(axum::extract::Query), rejection(ApiError))]
struct ApiQuery<T>(T);

pub fn router(state: Arc<AppState>, assets: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/overview", get(overview))
        .route("/api/classes", get(classes))
        .route("/api/personas", get(personas))
        .route("/api/instances/{id}", get(instance))
        .route("/api/projection", get(projection_status).post(projection_start))
        .route("/api/selection", post(selection))
        .route("/api/selection/neighbors", get(neighbors))
        .route("/api/chat/sessions", get(list_sessions).post(start_session))
        .route("/api/chat/sessions/{id}", get(get_session))
        .route("/api/chat/sessions/{id}/turns", post(chat_turn))
        .route("/api/notes", get(list_notes).post(add_note))
        .route(
            "/api/notes/{id}",
            get(get_note).patch(update_note).delete(delete_note),
        )
        .route("/api/notes/{id}/toggle", post(toggle_note))
        .route("/api/tts", get(tts))
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(
            ServeDir::new(dir).not_found_service(not_found.into_service()),
        ),
        None => api.fallback(not_found),
    }
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn method_not_allowed() -> Response {
    (
        StatusCode::METHOD_NOT_ALLOWED,
        Json(ApiError::bad_request("method not allowed on this route")),
    )
        .into_response()
}

async fn health(State(s): St) -> Json<serde_json::Value> {
    let projection = match s.projection.status() {
        JobStatus::Idle => "idle",
        JobStatus::Running { .. } => "running",
        JobStatus::Done => "done",
        JobStatus::Failed { .. } => "failed",
    };
    Json(json!({
        "status": "ok",
        "instances": s.dataset.len(),
        "provider": s.dialogue.provider_id(),
        "tts_enabled": s.tts.is_enabled(),
        "projection": projection,
    }))
}

async fn overview(State(s): St) -> Response {
    Json(s.dataset.manifest()).into_response()
}

async fn classes(State(s): St) -> AppResult<Response> {
    let analytics = Analytics::new(&*s.dataset, None)?;
    Ok(Json(analytics.class_report()).into_response())
}

async fn personas(State(s): St) -> Response {
    Json(s.dialogue.registry().personas()).into_response()
}

async fn instance(State(s): St, ApiPath(id): ApiPath<InstanceId>) -> AppResult<Response> {
    let row = s
        .dataset
        .position(id)
        .map_err(|_| ApiError::not_found(format!("unknown instance id {id}")))?;
    let mut inst = s.dataset.instances()[row].clone();
    if let Some(layout) = s.projection.layout() {
        inst.projected = Some([layout.coordinates[[row, 0]], layout.coordinates[[row, 1]]]);
    }
    Ok(Json(inst).into_response())
}

async fn projection_status(State(s): St) -> Response {
    match s.projection.status() {
        JobStatus::Idle => Json(json!({ "status": "idle" })).into_response(),
        JobStatus::Running {
            config,
            iteration,
            total,
        } => (
            StatusCode::ACCEPTED,
            Json(json!({
                "status": "running",
                "iteration": iteration,
                "total": total,
                "config": config,
            })),
        )
            .into_response(),
        JobStatus::Failed { config, error } => Json(json!({
            "status": "failed",
            "error": error,
            "config": config,
        }))
        .into_response(),
        JobStatus::Done => {
            let layout = s.projection.layout().expect("done implies a layout");
            Json(json!({
                "status": "done",
                "source": layout.source,
                "points": layout.file.points,
                "kl_trace": layout.file.kl_trace,
                "config": layout.file.config,
                "diagnostics": layout.file.diagnostics,
            }))
            .into_response()
        }
    }
}

/// An empty or `null` body runs the defaults.
async fn projection_start(State(s): St, body: Bytes) -> AppResult<Response> {
    let given: Option<ProjectionConfig> = if body.iter().all(u8::is_ascii_whitespace) {
        None
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request(format!("invalid projection config: {e}")))?
    };
    let config = given.unwrap_or_else(|| s.projection.default_config());
    match s.projection.start(config.clone()) {
        Ok(_) => Ok((
            StatusCode::ACCEPTED,
            Json(json!({
                "status": "running",
                "iteration": 0,
                "total": config.num_iterations,
                "config": config,
            })),
        )
            .into_response()),
        Err(StartError::Busy) => Err(ApiError::busy("a projection is already running")),
        Err(StartError::Invalid(e)) => Err(e.into()),
    }
}

#[derive(Deserialize)]
struct SelectionRequest {
    ids: Vec<InstanceId>,
}

async fn selection(State(s): St, ApiJson(req): ApiJson<SelectionRequest>) -> AppResult<Response> {
    let layout = s.projection.layout();
    let analytics = Analytics::new(&*s.dataset, layout.as_ref().map(|l| l.coordinates.view()))?;
    Ok(Json(analytics.selection_stats(&req.ids)?).into_response())
}

fn default_k() -> usize {
    10
}

#[derive(Deserialize)]
struct NeighborQuery {
    id: InstanceId,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    space: NeighborSpace,
}

async fn neighbors(State(s): St, ApiQuery(q): ApiQuery<NeighborQuery>) -> AppResult<Response> {
    let layout = s.projection.layout();
    let analytics = Analytics::new(&*s.dataset, layout.as_ref().map(|l| l.coordinates.view()))?;
    let found = analytics.neighbors(q.id, q.k, q.space)?;
    Ok(Json(json!({
        "id": q.id,
        "k": q.k,
        "space": q.space,
        "neighbors": found,
    }))
    .into_response())
}

#[derive(Deserialize)]
struct StartSession {
    target: ChatTarget,
}

async fn start_session(State(s): St, ApiJson(req): ApiJson<StartSession>) -> AppResult<Response> {
    let started = s.dialogue.start_session(req.target, &s.dataset)?;
    let persona = s.dialogue.persona_of(&started.session).clone();
    let status = if started.resumed {
        StatusCode::OK
    } else {
        StatusCode::CREATED
    };
    Ok((
        status,
        Json(json!({
            "session": started.session,
            "resumed": started.resumed,
            "persona": persona,
        })),
    )
        .into_response())
}

#[derive(Deserialize)]
struct SessionQuery {
    target: Option<String>,
}

async fn list_sessions(State(s): St, ApiQuery(q): ApiQuery<SessionQuery>) -> AppResult<Response> {
    let target = q
        .target
        .map(|t| t.parse::<ChatTarget>())
        .transpose()?;
    Ok(Json(s.dialogue.sessions(target.as_ref())).into_response())
}

async fn get_session(State(s): St, ApiPath(id): ApiPath<String>) -> AppResult<Response> {
    Ok(Json(s.dialogue.session(&id)?).into_response())
}

#[derive(Deserialize)]
struct TurnRequest {
    text: String,
}

async fn chat_turn(
    State(s): St,
    ApiPath(id): ApiPath<String>,
    ApiJson(req): ApiJson<TurnRequest>,
) -> AppResult<Response> {
    let layout = s.projection.layout();
    let ctx = PromptContext::new(&s.dataset, layout.as_ref().map(|l| l.coordinates.view()))?;
    match s.dialogue.chat_turn(&id, &req.text, &ctx).await {
        Ok(out) => Ok(Json(json!({
            "reply": out.reply.text,
            "finish_reason": out.reply.finish_reason,
            "provider_id": out.reply.provider_id,
            "latency_ms": out.reply.latency_ms,
            "session": out.session,
        }))
        .into_response()),
        Err(e) => {
            let upstream = matches!(e, chatpoints_dialogue::DialogueError::Upstream { .. });
            let mut err = ApiError::from(e);
            if upstream {
                // Hand back the session with its failure marker so the UI can offer a retry.
                if let (Some(detail), Ok(session)) = (err.detail.as_mut(), s.dialogue.session(&id)) {
                    detail["session"] = json!(session);
                }
            }
            Err(err)
        }
    }
}

async fn list_notes(State(s): St) -> Response {
    Json(s.dialogue.notes()).into_response()
}

async fn add_note(State(s): St, ApiJson(note): ApiJson<NewNote>) -> AppResult<Response> {
    Ok((StatusCode::CREATED, Json(s.dialogue.add_note(note)?)).into_response())
}

async fn get_note(State(s): St, ApiPath(id): ApiPath<String>) -> AppResult<Response> {
    Ok(Json(s.dialogue.note(&id)?).into_response())
}

async fn update_note(
    State(s): St,
    ApiPath(id): ApiPath<String>,
    ApiJson(update): ApiJson<NoteUpdate>,
) -> AppResult<Response> {
    Ok(Json(s.dialogue.update_note(&id, update)?).into_response())
}

async fn toggle_note(State(s): St, ApiPath(id): ApiPath<String>) -> AppResult<Response> {
    Ok(Json(s.dialogue.toggle_task_done(&id)?).into_response())
}

async fn delete_note(State(s): St, ApiPath(id): ApiPath<String>) -> AppResult<Response> {
    Ok(Json(s.dialogue.delete_note(&id)?).into_response())
}

#[derive(Deserialize)]
struct TtsQuery {
    session: String,
    turn: usize,
}

async fn tts(State(s): St, ApiQuery(q): ApiQuery<TtsQuery>) -> AppResult<Response> {
    let (text, voice) = s.dialogue.speech_for_turn(&q.session, q.turn)?;
    match s.tts.speak(&text, &voice).await? {
        Speech::Disabled => Ok(Json(json!({ "status": "disabled" })).into_response()),
        Speech::Audio { bytes, mime } => Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response()),
    }
}
