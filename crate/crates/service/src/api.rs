//! JSON API under `/api/v1`, plus static hosting of the built web client.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use litscout_core::engine::NewProject;
use litscout_core::error::{DocumentError, Error};
use litscout_core::tracking::{RunTrigger, UpdateFrequency};
use litscout_core::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::{ServeDir, ServeFile};

pub const API_BASE: &str = "/api/v1";

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    /// Bearer token required on API calls when set.
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self {
            engine,
            token: None,
            static_dir: None,
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_static_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.static_dir = dir;
        self
    }
}

/// Error body returned by every failing API call. `machine_code` values
/// are stable; clients branch on them, not on `message`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status_code: u16,
    pub machine_code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status_code: status.as_u16(),
            machine_code: code.to_owned(),
            message: message.into(),
        }
    }

    fn invalid_body(e: JsonRejection) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_body", e.body_text())
    }

    fn invalid_query(e: QueryRejection) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_query", e.body_text())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::NotFound { .. } => (StatusCode::NOT_FOUND, "not_found"),
            Error::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"),
            Error::Duplicate { .. } => (StatusCode::CONFLICT, "duplicate"),
            Error::Busy(_) => (StatusCode::CONFLICT, "busy"),
            Error::NoBaseline(_) => (StatusCode::CONFLICT, "no_baseline"),
            Error::Document(DocumentError::MalformedAddress { .. }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed")
            }
            Error::Document(_) => (StatusCode::BAD_GATEWAY, "document_unavailable"),
            Error::Provider(_) => (StatusCode::BAD_GATEWAY, "provider_failed"),
            Error::Parse(_) => (StatusCode::BAD_GATEWAY, "provider_output_invalid"),
            Error::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage_failed"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "request failed");
        }
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status_code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Engine calls touch the filesystem and providers; keep them off the
/// async workers.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> litscout_core::Result<T> + Send + 'static,
{
    let engine = state.engine.clone();
    match tokio::task::spawn_blocking(move || f(&engine)).await {
        Ok(r) => r.map(Json).map_err(ApiError::from),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            format!("worker failed: {e}"),
        )),
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/projects", get(list_projects).post(create_project))
        .route("/projects/{id}", get(project_details))
        .route("/projects/{id}/state", patch(patch_state))
        .route("/projects/{id}/settings", patch(patch_settings))
        .route("/projects/{id}/suggestions", get(suggestions))
        .route("/projects/{id}/document", get(document))
        .route("/projects/{id}/questions", get(questions).post(add_question))
        .route("/projects/{id}/papers", get(papers))
        .route("/projects/{id}/runs", get(runs))
        .route("/projects/{id}/runs/{run_id}", get(run))
        .route("/projects/{id}/refresh", post(refresh))
        .route("/questions/{qid}", get(question))
        .route("/questions/{qid}/track", post(track))
        .route("/papers/{pid}", patch(patch_paper).delete(delete_paper))
        .fallback(api_not_found)
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(health))
        .with_state(state.clone());

    let app = Router::new().nest(API_BASE, api);
    match &state.static_dir {
        // Unknown paths get index.html so client-side routes such as the
        // dashboard link in notifications resolve.
        Some(dir) => app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => app.fallback(no_client),
    }
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(expected) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(expected.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn no_client() -> impl IntoResponse {
    (
        StatusCode::NOT_FOUND,
        "web client not installed; set static_dir in the config\n",
    )
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_projects(State(s): State<AppState>) -> ApiResult<Value> {
    blocking(&s, |e| {
        let projects = e.list_projects()?;
        Ok(json!({ "projects": projects }))
    })
    .await
}

async fn create_project(
    State(s): State<AppState>,
    body: Result<Json<NewProject>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(input) = body.map_err(ApiError::invalid_body)?;
    let Json(details) = blocking(&s, move |e| {
        let record = e.create_project(input)?;
        e.project_details(&record.project_id)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(details).unwrap_or_default())))
}

async fn project_details(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    blocking(&s, move |e| Ok(serde_json::to_value(e.project_details(&id)?).unwrap_or_default())).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatePatch {
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    clear_override: bool,
}

async fn patch_state(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<StatePatch>, JsonRejection>,
) -> ApiResult<Value> {
    let Json(patch) = body.map_err(ApiError::invalid_body)?;
    match (patch.label, patch.clear_override) {
        (Some(label), false) => {
            blocking(&s, move |e| Ok(json!({ "state": e.apply_state_override(&id, &label)? }))).await
        }
        (None, true) => blocking(&s, move |e| Ok(json!({ "state": e.clear_state_override(&id)? }))).await,
        _ => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation_failed",
            "send either label or clear_override: true",
        )),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SettingsPatch {
    frequency: UpdateFrequency,
}

async fn patch_settings(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SettingsPatch>, JsonRejection>,
) -> ApiResult<Value> {
    let Json(patch) = body.map_err(ApiError::invalid_body)?;
    blocking(&s, move |e| {
        e.set_update_frequency(&id, patch.frequency)?;
        Ok(serde_json::to_value(e.project_details(&id)?).unwrap_or_default())
    })
    .await
}

#[derive(Debug, Deserialize)]
struct SinceRun {
    since_run: Option<String>,
}

async fn suggestions(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<SinceRun>, QueryRejection>,
) -> ApiResult<Value> {
    let Query(q) = q.map_err(ApiError::invalid_query)?;
    blocking(&s, move |e| {
        let list = e.suggestions(&id, q.since_run.as_deref())?;
        Ok(json!({ "project_id": id, "suggestions": list }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct RevisionQuery {
    revision: Option<u64>,
}

async fn document(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RevisionQuery>, QueryRejection>,
) -> ApiResult<Value> {
    let Query(q) = q.map_err(ApiError::invalid_query)?;
    blocking(&s, move |e| Ok(serde_json::to_value(e.document_view(&id, q.revision)?).unwrap_or_default())).await
}

async fn questions(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    blocking(&s, move |e| {
        let list = e.questions(&id)?;
        Ok(json!({ "project_id": id, "questions": list }))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuestionBody {
    text: String,
}

async fn add_question(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<QuestionBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(body) = body.map_err(ApiError::invalid_body)?;
    let Json(q) = blocking(&s, move |e| e.add_user_question(&id, &body.text)).await?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(q).unwrap_or_default())))
}

async fn question(State(s): State<AppState>, Path(qid): Path<String>) -> ApiResult<Value> {
    blocking(&s, move |e| Ok(serde_json::to_value(e.question_details(&qid)?).unwrap_or_default())).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackBody {
    tracked: bool,
}

async fn track(
    State(s): State<AppState>,
    Path(qid): Path<String>,
    body: Result<Json<TrackBody>, JsonRejection>,
) -> ApiResult<Value> {
    let Json(body) = body.map_err(ApiError::invalid_body)?;
    blocking(&s, move |e| Ok(serde_json::to_value(e.set_tracked(&qid, body.tracked)?).unwrap_or_default())).await
}

async fn papers(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    blocking(&s, move |e| {
        let list = e.catalog(&id)?;
        Ok(json!({ "project_id": id, "papers": list }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ProjectHint {
    project: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PaperPatch {
    relation: String,
}

async fn patch_paper(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    q: Result<Query<ProjectHint>, QueryRejection>,
    body: Result<Json<PaperPatch>, JsonRejection>,
) -> ApiResult<Value> {
    let Query(q) = q.map_err(ApiError::invalid_query)?;
    let Json(body) = body.map_err(ApiError::invalid_body)?;
    blocking(&s, move |e| {
        let project = e.find_paper_project(&pid, q.project.as_deref())?;
        Ok(serde_json::to_value(e.set_paper_relation(&project, &pid, &body.relation)?).unwrap_or_default())
    })
    .await
}

async fn delete_paper(
    State(s): State<AppState>,
    Path(pid): Path<String>,
    q: Result<Query<ProjectHint>, QueryRejection>,
) -> ApiResult<Value> {
    let Query(q) = q.map_err(ApiError::invalid_query)?;
    blocking(&s, move |e| {
        let project = e.find_paper_project(&pid, q.project.as_deref())?;
        Ok(serde_json::to_value(e.remove_paper(&project, &pid)?).unwrap_or_default())
    })
    .await
}

async fn runs(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Value> {
    blocking(&s, move |e| {
        let list = e.runs(&id)?;
        Ok(json!({ "project_id": id, "runs": list }))
    })
    .await
}

async fn run(State(s): State<AppState>, Path((id, run_id)): Path<(String, String)>) -> ApiResult<Value> {
    blocking(&s, move |e| Ok(serde_json::to_value(e.run(&id, &run_id)?).unwrap_or_default())).await
}

/// Accept a manual run and execute it in the background. The run lock is
/// taken before replying, so a second refresh gets 409 straight away.
async fn refresh(State(s): State<AppState>, Path(id): Path<String>) -> Result<(StatusCode, Json<Value>), ApiError> {
    let engine = s.engine.clone();
    let Json(ticket) = blocking(&s, move |e| e.begin_run(&id, RunTrigger::Manual, None)).await?;
    let body = json!({
        "project_id": ticket.project_id,
        "run_id": ticket.run_id,
        "status": "accepted",
    });
    tokio::task::spawn_blocking(move || {
        let (project, run_id) = (ticket.project_id.clone(), ticket.run_id.clone());
        match engine.execute(ticket) {
            Ok(run) => tracing::info!(%project, %run_id, status = ?run.status, "manual run finished"),
            Err(err) => tracing::error!(%project, %run_id, error = %err, "manual run could not be recorded"),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(body)))
}
