//! HTTP JSON API over the annotation service, plus static files for the
//! browser workbench. See `docs/annotation-api.md` for payloads.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use multiqa::annotation::{AnnotationService, Stage};
use multiqa::{AnnotationError, TaxonomyLabel};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

/// Every mutation goes through this one lock, so log appends are serialized.
pub type Shared = Arc<Mutex<AnnotationService>>;

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: String) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: "bad_request", message }
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let (status, code) = match &e {
            AnnotationError::UnknownAnnotator(_) => (StatusCode::FORBIDDEN, "unknown_annotator"),
            AnnotationError::NotAdjudicator(_) => (StatusCode::FORBIDDEN, "not_adjudicator"),
            AnnotationError::NotAssigned { .. } => (StatusCode::FORBIDDEN, "not_assigned"),
            AnnotationError::UnknownInstance(_) => (StatusCode::NOT_FOUND, "unknown_instance"),
            AnnotationError::ConflictingResubmit { .. } => (StatusCode::CONFLICT, "conflicting_resubmit"),
            AnnotationError::InvalidLabel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_label"),
            AnnotationError::Log { .. } | AnnotationError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        Self { status, code, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

#[derive(Deserialize)]
struct TaskQuery {
    annotator: Option<String>,
    stage: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    annotator: String,
    instance_id: String,
    label: TaxonomyLabel,
}

fn lock(shared: &Shared) -> std::sync::MutexGuard<'_, AnnotationService> {
    shared.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

async fn task(State(shared): State<Shared>, Query(q): Query<TaskQuery>) -> Result<Response, ApiError> {
    let annotator = q.annotator.ok_or_else(|| ApiError::bad_request("missing query parameter `annotator`".into()))?;
    let stage: Stage = match q.stage.as_deref() {
        None => Stage::Full,
        Some(s) => s.parse().map_err(ApiError::bad_request)?,
    };
    let task = lock(&shared).next_task(&annotator, stage)?;
    Ok(Json(json!({ "task": task })).into_response())
}

async fn label(
    State(shared): State<Shared>,
    body: Result<Json<LabelBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let ack = lock(&shared).submit_label(&body.annotator, &body.instance_id, body.label)?;
    Ok(Json(ack).into_response())
}

async fn stats(State(shared): State<Shared>) -> Response {
    Json(lock(&shared).agreement_stats()).into_response()
}

async fn conflicts(State(shared): State<Shared>) -> Response {
    Json(json!({ "conflicts": lock(&shared).conflicts() })).into_response()
}

/// Builds the router. With `static_dir`, unmatched paths serve files from it.
pub fn router(service: AnnotationService, static_dir: Option<PathBuf>) -> Router {
    let shared: Shared = Arc::new(Mutex::new(service));
    let api = Router::new()
        .route("/api/task", get(task))
        .route("/api/label", post(label))
        .route("/api/stats", get(stats))
        .route("/api/conflicts", get(conflicts))
        .with_state(shared);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is interrupted.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).await
}
