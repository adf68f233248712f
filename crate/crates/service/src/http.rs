use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use serde_json::json;

use vte_core::corpus::SplitName;

use crate::error::ServiceError;
use crate::service::{AnnotationService, SubmitRequest};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Mutex<AnnotationService>>,
    pub image_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(service: AnnotationService, image_dir: Option<PathBuf>) -> Self {
        AppState {
            service: Arc::new(Mutex::new(service)),
            image_dir,
        }
    }

    fn lock(&self) -> MutexGuard<'_, AnnotationService> {
        // A panic while holding the lock cannot leave the store half
        // written, since appends are single writes.
        self.service.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ServiceError::UnknownWorker(_) | ServiceError::Unauthorized { .. } => (StatusCode::FORBIDDEN, "unauthorized"),
            ServiceError::QualityCheckFailed => (StatusCode::FORBIDDEN, "quality_check_failed"),
            ServiceError::NoWork { .. } => return StatusCode::NO_CONTENT.into_response(),
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"),
            ServiceError::Core(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let mut body = json!({ "error": code, "message": self.to_string() });
        if let ServiceError::Validation(items) = &self {
            body["items"] = json!(items);
        }
        (status, Json(body)).into_response()
    }
}

#[derive(Deserialize)]
struct BatchQuery {
    worker_id: String,
}

#[derive(Deserialize)]
struct ExportQuery {
    split: Option<String>,
}

async fn get_batch(State(state): State<AppState>, Query(q): Query<BatchQuery>) -> Result<Response, ServiceError> {
    let payload = state.lock().get_batch(&q.worker_id, Utc::now())?;
    Ok(Json(payload).into_response())
}

async fn submit(State(state): State<AppState>, Json(req): Json<SubmitRequest>) -> Result<Response, ServiceError> {
    let accepted = state.lock().submit(&req, Utc::now())?;
    Ok(Json(json!({ "status": "accepted", "batch_id": accepted.batch_id, "stored": accepted.stored })).into_response())
}

async fn export(State(state): State<AppState>, Query(q): Query<ExportQuery>) -> Result<Response, ServiceError> {
    let split = q
        .split
        .map(|s| s.parse::<SplitName>())
        .transpose()
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let body = state.lock().export(split);
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next().map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn image(State(state): State<AppState>, Path(name): Path<String>) -> Result<Response, ServiceError> {
    let dir = state
        .image_dir
        .as_ref()
        .ok_or_else(|| ServiceError::NotFound("no image directory configured".into()))?;
    if name.is_empty() || name.starts_with('.') || name.contains(['/', '\\']) {
        return Err(ServiceError::NotFound(format!("no image {name}")));
    }
    let bytes = tokio::fs::read(dir.join(&name))
        .await
        .map_err(|_| ServiceError::NotFound(format!("no image {name}")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&name))], bytes).into_response())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/batch", get(get_batch))
        .route("/api/submit", post(submit))
        .route("/api/export", get(export))
        .route("/images/{name}", get(image))
        .with_state(state)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
