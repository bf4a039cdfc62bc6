//! HTTP review service: geometry layers for the UI, versioned control
//! points, background recompute jobs and conflation refinement.
//!
//! Routes (all JSON, coordinates as `[x, y]` meters in the aligned frame):
//!
//! | method | path |
//! |---|---|
//! | GET | `/session/{id}` |
//! | GET | `/session/{id}/geometry/{layer}` |
//! | PUT | `/session/{id}/control-points` |
//! | POST | `/session/{id}/recompute/{stage}` |
//! | GET | `/session/{id}/job/{handle}` |
//! | POST | `/session/{id}/refinement` |
//! | GET | `/session/{id}/report/{stage}` |

pub mod layers;
pub mod session;

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde_json::{json, Value};

use mapfusion_core::align::ControlPointPair;

pub use layers::{Feature, Kind, Layer, LAYERS};
pub use session::{
    replay, Job, JobStatus, LogEntry, RefinementAction, Refined, Session, SessionInputs, Stage, StageStatus,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: u16,
    pub message: String,
    /// Offending control-point index for validation errors.
    pub index: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError { status: status.as_u16(), message: message.into(), index: None }
    }
    pub fn bad_request(m: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, m)
    }
    pub fn not_found(m: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, m)
    }
    pub fn conflict(m: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::CONFLICT, m)
    }
    pub fn internal(m: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, m)
    }
    pub fn invalid(index: usize, m: impl Into<String>) -> ApiError {
        ApiError { index: Some(index), ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m) }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let mut body = json!({ "error": self.message });
        if let Some(i) = self.index {
            body["index"] = i.into();
        }
        (status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

/// Sessions by id.
#[derive(Clone, Default)]
pub struct Service {
    sessions: Arc<BTreeMap<String, Arc<Session>>>,
}

impl Service {
    pub fn new(sessions: impl IntoIterator<Item = Session>) -> Service {
        Service { sessions: Arc::new(sessions.into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect()) }
    }

    pub fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions.get(id).cloned().ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/session/{id}", get(overview))
            .route("/session/{id}/geometry/{layer}", get(geometry))
            .route("/session/{id}/control-points", put(control_points))
            .route("/session/{id}/recompute/{stage}", post(recompute))
            .route("/session/{id}/job/{handle}", get(job))
            .route("/session/{id}/refinement", post(refinement))
            .route("/session/{id}/report/{stage}", get(report))
            .with_state(self)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn overview(State(svc): State<Service>, Path(id): Path<String>) -> ApiResult<Value> {
    Ok(Json(svc.session(&id)?.overview()))
}

async fn geometry(State(svc): State<Service>, Path((id, layer)): Path<(String, String)>) -> ApiResult<Layer> {
    let s = svc.session(&id)?;
    tokio::task::spawn_blocking(move || layers::geometry(&s, &layer))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(Json)
}

async fn control_points(
    State(svc): State<Service>,
    Path(id): Path<String>,
    body: Result<Json<Vec<ControlPointPair>>, JsonRejection>,
) -> ApiResult<Value> {
    let s = svc.session(&id)?;
    let Json(pairs) = body?;
    let n = pairs.len();
    let version = s.put_control_points(pairs).await?;
    Ok(Json(json!({ "version": version, "control_points": n })))
}

async fn recompute(
    State(svc): State<Service>,
    Path((id, stage)): Path<(String, String)>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let s = svc.session(&id)?;
    let stage: Stage = stage.parse()?;
    let handle = s.post_recompute(stage).await?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "handle": handle, "stage": stage }))))
}

async fn job(State(svc): State<Service>, Path((id, handle)): Path<(String, String)>) -> ApiResult<Job> {
    let s = svc.session(&id)?;
    let h: u64 = handle.parse().map_err(|_| ApiError::bad_request(format!("bad job handle '{handle}'")))?;
    s.job(h).map(Json).ok_or_else(|| ApiError::not_found(format!("unknown job {h}")))
}

async fn refinement(
    State(svc): State<Service>,
    Path(id): Path<String>,
    body: Result<Json<RefinementAction>, JsonRejection>,
) -> ApiResult<Value> {
    let s = svc.session(&id)?;
    let Json(action) = body?;
    s.post_refinement(action).await.map(Json)
}

async fn report(State(svc): State<Service>, Path((id, stage)): Path<(String, String)>) -> ApiResult<Value> {
    let s = svc.session(&id)?;
    s.report(stage.parse()?).map(Json)
}

/// Serve `service` on `bind` until the process is stopped.
pub async fn serve(service: Service, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("review service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, service.router()).await
}
