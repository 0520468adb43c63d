//! The JSON HTTP API.
//!
//! | Method | Path | Success |
//! |---|---|---|
//! | POST | `/clients` `{name, mobile}` | 201 `{id}`, 200 `{id}` for an existing client |
//! | GET | `/clients` | 200 list of clients |
//! | POST | `/preferences` `{category, constraints}` | 201 `{id}`, 200 `{id}` for an existing preference |
//! | GET | `/preferences` | 200 list of preferences |
//! | POST | `/clients/{id}/subscriptions` `{preference_id}` | 201, or 200 when already subscribed |
//! | GET | `/adverts?category=` | 200 list of adverts |
//! | POST | `/agents/{category}/start` | 202 agent status |
//! | POST | `/agents/{category}/stop` | 202 agent status |
//! | GET | `/agents` | 200 list of agent statuses |
//! | GET | `/status` | 200 `{counts, agents}` |
//!
//! Every error answers `{code, message}` with a non-2xx status.

use std::path::PathBuf;
use std::sync::Arc;

use adwatch_core::store::{Constraint, Insertion, StoreError};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::host::{AgentHost, HostError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::Validation(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message),
            StoreError::UnknownClient(_)
            | StoreError::UnknownPreference(_)
            | StoreError::UnknownAdvert(_)
            | StoreError::UnknownMessage(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
            StoreError::AlreadySent(_) => ApiError::new(StatusCode::CONFLICT, "conflict", message),
            StoreError::Storage { .. } | StoreError::Corrupt { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", message)
            }
        }
    }
}

fn host_error(e: HostError, category: &str) -> ApiError {
    match e {
        HostError::UnknownCategory => {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_category", format!("no agent configured for {category}"))
        }
        HostError::AlreadyRunning => {
            ApiError::new(StatusCode::CONFLICT, "already_running", format!("agent {category} is already running"))
        }
        HostError::NotRunning => {
            ApiError::new(StatusCode::CONFLICT, "not_running", format!("agent {category} is not running"))
        }
    }
}

/// Parses a JSON body, answering 400 for malformed JSON and 422 for a
/// well-formed body of the wrong shape.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_json", e.to_string()))?;
    serde_json::from_value(value).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()))
}

fn created(insertion: Insertion) -> Response {
    let status = if insertion.is_inserted() { StatusCode::CREATED } else { StatusCode::OK };
    (status, Json(json!({ "id": insertion.id() }))).into_response()
}

pub type AppState = Arc<AgentHost>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewClient {
    name: String,
    mobile: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewPreference {
    category: String,
    constraints: Vec<Constraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSubscription {
    preference_id: u64,
}

#[derive(Deserialize)]
struct AdvertQuery {
    category: Option<String>,
    #[serde(default)]
    since: u64,
}

#[derive(Serialize)]
struct Subscription {
    client_id: u64,
    preference_id: u64,
}

async fn post_client(State(host): State<AppState>, bytes: Bytes) -> Result<Response, ApiError> {
    let req: NewClient = body(&bytes)?;
    Ok(created(host.services().store.put_client(&req.name, &req.mobile)?))
}

async fn list_clients(State(host): State<AppState>) -> Response {
    Json(host.services().store.list_clients()).into_response()
}

async fn post_preference(State(host): State<AppState>, bytes: Bytes) -> Result<Response, ApiError> {
    let req: NewPreference = body(&bytes)?;
    Ok(created(host.services().store.put_preference(&req.category, req.constraints)?))
}

async fn list_preferences(State(host): State<AppState>) -> Response {
    Json(host.services().store.list_preferences()).into_response()
}

async fn post_subscription(
    State(host): State<AppState>,
    Path(client_id): Path<u64>,
    bytes: Bytes,
) -> Result<Response, ApiError> {
    let req: NewSubscription = body(&bytes)?;
    let new = host.services().store.subscribe(client_id, req.preference_id)?;
    let status = if new { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(Subscription { client_id, preference_id: req.preference_id })).into_response())
}

async fn list_adverts(State(host): State<AppState>, Query(q): Query<AdvertQuery>) -> Response {
    Json(host.services().store.list_adverts(q.category.as_deref(), q.since)).into_response()
}

async fn start_agent(State(host): State<AppState>, Path(category): Path<String>) -> Result<Response, ApiError> {
    let status = host.start(&category).await.map_err(|e| host_error(e, &category))?;
    Ok((StatusCode::ACCEPTED, Json(status)).into_response())
}

async fn stop_agent(State(host): State<AppState>, Path(category): Path<String>) -> Result<Response, ApiError> {
    let status = host.stop(&category).await.map_err(|e| host_error(e, &category))?;
    Ok((StatusCode::ACCEPTED, Json(status)).into_response())
}

async fn list_agents(State(host): State<AppState>) -> Response {
    Json(host.statuses()).into_response()
}

async fn status(State(host): State<AppState>) -> Response {
    Json(json!({ "counts": host.services().store.counts(), "agents": host.statuses() })).into_response()
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The API router; static files under `/ui` come from `ui_dir` when given.
pub fn router(host: AppState, ui_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new()
        .route("/clients", post(post_client).get(list_clients))
        .route("/clients/{id}/subscriptions", post(post_subscription))
        .route("/preferences", post(post_preference).get(list_preferences))
        .route("/adverts", get(list_adverts))
        .route("/agents", get(list_agents))
        .route("/agents/{category}/start", post(start_agent))
        .route("/agents/{category}/stop", post(stop_agent))
        .route("/status", get(status))
        .fallback(fallback)
        .with_state(host);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app
}
