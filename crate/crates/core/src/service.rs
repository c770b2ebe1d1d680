//! HTTP front end over a loaded classifier head and topic index.
//!
//! Routes:
//! - `GET /v1/health`
//! - `POST /v1/recommend` with `{"vector":[…], "k":3}`
//! - `POST /v1/recommend_text` with `{"text":"…", "k":3}`, proxied through the
//!   encoder bridge's `POST /encode` (503 when no bridge is configured)

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classifier::ClassifierHead;
use crate::recommend::{recommend_for_abstract, RecommendError, TopicIndex};

pub struct AppState {
    head: ClassifierHead,
    index: TopicIndex,
    bridge_url: Option<String>,
    fallback_global: bool,
    http: reqwest::Client,
}

impl AppState {
    pub fn new(head: ClassifierHead, index: TopicIndex) -> Result<Self, RecommendError> {
        if head.topics() != index.topics() || head.dim() != index.dim() {
            return Err(RecommendError::Consistency(format!(
                "head is K={}, D={} but index is K={}, D={}",
                head.topics(),
                head.dim(),
                index.topics(),
                index.dim()
            )));
        }
        Ok(Self {
            head,
            index,
            bridge_url: None,
            fallback_global: false,
            http: reqwest::Client::new(),
        })
    }

    pub fn with_bridge(mut self, url: Option<String>) -> Self {
        self.bridge_url = url.map(|u| u.trim_end_matches('/').to_string());
        self
    }

    pub fn with_fallback_global(mut self, enabled: bool) -> Self {
        self.fallback_global = enabled;
        self
    }
}

#[derive(Debug, Deserialize)]
pub struct VectorRequest {
    pub vector: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
}

#[derive(Debug, Deserialize)]
pub struct TextRequest {
    pub text: String,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    1
}

#[derive(Serialize)]
struct EncodeRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EncodeResponse {
    vector: Vec<f64>,
}

pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::DimensionMismatch { expected, found } => ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("vector has dimension {found}, expected D={expected}"),
            ),
            RecommendError::ZeroK => ApiError::new(StatusCode::BAD_REQUEST, e.to_string()),
            RecommendError::NoCandidates { topic, probability } => ApiError {
                status: StatusCode::NOT_FOUND,
                body: json!({
                    "error": format!("no ELSI candidates for topic {topic}"),
                    "topic": topic,
                    "topic_probability": probability,
                }),
            },
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

fn answer(state: &AppState, vector: &[f64], k: usize) -> Result<Response, ApiError> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "vector contains non-finite values"));
    }
    let outcome = recommend_for_abstract(vector, &state.head, &state.index, k, state.fallback_global)?;
    Ok(Json(outcome).into_response())
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "topics": state.index.topics(),
        "elsi_articles": state.index.total_articles(),
    }))
}

async fn recommend_vector(
    State(state): State<Arc<AppState>>,
    body: Result<Json<VectorRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    answer(&state, &req.vector, req.k)
}

async fn recommend_text(
    State(state): State<Arc<AppState>>,
    body: Result<Json<TextRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Some(bridge) = state.bridge_url.as_deref() else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "no encoder bridge configured; POST an embedding to /v1/recommend instead",
        ));
    };
    let Json(req) = body?;
    if req.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "text must not be empty"));
    }
    let response = state
        .http
        .post(format!("{bridge}/encode"))
        .json(&EncodeRequest { text: &req.text })
        .send()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, format!("encoder bridge unreachable: {e}")))?;
    if !response.status().is_success() {
        return Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            format!("encoder bridge returned {}", response.status()),
        ));
    }
    let encoded: EncodeResponse = response
        .json()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, format!("bad encoder bridge response: {e}")))?;
    if encoded.vector.len() != state.index.dim() {
        return Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            format!(
                "encoder bridge returned dimension {}, expected D={}",
                encoded.vector.len(),
                state.index.dim()
            ),
        ));
    }
    answer(&state, &encoded.vector, req.k)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/recommend", post(recommend_vector))
        .route("/v1/recommend_text", post(recommend_text))
        .with_state(state)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
    log::info!("shutting down");
}

/// Serves until SIGINT or SIGTERM.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(shutdown_signal())
        .await
}
