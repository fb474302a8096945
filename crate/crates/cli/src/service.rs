//! Local HTTP service. Stateless: every request is an independent
//! computation run off the async executor.

use std::net::SocketAddr;

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use mogfit_core::QuadratureConfig;

use crate::handlers::{self, ErrorKind, ToolError};

pub const DEFAULT_PORT: u16 = 8377;
pub const DEFAULT_BIND: &str = "127.0.0.1";

#[derive(Clone, Default)]
struct AppState {
    /// Tolerance override from the environment, read once at startup.
    quadrature: Option<QuadratureConfig>,
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn failure(e: ToolError) -> Response {
    let status = match e.kind {
        ErrorKind::Validation => StatusCode::BAD_REQUEST,
        ErrorKind::Numerical => StatusCode::UNPROCESSABLE_ENTITY,
    };
    json(status, e.to_json() + "\n")
}

async fn blocking(work: impl FnOnce() -> Result<String, ToolError> + Send + 'static) -> Response {
    match tokio::task::spawn_blocking(work).await {
        Ok(Ok(body)) => json(StatusCode::OK, body),
        Ok(Err(e)) => failure(e),
        Err(e) => json(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("{{\"error\":{{\"kind\":\"internal\",\"message\":{:?}}}}}\n", e.to_string()),
        ),
    }
}

async fn health() -> Response {
    json(StatusCode::OK, handlers::health())
}

async fn spline(body: String) -> Response {
    blocking(move || handlers::spline(&handlers::parse_spline(&body)?, false)).await
}

async fn pipeline(State(state): State<AppState>, body: String) -> Response {
    blocking(move || handlers::pipeline(&handlers::parse_pipeline(&body, state.quadrature.as_ref())?, false)).await
}

async fn evaluate(State(state): State<AppState>, body: String) -> Response {
    blocking(move || handlers::evaluate_json(&handlers::parse_evaluate(&body, state.quadrature.as_ref())?, false)).await
}

/// Routes with an explicit tolerance override.
pub fn router_with(quadrature: Option<QuadratureConfig>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/spline", post(spline))
        .route("/v1/pipeline", post(pipeline))
        .route("/v1/evaluate", post(evaluate))
        .with_state(AppState { quadrature })
}

/// Routes configured from the environment.
pub fn router() -> Result<Router, ToolError> {
    Ok(router_with(handlers::quadrature_from_env()?))
}

/// Serves until Ctrl-C, letting in-flight requests finish.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let app = router().map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("mogfit listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
