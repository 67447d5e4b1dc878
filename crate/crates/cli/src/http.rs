//! HTTP front ends for the collection server and the mock engine.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde_json::json;
use serpaudit_core::mock_ise::MockEngine;
use serpaudit_core::server::{
    CollectionServer, ConfigReply, ExportFilter, RegisterRequest, ServerError,
};
use serpaudit_core::sim::mock_query_from_url;
use serpaudit_core::Submission;
use tokio::net::TcpListener;

#[derive(Clone)]
struct ServerState {
    server: Arc<CollectionServer>,
    admin_token: Arc<str>,
}

fn error_kind(e: &ServerError) -> (StatusCode, &'static str) {
    match e {
        ServerError::ConsentMissing => (StatusCode::BAD_REQUEST, "consent_missing"),
        ServerError::ValidationFailed(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"),
        ServerError::NoEligibleGroup(_) => (StatusCode::CONFLICT, "no_eligible_group"),
        ServerError::UnknownParticipant(_) => (StatusCode::FORBIDDEN, "unknown_participant"),
        ServerError::StudyMismatch { .. } => (StatusCode::CONFLICT, "study_mismatch"),
        ServerError::InvalidSubmission(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_submission"),
        ServerError::StaleConfig { .. } => (StatusCode::CONFLICT, "stale_config"),
        ServerError::Query(_) | ServerError::Rules(_) => (StatusCode::INTERNAL_SERVER_ERROR, "config_error"),
        ServerError::Storage(_) => (StatusCode::SERVICE_UNAVAILABLE, "storage"),
    }
}

fn error_response(e: ServerError) -> Response {
    let (status, kind) = error_kind(&e);
    let mut body = json!({ "error": kind, "message": e.to_string() });
    if let ServerError::ValidationFailed(fields) = &e {
        body["fields"] = json!(fields);
    }
    (status, Json(body)).into_response()
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": "bad_request", "message": message }))).into_response()
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServerError> + Send + 'static,
) -> Result<T, Response> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(error_response),
        Err(e) => Err((StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response()),
    }
}

async fn register(State(st): State<ServerState>, body: Result<Json<RegisterRequest>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    let server = Arc::clone(&st.server);
    match blocking(move || server.register(&req, Utc::now())).await {
        Ok(r) => Json(r).into_response(),
        Err(r) => r,
    }
}

async fn submit(State(st): State<ServerState>, body: Result<Json<Submission>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(sub) = match body {
        Ok(b) => b,
        Err(e) => return (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": "invalid_submission", "message": e.body_text() }))).into_response(),
    };
    let server = Arc::clone(&st.server);
    match blocking(move || server.ingest(&sub)).await {
        Ok(ack) => Json(ack).into_response(),
        Err(r) => r,
    }
}

async fn config(State(st): State<ServerState>, Query(q): Query<HashMap<String, String>>) -> Response {
    let v = match q.get("v").map(|v| v.parse::<u64>()) {
        None => 0,
        Some(Ok(v)) => v,
        Some(Err(e)) => return bad_request(format!("v: {e}")),
    };
    match st.server.serve_config(v) {
        ConfigReply::Update(bundle) => Json(bundle).into_response(),
        ConfigReply::NotModified => StatusCode::NOT_MODIFIED.into_response(),
    }
}

fn parse_time(raw: Option<&String>, name: &str) -> Result<Option<DateTime<Utc>>, Response> {
    raw.filter(|s| !s.is_empty())
        .map(|s| {
            DateTime::parse_from_rfc3339(s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| bad_request(format!("{name}: {e}")))
        })
        .transpose()
}

async fn export(
    State(st): State<ServerState>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if st.admin_token.is_empty() || presented != Some(&*st.admin_token) {
        return (StatusCode::UNAUTHORIZED, Json(json!({ "error": "unauthorized" }))).into_response();
    }
    let filter = match (|| -> Result<ExportFilter, Response> {
        let groups = q
            .get("groups")
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.split(',')
                    .map(|g| g.trim().parse::<u32>().map_err(|e| bad_request(format!("groups: {e}"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Ok(ExportFilter {
            from: parse_time(q.get("from"), "from")?,
            to: parse_time(q.get("to"), "to")?,
            groups,
        })
    })() {
        Ok(f) => f,
        Err(r) => return r,
    };
    let server = Arc::clone(&st.server);
    match blocking(move || server.export_corpus(&filter)).await {
        Ok(text) => ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], text).into_response(),
        Err(r) => r,
    }
}

async fn health(State(st): State<ServerState>) -> Response {
    let server = Arc::clone(&st.server);
    match blocking(move || server.health()).await {
        Ok(h) => Json(h).into_response(),
        Err(r) => r,
    }
}

pub fn collection_router(server: Arc<CollectionServer>, admin_token: &str) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/submit", post(submit))
        .route("/config", get(config))
        .route("/export", get(export))
        .route("/health", get(health))
        .with_state(ServerState {
            server,
            admin_token: Arc::from(admin_token),
        })
}

async fn search(State(engine): State<Arc<MockEngine>>, uri: axum::http::Uri) -> Response {
    let url = format!("http://mock{}", uri);
    let Some(query) = mock_query_from_url(&url) else {
        return bad_request("missing q".into());
    };
    let response = engine.search(&query);
    Html(response.page).into_response()
}

pub fn mock_router(engine: Arc<MockEngine>) -> Router {
    Router::new()
        .route("/search", get(search))
        .route("/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .with_state(engine)
}

/// Binds `addr` and serves `router` on the current runtime until the
/// returned future is dropped or fails.
pub async fn serve(router: Router, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router).await?;
    Ok(())
}

/// Serves `router` on a background thread with its own runtime, on an
/// ephemeral port when `addr` has port 0. Returns the bound address.
pub fn spawn_background(router: Router, addr: SocketAddr) -> anyhow::Result<SocketAddr> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let bound = std_listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    std::thread::spawn(move || {
        runtime.block_on(async move {
            let listener = TcpListener::from_std(std_listener).expect("listener");
            if let Err(e) = axum::serve(listener, router).await {
                tracing::error!(error = %e, "background server stopped");
            }
        });
    });
    Ok(bound)
}
