//! HTTP API and the per-client event channel.
//!
//! | method | path | who |
//! |--------|------|-----|
//! | POST | `/api/login` | anyone |
//! | GET | `/api/state` | player |
//! | POST | `/api/talk/finish` | player |
//! | PUT | `/api/code/{test,cut}` | player |
//! | POST | `/api/execute` | player |
//! | POST | `/api/activate` | player |
//! | POST | `/api/debug/start` | player |
//! | POST | `/api/fix` | player |
//! | POST | `/api/minigame/complete` | player |
//! | POST | `/api/admin/users/bulk` | admin |
//! | GET | `/api/admin/export` | admin |
//! | GET | `/api/events` | player (WebSocket) |
//!
//! Tokens go in `Authorization: Bearer <token>`; the event channel also
//! accepts `?token=` because browsers cannot set headers on WebSockets.

pub mod auth;
mod events;

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::clock::Clock;
use crate::content::ContentPack;
use crate::engine::minigame::PuzzleSolution;
use crate::engine::{CodeFile, Engine, EngineConfig, EngineError};
use crate::events::ExportFilter;
use crate::store::{Store, StoreError};
use auth::{Auth, AuthError, Credential, Session};

pub use events::{ChannelMessage, READY};

/// Scheduler period for sabotage deadlines and snapshot flushing.
pub const TICK: Duration = Duration::from_millis(100);

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub auth: Arc<Auth>,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub token_secret: Vec<u8>,
    pub token_ttl_secs: u64,
    pub engine: EngineConfig,
}

impl AppState {
    /// Wires the engine and the account table to one store and clock.
    pub fn new(
        pack: Arc<ContentPack>,
        store: Arc<dyn Store>,
        clock: Arc<dyn Clock>,
        config: ServerConfig,
    ) -> Result<Self, StoreError> {
        let auth = Auth::new(&config.token_secret, config.token_ttl_secs, clock.clone(), store.clone())?;
        let engine = Engine::new(pack, store, clock, config.engine)?;
        Ok(Self {
            engine: Arc::new(engine),
            auth: Arc::new(auth),
        })
    }
}

/// Serves `state` on `listener` with the sabotage scheduler running
/// alongside until the server stops.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    let scheduler = tokio::spawn(run_scheduler(state.engine.clone()));
    let result = axum::serve(listener, router(state)).await;
    scheduler.abort();
    result
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/login", post(login))
        .route("/api/state", get(get_state))
        .route("/api/talk/finish", post(finish_talk))
        .route("/api/code/{kind}", put(put_code))
        .route("/api/execute", post(execute))
        .route("/api/activate", post(activate))
        .route("/api/debug/start", post(start_debugging))
        .route("/api/fix", post(fix))
        .route("/api/minigame/complete", post(complete_minigame))
        .route("/api/admin/users/bulk", post(bulk_users))
        .route("/api/admin/export", get(export))
        .route("/api/events", get(events::channel))
        .with_state(state)
}

/// Runs [`Engine::tick`] forever at [`TICK`] intervals.
pub async fn run_scheduler(engine: Arc<Engine>) {
    let mut interval = tokio::time::interval(TICK);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let e = engine.clone();
        if let Err(err) = tokio::task::spawn_blocking(move || e.tick()).await {
            tracing::error!(error = %err, "scheduler tick panicked");
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            body: json!({ "error": message.to_string() }),
        }
    }

    fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        let status = match &e {
            AuthError::Unauthenticated | AuthError::BadCredentials => StatusCode::UNAUTHORIZED,
            AuthError::Forbidden => StatusCode::FORBIDDEN,
            AuthError::Exists(_) => StatusCode::CONFLICT,
            AuthError::InvalidName(_) | AuthError::BadRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
            AuthError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, &e)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Transition { phase, .. }
            | EngineError::EditForbidden { phase, .. }
            | EngineError::NothingToRun(phase) => {
                ApiError::new(StatusCode::CONFLICT, &e).with("phase", json!(phase))
            }
            EngineError::UnknownPuzzle | EngineError::GameComplete => {
                ApiError::new(StatusCode::CONFLICT, &e)
            }
            EngineError::Compile(ref err) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e).with("compileError", json!(err))
            }
            EngineError::Gate {
                coverage_percent,
                ref result,
            } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e)
                .with("coveragePercent", json!(coverage_percent))
                .with("result", json!(result)),
            EngineError::Solution(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, &e),
            EngineError::Store(_) => {
                tracing::error!(error = %e, "storage failure");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal storage error")
            }
        }
    }
}

fn bearer(parts: &Parts) -> Option<&str> {
    parts
        .headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

/// A request with a valid token.
pub struct Player(pub Session);

impl FromRequestParts<AppState> for Player {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = bearer(parts).ok_or(AuthError::Unauthenticated)?;
        Ok(Player(state.auth.verify(token)?))
    }
}

/// A request with a valid admin token.
pub struct Admin(pub Session);

impl FromRequestParts<AppState> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let Player(session) = Player::from_request_parts(parts, state).await?;
        if !session.is_admin() {
            return Err(AuthError::Forbidden.into());
        }
        Ok(Admin(session))
    }
}

/// Runs an engine operation off the async executor; suites may take
/// seconds.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, EngineError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => {
            tracing::error!(error = %e, "engine task failed");
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error"))
        }
    }
}

#[derive(Deserialize)]
struct LoginRequest {
    username: String,
    password: String,
}

async fn login(State(s): State<AppState>, Json(req): Json<LoginRequest>) -> Result<Response, ApiError> {
    let auth = s.auth.clone();
    let issued = tokio::task::spawn_blocking(move || auth.login(&req.username, &req.password))
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error"))??;
    Ok(Json(issued).into_response())
}

async fn get_state(State(s): State<AppState>, Player(p): Player) -> Result<Response, ApiError> {
    let view = blocking(move || s.engine.view(&p.username)).await?;
    Ok(Json(view).into_response())
}

async fn finish_talk(State(s): State<AppState>, Player(p): Player) -> Result<Response, ApiError> {
    let phase = blocking(move || s.engine.finish_talk(&p.username)).await?;
    Ok(Json(json!({ "phase": phase })).into_response())
}

#[derive(Deserialize)]
struct CodeBody {
    source: String,
}

async fn put_code(
    State(s): State<AppState>,
    Player(p): Player,
    Path(kind): Path<String>,
    Json(body): Json<CodeBody>,
) -> Result<Response, ApiError> {
    let file = match kind.as_str() {
        "test" => CodeFile::Test,
        "cut" => CodeFile::Cut,
        _ => return Err(ApiError::new(StatusCode::NOT_FOUND, "code kind must be test or cut")),
    };
    blocking(move || s.engine.put_code(&p.username, file, &body.source)).await?;
    Ok(Json(json!({ "ok": true })).into_response())
}

async fn execute(State(s): State<AppState>, Player(p): Player) -> Result<Response, ApiError> {
    let out = blocking(move || s.engine.execute(&p.username)).await?;
    Ok(Json(out).into_response())
}

async fn activate(State(s): State<AppState>, Player(p): Player) -> Result<Response, ApiError> {
    let out = blocking(move || s.engine.activate(&p.username)).await?;
    Ok(Json(out).into_response())
}

async fn start_debugging(State(s): State<AppState>, Player(p): Player) -> Result<Response, ApiError> {
    let phase = blocking(move || s.engine.start_debugging(&p.username)).await?;
    Ok(Json(json!({ "phase": phase })).into_response())
}

#[derive(Deserialize, Default)]
struct FixBody {
    source: Option<String>,
}

async fn fix(
    State(s): State<AppState>,
    Player(p): Player,
    body: Option<Json<FixBody>>,
) -> Result<Response, ApiError> {
    let source = body.map(|Json(b)| b).unwrap_or_default().source;
    let out = blocking(move || s.engine.submit_fix(&p.username, source.as_deref())).await?;
    Ok(Json(out).into_response())
}

async fn complete_minigame(
    State(s): State<AppState>,
    Player(p): Player,
    Json(solution): Json<PuzzleSolution>,
) -> Result<Response, ApiError> {
    let out = blocking(move || s.engine.complete_minigame(&p.username, &solution)).await?;
    Ok(Json(out).into_response())
}

#[derive(Deserialize)]
struct BulkRequest {
    count: u32,
    prefix: String,
}

#[derive(Deserialize, Default)]
struct ViewQuery {
    view: Option<String>,
}

async fn bulk_users(
    State(s): State<AppState>,
    Admin(_): Admin,
    Query(q): Query<ViewQuery>,
    Json(req): Json<BulkRequest>,
) -> Result<Response, ApiError> {
    let auth = s.auth.clone();
    let creds = tokio::task::spawn_blocking(move || auth.bulk_create(&req.prefix, req.count))
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal error"))??;
    if q.view.as_deref() == Some("print") {
        return Ok(Html(print_page(&creds)).into_response());
    }
    Ok(Json(json!({ "users": creds })).into_response())
}

/// One credential slip per account, for handing out in class.
pub fn print_page(creds: &[Credential]) -> String {
    let mut rows = String::new();
    for c in creds {
        rows.push_str(&format!(
            "<div class=\"slip\"><div>User: <b>{}</b></div><div>Password: <code>{}</code></div></div>\n",
            escape_html(&c.username),
            escape_html(&c.password)
        ));
    }
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Accounts</title>\
<style>body{{font-family:sans-serif}}.slip{{border:1px dashed #888;padding:8px;margin:6px;display:inline-block;width:220px}}\
@media print{{.slip{{break-inside:avoid}}}}</style></head><body>\n{rows}</body></html>\n"
    )
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

async fn export(
    State(s): State<AppState>,
    Admin(_): Admin,
    Query(filter): Query<ExportFilter>,
) -> Result<Response, ApiError> {
    let body = s.engine.log().export_json(&filter);
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}
