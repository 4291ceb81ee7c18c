//! HTTP and WebSocket surface for teaching sessions.
//!
//! Many sessions share one task library. Each session processes one turn at
//! a time; a second submission while a turn is in flight gets 409. Every
//! reply is returned in the response body and mirrored, with a gapless
//! per-session sequence number, onto the session's event stream.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use taskforge::learner::TranscriptEntry;
use taskforge::store::save_library;
use taskforge::{
    canonicalize, expand, AgentReply, DialogSession, Engine, LibraryDocument, Phase,
    PredicateInstance, SaveOptions, SharedLibrary, Signature, Term, TurnError, DEFAULT_MAX_DEPTH,
};
use tokio::sync::broadcast;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tracing::{info, warn};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    /// Origins allowed by CORS; `*` allows any.
    #[serde(default)]
    pub cors_origins: Vec<String>,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    AgentReply,
    LibraryUpdated,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub sequence: u64,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceBody {
    pub utterance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub phase: Phase,
    pub pending_question: Option<String>,
    pub stack_depth: usize,
    pub transcript: Vec<TranscriptEntry>,
}

struct EventLog {
    history: Vec<SessionEvent>,
    tx: broadcast::Sender<SessionEvent>,
}

impl EventLog {
    fn new() -> Self {
        Self {
            history: Vec::new(),
            tx: broadcast::channel(256).0,
        }
    }

    fn push(&mut self, kind: EventKind, payload: serde_json::Value) -> SessionEvent {
        let event = SessionEvent {
            sequence: self.history.len() as u64 + 1,
            kind,
            payload,
        };
        self.history.push(event.clone());
        let _ = self.tx.send(event.clone());
        event
    }
}

struct SessionHandle {
    session: Arc<tokio::sync::Mutex<DialogSession>>,
    events: Mutex<EventLog>,
}

/// Shared server state.
pub struct AppState {
    library: SharedLibrary,
    engine: Arc<Engine>,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
    library_path: Option<PathBuf>,
    save_options: SaveOptions,
}

impl AppState {
    pub fn new(library: SharedLibrary, engine: Arc<Engine>) -> Self {
        Self {
            library,
            engine,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            library_path: None,
            save_options: SaveOptions::default(),
        }
    }

    /// Save the library to `path` after every turn that changes it.
    pub fn persist_to(mut self, path: impl Into<PathBuf>, options: SaveOptions) -> Self {
        self.library_path = Some(path.into());
        self.save_options = options;
        self
    }

    pub fn library(&self) -> &SharedLibrary {
        &self.library
    }

    fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::NOT_FOUND,
                    "unknown_session",
                    format!("no session {id}"),
                )
            })
    }

    fn announce_library_update(&self, learned: &[Signature]) {
        let payload = serde_json::to_value(learned).expect("signatures serialize");
        for handle in self.sessions.lock().unwrap().values() {
            handle
                .events
                .lock()
                .unwrap()
                .push(EventKind::LibraryUpdated, payload.clone());
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_string(),
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn turn_error_status(err: &TurnError) -> (StatusCode, &'static str) {
    if err.is_backend_failure() {
        return (StatusCode::BAD_GATEWAY, "backend_failure");
    }
    match err {
        TurnError::Parser(taskforge::ParseError::BlankUtterance) => {
            (StatusCode::UNPROCESSABLE_ENTITY, "blank_utterance")
        }
        TurnError::Concluded => (StatusCode::CONFLICT, "session_concluded"),
        _ => (StatusCode::UNPROCESSABLE_ENTITY, "learning_error"),
    }
}

pub fn router(state: Arc<AppState>, config: &ServiceConfig) -> Router {
    let app = Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/utterances", post(submit))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/library", get(get_library))
        .route("/v1/library/{name}/{arity}/tree", get(get_plan_tree))
        .with_state(state);
    match cors_layer(&config.cors_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods(tower_http::cors::Any)
            .allow_headers(tower_http::cors::Any),
    )
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    config: &ServiceConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    info!(addr = %listener.local_addr()?, "dialog service listening");
    axum::serve(listener, router(state, config))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn create_session(State(state): State<Arc<AppState>>) -> (StatusCode, Json<CreatedSession>) {
    let n = state.next_id.fetch_add(1, Ordering::Relaxed);
    let id = format!("s{n:06}");
    let session = DialogSession::new(
        id.clone(),
        Arc::clone(&state.library),
        Arc::clone(&state.engine),
    );
    let handle = Arc::new(SessionHandle {
        session: Arc::new(tokio::sync::Mutex::new(session)),
        events: Mutex::new(EventLog::new()),
    });
    state.sessions.lock().unwrap().insert(id.clone(), handle);
    info!(session = %id, "session created");
    (StatusCode::CREATED, Json(CreatedSession { session_id: id }))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionView>, ApiError> {
    let handle = state.session(&id)?;
    let session = handle.session.try_lock().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "turn_in_flight",
            "a turn is being processed",
        )
    })?;
    Ok(Json(SessionView {
        session_id: id,
        phase: session.phase(),
        pending_question: session.pending_question(),
        stack_depth: session.stack().len(),
        transcript: session.transcript().to_vec(),
    }))
}

async fn submit(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<UtteranceBody>, JsonRejection>,
) -> Result<Json<AgentReply>, ApiError> {
    let handle = state.session(&id)?;
    let Json(body) =
        body.map_err(|e| ApiError::new(e.status(), "invalid_request", e.body_text()))?;
    let mut guard = Arc::clone(&handle.session).try_lock_owned().map_err(|_| {
        ApiError::new(
            StatusCode::CONFLICT,
            "turn_in_flight",
            "another turn on this session is still being processed",
        )
    })?;
    if body.utterance.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "blank_utterance",
            "utterance is blank",
        ));
    }
    let utterance = body.utterance;
    let (result, learned) = tokio::task::spawn_blocking(move || {
        let result = guard.submit_utterance(&utterance);
        (result, guard.learned_last_turn().to_vec())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;

    match result {
        Ok(reply) => {
            let payload = serde_json::to_value(&reply).expect("reply serializes");
            handle
                .events
                .lock()
                .unwrap()
                .push(EventKind::AgentReply, payload);
            if !learned.is_empty() {
                state.announce_library_update(&learned);
                if let Some(path) = &state.library_path {
                    let lib = state
                        .library
                        .read()
                        .unwrap_or_else(|e| e.into_inner())
                        .clone();
                    if let Err(err) = save_library(&lib, path, state.save_options) {
                        warn!(%err, "could not save library");
                    }
                }
            }
            Ok(Json(reply))
        }
        Err(err) => {
            let (status, code) = turn_error_status(&err);
            warn!(session = %id, %err, "turn failed");
            handle
                .events
                .lock()
                .unwrap()
                .push(EventKind::Error, serde_json::Value::String(err.to_string()));
            Err(ApiError::new(status, code, err.to_string()))
        }
    }
}

async fn events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let handle = state.session(&id)?;
    Ok(ws.on_upgrade(move |socket| stream_events(socket, handle)))
}

async fn stream_events(mut socket: WebSocket, handle: Arc<SessionHandle>) {
    // Snapshot and subscribe under one lock so no event is lost or repeated.
    let (history, mut rx) = {
        let log = handle.events.lock().unwrap();
        (log.history.clone(), log.tx.subscribe())
    };
    for event in history {
        if send_event(&mut socket, &event).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            received = rx.recv() => match received {
                Ok(event) => {
                    if send_event(&mut socket, &event).await.is_err() {
                        return;
                    }
                }
                // A lagging client reconnects and gets the full history again.
                Err(_) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send_event(socket: &mut WebSocket, event: &SessionEvent) -> Result<(), axum::Error> {
    let text = serde_json::to_string(event).expect("event serializes");
    socket.send(Message::Text(text.into())).await
}

async fn get_library(State(state): State<Arc<AppState>>) -> Json<LibraryDocument> {
    let lib = state.library.read().unwrap_or_else(|e| e.into_inner());
    Json(LibraryDocument::from_library(&lib, SaveOptions::default()))
}

#[derive(Debug, Deserialize)]
struct TreeQuery {
    #[serde(default)]
    args: String,
}

async fn get_plan_tree(
    State(state): State<Arc<AppState>>,
    Path((name, arity)): Path<(String, usize)>,
    Query(query): Query<TreeQuery>,
) -> Result<Response, ApiError> {
    let unprocessable =
        |msg: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", msg);
    let name = canonicalize(&name).map_err(|e| unprocessable(e.to_string()))?;
    let sig = Signature::new(name.clone(), arity);
    let args = split_args(&query.args)
        .into_iter()
        .map(|a| Term::constant(&a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| unprocessable(e.to_string()))?;
    let lib = state.library.read().unwrap_or_else(|e| e.into_inner());
    if !lib.contains(&sig) {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_signature",
            format!("{sig} is not defined"),
        ));
    }
    if args.len() != arity {
        return Err(unprocessable(format!(
            "{sig} takes {arity} arguments, got {}",
            args.len()
        )));
    }
    let tree = expand(&lib, &PredicateInstance::new(name, args), DEFAULT_MAX_DEPTH)
        .map_err(|e| unprocessable(e.to_string()))?;
    Ok(Json(tree).into_response())
}

/// `"pepper, cupboard"` → `["pepper", "cupboard"]`; empty input → none.
pub fn split_args(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(str::to_string)
        .collect()
}
