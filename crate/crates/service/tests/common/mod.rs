//! In-process server harness shared by the service tests and the acceptance suite.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use futures::StreamExt;
use serde_json::Value;
use taskforge::llm::{Failing, FixtureBackend};
use taskforge::{
    default_primitives, CompletionBackend, CompletionRequest, CompletionResponse, Engine, LlmError,
};
use taskforge_service::{AppState, ServiceConfig, SessionEvent};
use tokio::sync::oneshot;

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Backend that can hold calls until released.
pub struct Gated<B> {
    inner: B,
    state: Mutex<GateState>,
    cv: Condvar,
}

#[derive(Default)]
struct GateState {
    closed: bool,
    waiting: usize,
}

impl<B> Gated<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            state: Mutex::new(GateState::default()),
            cv: Condvar::new(),
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
    }

    pub fn open(&self) {
        self.state.lock().unwrap().closed = false;
        self.cv.notify_all();
    }

    /// Block until some call is parked at the gate.
    pub fn wait_for_blocked_call(&self) {
        let guard = self.state.lock().unwrap();
        let (_guard, timeout) = self
            .cv
            .wait_timeout_while(guard, Duration::from_secs(10), |s| s.waiting == 0)
            .unwrap();
        assert!(!timeout.timed_out(), "no call reached the gate");
    }
}

impl<B: CompletionBackend> CompletionBackend for Gated<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let mut state = self.state.lock().unwrap();
        state.waiting += 1;
        self.cv.notify_all();
        let mut state = self.cv.wait_while(state, |s| s.closed).unwrap();
        state.waiting -= 1;
        drop(state);
        self.inner.complete(request)
    }

    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
}

pub type TestBackend = Failing<Gated<FixtureBackend>>;

pub struct TestServer {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    pub backend: Arc<TestBackend>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl TestServer {
    pub async fn start() -> Self {
        let fixtures =
            FixtureBackend::from_path(root().join("fixtures/llm_fixtures.json")).unwrap();
        let backend = Arc::new(Failing::new(Gated::new(fixtures)));
        let engine = Arc::new(Engine::new(backend.clone()));
        let state = Arc::new(AppState::new(default_primitives().into_shared(), engine));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel();
        let config = ServiceConfig::default();
        let served = Arc::clone(&state);
        tokio::spawn(async move {
            taskforge_service::serve(listener, served, &config, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Self {
            addr,
            state,
            backend,
            shutdown: Some(tx),
        }
    }

    pub fn gate(&self) -> &Gated<FixtureBackend> {
        self.backend.inner()
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn post(&self, path: &str, body: Option<Value>) -> (u16, Value) {
        let url = self.url(path);
        tokio::task::spawn_blocking(move || {
            let agent = agent();
            let mut resp = match body {
                Some(b) => agent.post(&url).send_json(&b).unwrap(),
                None => agent.post(&url).send_empty().unwrap(),
            };
            let status = resp.status().as_u16();
            let value = resp.body_mut().read_json::<Value>().unwrap_or(Value::Null);
            (status, value)
        })
        .await
        .unwrap()
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let url = self.url(path);
        tokio::task::spawn_blocking(move || {
            let mut resp = agent().get(&url).call().unwrap();
            let status = resp.status().as_u16();
            let value = resp.body_mut().read_json::<Value>().unwrap_or(Value::Null);
            (status, value)
        })
        .await
        .unwrap()
    }

    pub async fn create_session(&self) -> String {
        let (status, body) = self.post("/v1/sessions", None).await;
        assert_eq!(status, 201);
        body["session_id"].as_str().unwrap().to_string()
    }

    pub async fn say(&self, id: &str, utterance: &str) -> (u16, Value) {
        self.post(
            &format!("/v1/sessions/{id}/utterances"),
            Some(serde_json::json!({ "utterance": utterance })),
        )
        .await
    }

    pub async fn events(&self, id: &str) -> EventStream {
        let url = format!("ws://{}/v1/sessions/{id}/events", self.addr);
        let (ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
        EventStream { ws }
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(20)))
        .build()
        .into()
}

pub struct EventStream {
    ws: tokio_tungstenite::WebSocketStream<
        tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>,
    >,
}

impl EventStream {
    pub async fn next(&mut self) -> SessionEvent {
        loop {
            let msg = tokio::time::timeout(Duration::from_secs(10), self.ws.next())
                .await
                .expect("event within timeout")
                .expect("stream open")
                .unwrap();
            if let tokio_tungstenite::tungstenite::Message::Text(text) = msg {
                return serde_json::from_str(&text).unwrap();
            }
        }
    }

    pub async fn take(&mut self, n: usize) -> Vec<SessionEvent> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.next().await);
        }
        out
    }

    /// True if nothing arrives within `wait`.
    pub async fn is_quiet(&mut self, wait: Duration) -> bool {
        tokio::time::timeout(wait, self.ws.next()).await.is_err()
    }
}
