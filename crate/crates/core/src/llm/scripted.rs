use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use super::{response, CompletionBackend, CompletionRequest, CompletionResponse, LlmError, Role};

/// Returns queued completions in order and keeps every request it saw.
#[derive(Debug, Default)]
pub struct Scripted {
    queue: Mutex<VecDeque<String>>,
    seen: Mutex<Vec<CompletionRequest>>,
}

impl Scripted {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            seen: Mutex::default(),
        }
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl CompletionBackend for Scripted {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let started = Instant::now();
        self.seen.lock().unwrap().push(request.clone());
        let text = self
            .queue
            .lock()
            .unwrap()
            .pop_front()
            .ok_or(LlmError::Exhausted)?;
        Ok(response(&text, started, self.backend_id()))
    }

    fn backend_id(&self) -> &str {
        "scripted"
    }
}

/// Call-counting wrapper.
#[derive(Debug)]
pub struct Counting<B> {
    inner: B,
    parse: AtomicUsize,
    matches: AtomicUsize,
}

impl<B> Counting<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            parse: AtomicUsize::new(0),
            matches: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self, role: Role) -> usize {
        match role {
            Role::Parse => self.parse.load(Ordering::SeqCst),
            Role::Match => self.matches.load(Ordering::SeqCst),
        }
    }

    pub fn total(&self) -> usize {
        self.calls(Role::Parse) + self.calls(Role::Match)
    }

    pub fn reset(&self) {
        self.parse.store(0, Ordering::SeqCst);
        self.matches.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for Counting<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        match request.tag {
            Role::Parse => self.parse.fetch_add(1, Ordering::SeqCst),
            Role::Match => self.matches.fetch_add(1, Ordering::SeqCst),
        };
        self.inner.complete(request)
    }

    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
}

/// Wrapper that fails every call while armed.
#[derive(Debug)]
pub struct Failing<B> {
    inner: B,
    armed: AtomicBool,
}

impl<B> Failing<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            armed: AtomicBool::new(false),
        }
    }

    pub fn arm(&self, on: bool) {
        self.armed.store(on, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for Failing<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        if self.armed.load(Ordering::SeqCst) {
            return Err(LlmError::Injected(format!(
                "{} request refused",
                request.tag
            )));
        }
        self.inner.complete(request)
    }

    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
}
