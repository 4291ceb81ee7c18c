use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{
    fingerprint, response, CompletionBackend, CompletionRequest, CompletionResponse, LlmError, Role,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    Record,
    Replay,
}

/// One recorded exchange. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub tag: Role,
    pub prompt: String,
    pub response: String,
}

struct Tape {
    entries: Vec<CassetteEntry>,
    index: HashMap<String, usize>,
}

impl Tape {
    fn new(entries: Vec<CassetteEntry>) -> Self {
        let mut index = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            index.entry(e.fingerprint.clone()).or_insert(i);
        }
        Self { entries, index }
    }

    fn lookup(&self, fp: &str) -> Option<&CassetteEntry> {
        self.index.get(fp).map(|&i| &self.entries[i])
    }
}

/// Record/replay backend persisted as a JSON array.
///
/// Replay never touches the network: a miss is [`LlmError::ReplayMiss`].
/// Record forwards to the inner backend and rewrites the file after each new
/// exchange; appends are serialized by the tape lock.
pub struct Cassette {
    mode: CassetteMode,
    path: PathBuf,
    tape: Mutex<Tape>,
    inner: Option<Arc<dyn CompletionBackend>>,
}

impl Cassette {
    pub fn replay(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let entries = read_entries(&path)?;
        Ok(Self {
            mode: CassetteMode::Replay,
            path,
            tape: Mutex::new(Tape::new(entries)),
            inner: None,
        })
    }

    /// Record through `inner`. Existing entries in the file are kept and
    /// answered from the tape.
    pub fn record(
        path: impl AsRef<Path>,
        inner: Arc<dyn CompletionBackend>,
    ) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            read_entries(&path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            mode: CassetteMode::Record,
            path,
            tape: Mutex::new(Tape::new(entries)),
            inner: Some(inner),
        })
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    pub fn entries(&self) -> Vec<CassetteEntry> {
        self.tape.lock().unwrap().entries.clone()
    }
}

fn read_entries(path: &Path) -> Result<Vec<CassetteEntry>, LlmError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
}

fn write_entries(path: &Path, entries: &[CassetteEntry]) -> Result<(), LlmError> {
    let mut text =
        serde_json::to_string_pretty(entries).map_err(|e| LlmError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
}

impl CompletionBackend for Cassette {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let started = Instant::now();
        let fp = fingerprint(request);
        // Held across the inner call so concurrent recorders append in order.
        let mut tape = self.tape.lock().unwrap();
        if let Some(entry) = tape.lookup(&fp) {
            return Ok(response(&entry.response, started, self.backend_id()));
        }
        let Some(inner) = self
            .inner
            .as_ref()
            .filter(|_| self.mode == CassetteMode::Record)
        else {
            return Err(LlmError::ReplayMiss {
                fingerprint: fp,
                tag: request.tag,
            });
        };
        let live = inner.complete(request)?;
        debug!(fingerprint = %fp, tag = %request.tag, "recording exchange");
        let idx = tape.entries.len();
        tape.entries.push(CassetteEntry {
            fingerprint: fp.clone(),
            tag: request.tag,
            prompt: request.prompt.clone(),
            response: live.text.clone(),
        });
        tape.index.insert(fp, idx);
        write_entries(&self.path, &tape.entries)?;
        Ok(CompletionResponse {
            backend_id: self.backend_id().to_string(),
            ..live
        })
    }

    fn backend_id(&self) -> &str {
        match self.mode {
            CassetteMode::Record => "cassette-record",
            CassetteMode::Replay => "cassette-replay",
        }
    }
}
