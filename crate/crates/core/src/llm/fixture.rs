use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    fingerprint, response, CompletionBackend, CompletionRequest, CompletionResponse, LlmError, Role,
};

/// One row of a fixture table. Rows match either on an exact request
/// fingerprint or on `(tag, subject)`; a fingerprint row wins when both apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureEntry {
    pub tag: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    pub response: String,
}

/// Deterministic lookup-table backend.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    by_fingerprint: HashMap<String, String>,
    by_subject: HashMap<(Role, String), String>,
}

impl FixtureBackend {
    pub fn new(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut backend = Self::default();
        for entry in entries {
            backend.add(entry);
        }
        backend
    }

    pub fn add(&mut self, entry: FixtureEntry) {
        if let Some(fp) = entry.fingerprint {
            self.by_fingerprint.insert(fp, entry.response.clone());
        }
        if let Some(subject) = entry.subject {
            self.by_subject
                .insert((entry.tag, normalize_subject(&subject)), entry.response);
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let entries: Vec<FixtureEntry> = serde_json::from_str(text)?;
        Ok(Self::new(entries))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }

    pub fn len(&self) -> usize {
        self.by_fingerprint.len() + self.by_subject.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn normalize_subject(subject: &str) -> String {
    subject.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl CompletionBackend for FixtureBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let started = Instant::now();
        let text = self
            .by_fingerprint
            .get(&fingerprint(request))
            .or_else(|| {
                self.by_subject
                    .get(&(request.tag, normalize_subject(&request.subject)))
            })
            .ok_or_else(|| LlmError::FixtureMiss {
                tag: request.tag,
                subject: request.subject.clone(),
            })?;
        Ok(response(text, started, self.backend_id()))
    }

    fn backend_id(&self) -> &str {
        "fixture"
    }
}
