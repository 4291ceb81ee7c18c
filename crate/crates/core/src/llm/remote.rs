use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;

use super::{response, CompletionBackend, CompletionRequest, CompletionResponse, LlmError};

/// Environment variable holding the bearer token. Keys are never read from
/// flags or config files.
pub const API_KEY_ENV: &str = "TASKFORGE_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiStyle {
    /// `POST {endpoint}/completions` with a `prompt` field.
    #[default]
    Completions,
    /// `POST {endpoint}/chat/completions`, prompt sent as one user message.
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base, 2*base, 4*base...
    pub fn backoff(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_style: ApiStyle,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct RemoteBackend {
    config: RemoteConfig,
    retry: RetryPolicy,
    api_key: Option<String>,
    agent: ureq::Agent,
}

enum Attempt {
    Done(String),
    Retry(LlmError, Option<Duration>),
    Fail(LlmError),
}

impl RemoteBackend {
    /// Reads the API key from [`API_KEY_ENV`] if set.
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            retry: RetryPolicy::default(),
            api_key,
            agent,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn url(&self) -> String {
        let base = self.config.endpoint.trim_end_matches('/');
        match self.config.api_style {
            ApiStyle::Completions => format!("{base}/completions"),
            ApiStyle::Chat => format!("{base}/chat/completions"),
        }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        match self.config.api_style {
            ApiStyle::Completions => body["prompt"] = json!(request.prompt),
            ApiStyle::Chat => {
                body["messages"] = json!([{ "role": "user", "content": request.prompt }])
            }
        }
        body
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let mut req = self.agent.post(url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(resp) => resp,
            Err(e) => {
                return Attempt::Retry(
                    LlmError::Transport {
                        attempts: 0,
                        message: e.to_string(),
                    },
                    None,
                )
            }
        };
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Attempt::Retry(LlmError::RateLimited { retry_after }, retry_after);
        }
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        if status >= 500 {
            return Attempt::Retry(
                LlmError::Transport {
                    attempts: 0,
                    message: format!("HTTP {status}"),
                },
                None,
            );
        }
        if !(200..300).contains(&status) {
            return Attempt::Fail(LlmError::Http { status, body: text });
        }
        match extract_text(self.config.api_style, &text) {
            Ok(t) => Attempt::Done(t),
            Err(e) => Attempt::Fail(e),
        }
    }
}

fn extract_text(style: ApiStyle, body: &str) -> Result<String, LlmError> {
    let value: Value = serde_json::from_str(body).map_err(|e| LlmError::Decode(e.to_string()))?;
    let choice = &value["choices"][0];
    let text = match style {
        ApiStyle::Completions => &choice["text"],
        ApiStyle::Chat => &choice["message"]["content"],
    };
    text.as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::Decode(format!("no completion text in {body}")))
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        let started = Instant::now();
        let url = self.url();
        let body = self.body(request);
        let mut retry = 0;
        loop {
            match self.attempt(&url, &body) {
                Attempt::Done(text) => return Ok(response(&text, started, self.backend_id())),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(err, hint) => {
                    if retry >= self.retry.max_retries {
                        return Err(match err {
                            LlmError::Transport { message, .. } => LlmError::Transport {
                                attempts: retry + 1,
                                message,
                            },
                            other => other,
                        });
                    }
                    let delay = hint.unwrap_or_else(|| self.retry.backoff(retry));
                    warn!(%err, ?delay, retry = retry + 1, "completion request failed, retrying");
                    std::thread::sleep(delay);
                    retry += 1;
                }
            }
        }
    }

    fn backend_id(&self) -> &str {
        "remote"
    }
}
