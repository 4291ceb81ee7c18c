//! `--backend` specs: `live`, `fixture:PATH`, `replay:PATH`, `record:PATH`.

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use clap::Args;
use taskforge::llm::{
    ApiStyle, Cassette, FixtureBackend, RemoteBackend, RemoteConfig, RetryPolicy,
};
use taskforge::CompletionBackend;

use crate::error::CliError;

pub const DEFAULT_BACKEND: &str = "fixture:fixtures/llm_fixtures.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Live,
    Fixture(PathBuf),
    Replay(PathBuf),
    Record(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "live" {
            return Ok(BackendSpec::Live);
        }
        let (kind, path) = s.split_once(':').ok_or_else(|| {
            format!("expected live, fixture:PATH, replay:PATH or record:PATH, got {s:?}")
        })?;
        if path.is_empty() {
            return Err(format!("{kind}: needs a path"));
        }
        let path = PathBuf::from(path);
        match kind {
            "fixture" => Ok(BackendSpec::Fixture(path)),
            "replay" => Ok(BackendSpec::Replay(path)),
            "record" => Ok(BackendSpec::Record(path)),
            other => Err(format!("unknown backend kind {other:?}")),
        }
    }
}

/// Backend selection shared by the subcommands that talk to a model.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// live | fixture:PATH | replay:PATH | record:PATH
    #[arg(long, default_value = DEFAULT_BACKEND)]
    pub backend: BackendSpec,
    /// Base URL of the OpenAI-compatible endpoint (live and record).
    #[arg(
        long,
        env = "TASKFORGE_ENDPOINT",
        default_value = "https://api.openai.com/v1"
    )]
    pub endpoint: String,
    #[arg(
        long,
        env = "TASKFORGE_MODEL",
        default_value = "gpt-3.5-turbo-instruct"
    )]
    pub model: String,
    #[arg(long, value_enum, default_value_t = StyleArg::Completions)]
    pub api_style: StyleArg,
    /// Retries for transport errors, 429 and 5xx responses.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StyleArg {
    Completions,
    Chat,
}

impl BackendArgs {
    pub fn remote_config(&self) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_style: match self.api_style {
                StyleArg::Completions => ApiStyle::Completions,
                StyleArg::Chat => ApiStyle::Chat,
            },
            timeout_secs: 60,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, CliError> {
        let retry = RetryPolicy {
            max_retries: self.retries,
            ..RetryPolicy::default()
        };
        build(&self.backend, || self.remote_config(), retry)
    }
}

pub fn build(
    spec: &BackendSpec,
    remote: impl FnOnce() -> RemoteConfig,
    retry: RetryPolicy,
) -> Result<Arc<dyn CompletionBackend>, CliError> {
    Ok(match spec {
        BackendSpec::Live => Arc::new(RemoteBackend::new(remote()).with_retry(retry)),
        BackendSpec::Fixture(path) => {
            Arc::new(FixtureBackend::from_path(path).map_err(CliError::io)?)
        }
        BackendSpec::Replay(path) => Arc::new(Cassette::replay(path).map_err(CliError::io)?),
        BackendSpec::Record(path) => {
            let live: Arc<dyn CompletionBackend> =
                Arc::new(RemoteBackend::new(remote()).with_retry(retry));
            Arc::new(Cassette::record(path, live).map_err(CliError::io)?)
        }
    })
}
