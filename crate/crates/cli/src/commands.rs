use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use taskforge::llm::RemoteConfig;
use taskforge::store::{load_library, save_library};
use taskforge::{
    default_primitives, evaluate, expand, load_script, replay_script, DialogSession, Engine,
    PredicateInstance, ReplayReport, SaveOptions, Signature, TaskLibrary, Term, DEFAULT_MAX_DEPTH,
};
use taskforge_service::{AppState, ServiceConfig};

use crate::backend::{self, BackendArgs, BackendSpec, DEFAULT_BACKEND};
use crate::error::CliError;
use crate::TreeFormat;

fn save_options(no_provenance: bool) -> SaveOptions {
    if no_provenance {
        SaveOptions::without_provenance()
    } else {
        SaveOptions::default()
    }
}

fn starting_library(primitives: Option<&Path>) -> Result<TaskLibrary, CliError> {
    match primitives {
        Some(path) => load_library(path).map_err(CliError::io),
        None => Ok(default_primitives()),
    }
}

fn session_over(library: TaskLibrary, backend: &BackendArgs) -> Result<DialogSession, CliError> {
    let engine = Arc::new(Engine::new(backend.build()?));
    Ok(DialogSession::new("cli", library.into_shared(), engine))
}

pub fn teach(
    library_path: &Path,
    primitives: Option<&Path>,
    no_provenance: bool,
    backend: &BackendArgs,
) -> Result<(), CliError> {
    let library = if library_path.exists() {
        load_library(library_path).map_err(CliError::io)?
    } else {
        starting_library(primitives)?
    };
    let mut session = session_over(library, backend)?;
    let stdin = std::io::stdin();
    let interactive = stdin.is_terminal();
    let mut stdout = std::io::stdout();
    if interactive {
        eprintln!(
            "Teach me a task. Ctrl-D saves to {} and exits.",
            library_path.display()
        );
    }
    let mut lines = stdin.lock().lines();
    loop {
        if interactive {
            let prompt = if session.pending_clarification().is_some() {
                "? "
            } else {
                "> "
            };
            eprint!("{prompt}");
            let _ = std::io::stderr().flush();
        }
        let Some(line) = lines.next() else { break };
        let line = line.map_err(CliError::io)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == ":quit" || line == ":q" {
            break;
        }
        match session.submit_utterance(line) {
            Ok(reply) => {
                writeln!(stdout, "{}", reply.text).map_err(CliError::io)?;
            }
            Err(err) => eprintln!("error: {err}"),
        }
    }
    let lib = session
        .library()
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .clone();
    save_library(&lib, library_path, save_options(no_provenance)).map_err(CliError::io)?;
    if interactive {
        eprintln!(
            "Saved {} definitions to {}.",
            lib.len(),
            library_path.display()
        );
    }
    Ok(())
}

fn print_report(report: &ReplayReport) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    for (i, turn) in report.turns.iter().enumerate() {
        writeln!(out, "> {}", turn.utterance).map_err(CliError::io)?;
        writeln!(out, "{}", turn.reply.text).map_err(CliError::io)?;
        if let Some(m) = &turn.mismatch {
            writeln!(out, "! turn {}: {m}", i + 1).map_err(CliError::io)?;
        }
    }
    Ok(())
}

fn run_script(
    script: &Path,
    backend: &BackendArgs,
    primitives: Option<&Path>,
) -> Result<(ReplayReport, TaskLibrary), CliError> {
    let script = load_script(script).map_err(CliError::io)?;
    let mut session = session_over(starting_library(primitives)?, backend)?;
    let report = replay_script(&mut session, &script);
    let lib = session
        .library()
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .clone();
    Ok((report, lib))
}

fn backend_failure(report: &ReplayReport) -> Option<CliError> {
    report.turns.iter().find(|t| t.backend_failure).map(|t| {
        CliError::backend(anyhow::anyhow!(
            "backend failed on {:?}: {}",
            t.utterance,
            t.error.as_deref().unwrap_or_default()
        ))
    })
}

pub fn replay(
    script: &Path,
    backend: &BackendArgs,
    out: Option<&Path>,
    strict: bool,
    no_provenance: bool,
    primitives: Option<&Path>,
) -> Result<(), CliError> {
    let (report, lib) = run_script(script, backend, primitives)?;
    print_report(&report)?;
    println!(
        "replay: {} turns, {} questions, {} learned, {} errors, {} mismatches",
        report.turns.len(),
        report.questions(),
        lib.learned().count(),
        report.errors().count(),
        report.mismatches().count()
    );
    if let Some(out) = out {
        save_library(&lib, out, save_options(no_provenance)).map_err(CliError::io)?;
    }
    if let Some(err) = backend_failure(&report) {
        return Err(err);
    }
    if strict && !report.is_clean() {
        return Err(CliError::assertion(format!(
            "{} expectation mismatches, {} failed turns",
            report.mismatches().count(),
            report.errors().count()
        )));
    }
    Ok(())
}

pub fn eval(
    script: &Path,
    reference: &Path,
    backend: &BackendArgs,
    primitives: Option<&Path>,
) -> Result<(), CliError> {
    let reference = load_library(reference).map_err(CliError::io)?;
    let (report, lib) = run_script(script, backend, primitives)?;
    for (i, turn) in report.mismatches() {
        eprintln!(
            "warning: turn {}: {}",
            i + 1,
            turn.mismatch.as_deref().unwrap_or_default()
        );
    }
    if let Some(err) = backend_failure(&report) {
        return Err(err);
    }
    let result = evaluate(&lib, &reference);
    if result.passed() {
        println!(
            "eval: learned library matches the reference ({} learned tasks, {} questions)",
            result.learned,
            report.questions()
        );
        Ok(())
    } else {
        println!(
            "eval: {} differences ({} learned, {} in reference)",
            result.differences.len(),
            result.learned,
            result.reference_learned
        );
        for d in &result.differences {
            println!("  {d}");
        }
        Err(CliError::assertion(
            "learned library differs from the reference",
        ))
    }
}

pub fn tree(
    library: &Path,
    task: &Signature,
    args: &str,
    format: TreeFormat,
) -> Result<(), CliError> {
    let lib = load_library(library).map_err(CliError::io)?;
    if !lib.contains(task) {
        return Err(CliError::usage(anyhow::anyhow!(
            "{task} is not defined in {}",
            library.display()
        )));
    }
    let args = taskforge_service::split_args(args)
        .iter()
        .map(|a| Term::constant(a))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::usage)?;
    if args.len() != task.arity {
        return Err(CliError::usage(anyhow::anyhow!(
            "{task} takes {} arguments, got {}",
            task.arity,
            args.len()
        )));
    }
    let tree = expand(
        &lib,
        &PredicateInstance::new(task.name.clone(), args),
        DEFAULT_MAX_DEPTH,
    )
    .map_err(CliError::io)?;
    let text = match format {
        TreeFormat::Ascii => tree.to_ascii(),
        TreeFormat::Dot => tree.to_dot(),
        TreeFormat::Json => {
            let mut s = serde_json::to_string_pretty(&tree).expect("tree serializes");
            s.push('\n');
            s
        }
    };
    print!("{text}");
    Ok(())
}

/// TOML configuration for `serve`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    #[serde(default = "default_library")]
    pub library: PathBuf,
    pub primitives: Option<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default)]
    pub no_provenance: bool,
    #[serde(default)]
    pub service: ServiceConfig,
    pub live: Option<RemoteConfig>,
}

fn default_library() -> PathBuf {
    PathBuf::from(taskforge::store::DEFAULT_LIBRARY_PATH)
}

fn default_backend() -> String {
    DEFAULT_BACKEND.to_string()
}

pub fn load_serve_config(path: &Path) -> Result<ServeConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(anyhow::anyhow!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::io(anyhow::anyhow!("{}: {e}", path.display())))
}

pub fn serve(config_path: &Path) -> Result<(), CliError> {
    let config = load_serve_config(config_path)?;
    let spec: BackendSpec = config.backend.parse().map_err(|e: String| {
        CliError::io(anyhow::anyhow!("{}: backend: {e}", config_path.display()))
    })?;
    let live = config.live.clone();
    let backend = backend::build(
        &spec,
        || {
            live.unwrap_or_else(|| RemoteConfig {
                endpoint: "https://api.openai.com/v1".into(),
                model: "gpt-3.5-turbo-instruct".into(),
                api_style: Default::default(),
                timeout_secs: 60,
            })
        },
        Default::default(),
    )?;
    let library = if config.library.exists() {
        load_library(&config.library).map_err(CliError::io)?
    } else {
        starting_library(config.primitives.as_deref())?
    };
    let state = Arc::new(
        AppState::new(library.into_shared(), Arc::new(Engine::new(backend)))
            .persist_to(&config.library, save_options(config.no_provenance)),
    );
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::io)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.service.bind)
            .await
            .map_err(|e| CliError::io(anyhow::anyhow!("bind {}: {e}", config.service.bind)))?;
        eprintln!(
            "listening on http://{}",
            listener.local_addr().map_err(CliError::io)?
        );
        taskforge_service::serve(listener, state, &config.service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(CliError::io)
    })
}
