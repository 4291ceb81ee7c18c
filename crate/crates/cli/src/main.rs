//! `taskforge`: teach tasks by dialog, replay scripted dialogs, compare
//! learned libraries against references, render plan trees and run the
//! dialog service.

mod backend;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use taskforge::Signature;

use crate::backend::BackendArgs;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "taskforge",
    version,
    about = "Interactive hierarchical task learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Teach interactively; one utterance per line, Ctrl-D saves and exits.
    Teach {
        #[arg(long, default_value = taskforge::store::DEFAULT_LIBRARY_PATH)]
        library: PathBuf,
        /// Starting library used when --library does not exist yet.
        #[arg(long)]
        primitives: Option<PathBuf>,
        #[arg(long)]
        no_provenance: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run a scripted dialog non-interactively.
    Replay {
        #[arg(long)]
        script: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Write the resulting library here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit 3 on any expectation mismatch or failed turn.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        no_provenance: bool,
        #[arg(long)]
        primitives: Option<PathBuf>,
    },
    /// Replay a script and compare the learned library with a reference.
    Eval {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        primitives: Option<PathBuf>,
    },
    /// Expand a task into its plan tree.
    Tree {
        #[arg(long, default_value = taskforge::store::DEFAULT_LIBRARY_PATH)]
        library: PathBuf,
        /// NAME/ARITY, e.g. pick_up/1
        #[arg(long, value_parser = parse_signature)]
        task: Signature,
        /// Comma-separated ground arguments.
        #[arg(long, default_value = "")]
        args: String,
        #[arg(long, value_enum, default_value_t = TreeFormat::Ascii)]
        format: TreeFormat,
    },
    /// Start the HTTP/WebSocket dialog service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TreeFormat {
    Ascii,
    Dot,
    Json,
}

fn parse_signature(s: &str) -> Result<Signature, String> {
    Signature::parse(s).ok_or_else(|| format!("expected NAME/ARITY, got {s:?}"))
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(error::USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Teach {
            library,
            primitives,
            no_provenance,
            backend,
        } => commands::teach(&library, primitives.as_deref(), no_provenance, &backend),
        Command::Replay {
            script,
            backend,
            out,
            strict,
            no_provenance,
            primitives,
        } => commands::replay(
            &script,
            &backend,
            out.as_deref(),
            strict,
            no_provenance,
            primitives.as_deref(),
        ),
        Command::Eval {
            script,
            reference,
            backend,
            primitives,
        } => commands::eval(&script, &reference, &backend, primitives.as_deref()),
        Command::Tree {
            library,
            task,
            args,
            format,
        } => commands::tree(&library, &task, &args, format),
        Command::Serve { config } => commands::serve(&config),
    }
}
