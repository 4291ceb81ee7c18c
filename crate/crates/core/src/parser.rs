//! Utterance to predicate-argument structures.
//!
//! The model does the linguistic work (syntax, anaphora, predicate naming);
//! this module builds the prompt, checks the completion against a strict
//! line grammar and re-prompts with the rejection reason when it does not
//! conform.
//!
//! Accepted output is one step per line:
//!
//! ```text
//! pickUp(pepper)
//! put(pepper, counter)
//! openHand()
//! ```

use std::fmt;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use thiserror::Error;
use tracing::debug;

use crate::llm::{CompletionBackend, CompletionRequest, LlmError, Role};
use crate::model::{canonicalize, PredicateInstance, Signature, Term};
use crate::prompt::{PromptTemplate, TemplateError, DEFAULT_PARSE_TEMPLATE};

/// Arguments that must have been resolved to their referent.
pub const PRONOUNS: &[&str] = &[
    "it", "them", "they", "this", "that", "these", "those", "him", "her",
];

const DETERMINERS: &[&str] = &["the", "a", "an"];

pub const MAX_REPAIR_ROUNDS: usize = 2;

static STEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^([^()]*)\((.*)\)$").unwrap());
static IDENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z][A-Za-z0-9_ ]*$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    Empty,
    Malformed,
    InvalidName(String),
    InvalidArgument(String),
    EmptyArgument,
    PronounArgument(String),
}

/// Why a completion was rejected. `line` is 1-based; 0 for whole-output
/// problems.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SchemaViolation {
    pub line: usize,
    pub kind: ViolationKind,
}

impl SchemaViolation {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self.kind {
            ViolationKind::Empty => "empty_output",
            ViolationKind::Malformed => "malformed",
            ViolationKind::InvalidName(_) => "invalid_name",
            ViolationKind::InvalidArgument(_) => "invalid_argument",
            ViolationKind::EmptyArgument => "empty_argument",
            ViolationKind::PronounArgument(_) => "pronoun_argument",
        }
    }
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())?;
        if self.line > 0 {
            write!(f, " on line {}", self.line)?;
        }
        match &self.kind {
            ViolationKind::Empty => write!(f, ": no actions were given"),
            ViolationKind::Malformed => write!(f, ": expected name(arg, ...)"),
            ViolationKind::InvalidName(n) => write!(f, ": {n:?} is not a valid action name"),
            ViolationKind::InvalidArgument(a) => write!(f, ": {a:?} is not a valid argument"),
            ViolationKind::EmptyArgument => write!(f, ": an argument slot is empty"),
            ViolationKind::PronounArgument(p) => {
                write!(f, ": {p:?} is a pronoun; name the thing it refers to")
            }
        }
    }
}

/// Check a completion against the step grammar.
pub fn validate_structured_output(
    completion: &str,
) -> Result<Vec<PredicateInstance>, SchemaViolation> {
    let mut steps = Vec::new();
    for (idx, raw) in completion.lines().enumerate() {
        let line = idx + 1;
        let text = raw.trim();
        if text.is_empty() {
            continue;
        }
        let violation = |kind| SchemaViolation { line, kind };
        let caps = STEP
            .captures(text)
            .ok_or(violation(ViolationKind::Malformed))?;
        let name = caps[1].trim();
        if !IDENT.is_match(name) {
            return Err(violation(ViolationKind::InvalidName(name.to_string())));
        }
        let inner = caps[2].trim();
        let mut args = Vec::new();
        if !inner.is_empty() {
            for arg in inner.split(',') {
                args.push(Term::Const(parse_argument(arg).map_err(violation)?));
            }
        }
        let name =
            canonicalize(name).map_err(|_| violation(ViolationKind::InvalidName(name.into())))?;
        steps.push(PredicateInstance::new(name, args));
    }
    if steps.is_empty() {
        return Err(SchemaViolation {
            line: 0,
            kind: ViolationKind::Empty,
        });
    }
    Ok(steps)
}

fn parse_argument(raw: &str) -> Result<crate::model::Symbol, ViolationKind> {
    let arg = raw.trim();
    if arg.is_empty() {
        return Err(ViolationKind::EmptyArgument);
    }
    if !IDENT.is_match(arg) {
        return Err(ViolationKind::InvalidArgument(arg.to_string()));
    }
    let stripped = strip_determiners(arg);
    if stripped.is_empty() {
        return Err(ViolationKind::EmptyArgument);
    }
    if PRONOUNS.iter().any(|p| p.eq_ignore_ascii_case(stripped)) {
        return Err(ViolationKind::PronounArgument(stripped.to_string()));
    }
    canonicalize(stripped).map_err(|_| ViolationKind::InvalidArgument(arg.to_string()))
}

fn strip_determiners(mut arg: &str) -> &str {
    loop {
        let Some((head, rest)) = arg.split_once(' ') else {
            return if DETERMINERS.iter().any(|d| d.eq_ignore_ascii_case(arg)) {
                ""
            } else {
                arg
            };
        };
        if !DETERMINERS.iter().any(|d| d.eq_ignore_ascii_case(head)) {
            return arg;
        }
        arg = rest.trim_start();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseResult {
    pub steps: Vec<PredicateInstance>,
    pub raw_completion: String,
    pub repair_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("utterance is blank")]
    BlankUtterance,
    #[error("could not parse utterance after {attempts} completions: {violation}")]
    Unparseable {
        violation: SchemaViolation,
        raw_completion: String,
        attempts: usize,
    },
    #[error("parser backend failed: {0}")]
    Backend(#[from] LlmError),
}

pub struct SemanticParser {
    backend: Arc<dyn CompletionBackend>,
    template: PromptTemplate,
}

impl SemanticParser {
    pub const PLACEHOLDERS: &'static [&'static str] = &["utterance", "known"];

    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        let template = PromptTemplate::new(DEFAULT_PARSE_TEMPLATE, Self::PLACEHOLDERS)
            .expect("bundled parse template");
        Self { backend, template }
    }

    pub fn with_template(
        backend: Arc<dyn CompletionBackend>,
        text: &str,
    ) -> Result<Self, TemplateError> {
        Ok(Self {
            backend,
            template: PromptTemplate::new(text, Self::PLACEHOLDERS)?,
        })
    }

    pub fn render_prompt(
        &self,
        utterance: &str,
        known: &[Signature],
        context: Option<&PredicateInstance>,
    ) -> String {
        let known = if known.is_empty() {
            "(none yet)".to_string()
        } else {
            known
                .iter()
                .map(|s| format!("- {s}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let context = context
            .map(|p| format!("The instructor is explaining how to {p}.\n"))
            .unwrap_or_default();
        self.template.render(&[
            ("known", &known),
            ("context", &context),
            ("utterance", utterance.trim()),
        ])
    }

    /// Parse one utterance into ground steps.
    ///
    /// `known` is passed to the model as naming hints only. `context` is the
    /// predicate being clarified, if any. At most `1 + MAX_REPAIR_ROUNDS`
    /// completions are requested.
    pub fn parse_utterance(
        &self,
        utterance: &str,
        known: &[Signature],
        context: Option<&PredicateInstance>,
    ) -> Result<ParseResult, ParseError> {
        let utterance = utterance.trim();
        if utterance.is_empty() {
            return Err(ParseError::BlankUtterance);
        }
        let mut prompt = self.render_prompt(utterance, known, context);
        let mut round = 0;
        loop {
            let request = CompletionRequest::new(Role::Parse, utterance, prompt.clone());
            let completion = self.backend.complete(&request)?.text;
            match validate_structured_output(&completion) {
                Ok(steps) => {
                    return Ok(ParseResult {
                        steps,
                        raw_completion: completion,
                        repair_rounds: round,
                    })
                }
                Err(violation) if round < MAX_REPAIR_ROUNDS => {
                    debug!(%violation, round, "parser output rejected, repairing");
                    prompt = format!(
                        "{prompt}{completion}\n\nThat answer was rejected ({violation}). Answer again with one name(arg, ...) line per action and no pronouns.\nActions:\n"
                    );
                    round += 1;
                }
                Err(violation) => {
                    return Err(ParseError::Unparseable {
                        violation,
                        raw_completion: completion,
                        attempts: round + 1,
                    })
                }
            }
        }
    }
}
