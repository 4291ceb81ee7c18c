//! Semantic unification of a parsed predicate with the known actions.
//!
//! Exact canonical matches are settled locally. Otherwise the model is asked
//! to pick one arity-compatible candidate by name, or `NONE`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::llm::{CompletionBackend, CompletionRequest, LlmError, Role};
use crate::model::{canonicalize, PredicateInstance, Signature};
use crate::prompt::{PromptTemplate, TemplateError, DEFAULT_MATCH_TEMPLATE};

pub const MAX_REPAIR_ROUNDS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchOutcome {
    Known(Signature),
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMethod {
    ExactCanonical,
    LlmJudged,
    /// No candidate of the right arity, so nothing to ask about.
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub outcome: MatchOutcome,
    pub method: MatchMethod,
    pub raw_completion: Option<String>,
}

impl MatchResult {
    pub fn known(&self) -> Option<&Signature> {
        match &self.outcome {
            MatchOutcome::Known(sig) => Some(sig),
            MatchOutcome::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("matcher backend failed: {0}")]
    Backend(#[from] LlmError),
    #[error("matcher answered {answer:?}, which is neither a listed action nor NONE ({attempts} attempts)")]
    AnswerViolation { answer: String, attempts: usize },
}

pub struct ActionMatcher {
    backend: Arc<dyn CompletionBackend>,
    template: PromptTemplate,
}

/// `putAway(x1)`, `openHand()`.
pub fn render_with_placeholders(pred: &PredicateInstance) -> String {
    let slots: Vec<String> = (1..=pred.arity()).map(|i| format!("x{i}")).collect();
    format!("{}({})", pred.name, slots.join(", "))
}

impl ActionMatcher {
    pub const PLACEHOLDERS: &'static [&'static str] = &["predicate", "candidates"];

    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        let template = PromptTemplate::new(DEFAULT_MATCH_TEMPLATE, Self::PLACEHOLDERS)
            .expect("bundled match template");
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

    pub fn render_prompt(&self, pred: &PredicateInstance, candidates: &[&Signature]) -> String {
        let listed = candidates
            .iter()
            .map(|s| {
                let plural = if s.arity == 1 { "" } else { "s" };
                format!("- {} ({} argument{plural})", s.name, s.arity)
            })
            .collect::<Vec<_>>()
            .join("\n");
        self.template.render(&[
            ("candidates", &listed),
            ("predicate", &render_with_placeholders(pred)),
        ])
    }

    pub fn match_predicate(
        &self,
        pred: &PredicateInstance,
        candidates: &[Signature],
    ) -> Result<MatchResult, MatchError> {
        let wanted = pred.signature();
        if let Some(sig) = candidates.iter().find(|c| **c == wanted) {
            return Ok(MatchResult {
                outcome: MatchOutcome::Known(sig.clone()),
                method: MatchMethod::ExactCanonical,
                raw_completion: None,
            });
        }
        let compatible: Vec<&Signature> = candidates
            .iter()
            .filter(|c| c.arity == wanted.arity)
            .collect();
        if compatible.is_empty() {
            return Ok(MatchResult {
                outcome: MatchOutcome::Unknown,
                method: MatchMethod::NoCandidates,
                raw_completion: None,
            });
        }

        let subject = wanted.to_string();
        let mut prompt = self.render_prompt(pred, &compatible);
        let mut round = 0;
        loop {
            let request = CompletionRequest::new(Role::Match, subject.clone(), prompt.clone())
                .with_max_tokens(16);
            let answer = self.backend.complete(&request)?.text;
            if let Some(outcome) = interpret(&answer, &compatible) {
                return Ok(MatchResult {
                    outcome,
                    method: MatchMethod::LlmJudged,
                    raw_completion: Some(answer),
                });
            }
            if round >= MAX_REPAIR_ROUNDS {
                return Err(MatchError::AnswerViolation {
                    answer,
                    attempts: round + 1,
                });
            }
            debug!(%answer, round, "matcher answer rejected, repairing");
            prompt = format!(
                "{prompt} {answer}\n\n{answer:?} is not one of the listed actions. Answer with exactly one listed name, or NONE.\nAnswer:"
            );
            round += 1;
        }
    }
}

fn interpret(answer: &str, compatible: &[&Signature]) -> Option<MatchOutcome> {
    let key = canonicalize(answer).ok()?;
    if key.canonical_key() == "none" {
        return Some(MatchOutcome::Unknown);
    }
    compatible
        .iter()
        .find(|c| c.name == key)
        .map(|c| MatchOutcome::Known((*c).clone()))
}
