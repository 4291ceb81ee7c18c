//! Scripted dialogs and library comparison.

use serde::Serialize;

use crate::learner::{AgentReply, DialogSession, ReplyKind};
use crate::library::TaskLibrary;
use crate::model::canonicalize;
use crate::store::TranscriptScript;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TurnRecord {
    pub utterance: String,
    pub reply: AgentReply,
    /// Set when the turn failed; the reply then has kind `Error`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub backend_failure: bool,
    /// Why the reply did not meet the script's expectation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub turns: Vec<TurnRecord>,
}

impl ReplayReport {
    pub fn questions(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| t.reply.kind == ReplyKind::ClarificationQuestion)
            .count()
    }

    pub fn mismatches(&self) -> impl Iterator<Item = (usize, &TurnRecord)> {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.mismatch.is_some())
    }

    pub fn errors(&self) -> impl Iterator<Item = (usize, &TurnRecord)> {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.error.is_some())
    }

    pub fn backend_failed(&self) -> bool {
        self.turns.iter().any(|t| t.backend_failure)
    }

    /// No errors and every expectation met.
    pub fn is_clean(&self) -> bool {
        self.turns
            .iter()
            .all(|t| t.error.is_none() && t.mismatch.is_none())
    }
}

/// Feed the scripted utterances to `session` in order.
///
/// Turns that fail are recorded and the replay continues, except after a
/// backend failure: later turns would answer questions never asked.
pub fn replay_script(session: &mut DialogSession, script: &TranscriptScript) -> ReplayReport {
    let mut report = ReplayReport::default();
    for turn in &script.turns {
        let (reply, error, backend_failure) = match session.submit_utterance(&turn.utterance) {
            Ok(reply) => (reply, None, false),
            Err(err) => (
                AgentReply::error(&err),
                Some(err.to_string()),
                err.is_backend_failure(),
            ),
        };
        let mut mismatch = None;
        if let Some(kind) = turn.expect_kind {
            if kind != reply.kind {
                mismatch = Some(format!(
                    "expected {kind:?}, got {:?}: {}",
                    reply.kind, reply.text
                ));
            }
        }
        if let (None, Some(about)) = (&mismatch, &turn.expect_question_about) {
            let asked = reply.question_subject().and_then(|s| canonicalize(s).ok());
            let wanted = canonicalize(about).ok();
            if asked.is_none() || asked != wanted {
                mismatch = Some(format!(
                    "expected a question about {about}, got: {}",
                    reply.text
                ));
            }
        }
        report.turns.push(TurnRecord {
            utterance: turn.utterance.clone(),
            reply,
            error,
            backend_failure,
            mismatch,
        });
        if backend_failure {
            break;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalReport {
    pub learned: usize,
    pub reference_learned: usize,
    pub differences: Vec<String>,
}

impl EvalReport {
    pub fn passed(&self) -> bool {
        self.differences.is_empty()
    }
}

/// Compare a learned library against a hand-written reference, up to
/// parameter names and provenance.
pub fn evaluate(library: &TaskLibrary, reference: &TaskLibrary) -> EvalReport {
    EvalReport {
        learned: library.learned().count(),
        reference_learned: reference.learned().count(),
        differences: library.structural_diff(reference),
    }
}
