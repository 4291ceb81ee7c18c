//! Recursive task learning as a resumable dialog.
//!
//! Each instructor utterance is parsed into steps and every step is matched
//! against the library. Known steps are accepted in order. The first unknown
//! step suspends the turn with a clarification question; the answer opens a
//! new frame whose steps are resolved the same way. When a frame runs out of
//! steps its parent predicate is generalized into a new definition, appended
//! to the frame below, and resolution continues there. The recursion that
//! would normally live on the call stack is kept in [`DialogSession`] so it
//! can wait for the instructor between turns.

use std::collections::VecDeque;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};

use crate::library::{LibraryError, SharedLibrary, TaskLibrary};
use crate::llm::CompletionBackend;
use crate::matcher::{ActionMatcher, MatchError, MatchOutcome};
use crate::model::{generalize, ModelError, PredicateInstance, Provenance, Signature};
use crate::parser::{ParseError, SemanticParser};
use crate::store::{LibraryDocument, SaveOptions, StoreError};

pub const DEFAULT_MAX_STACK_DEPTH: usize = 16;

/// Parser and matcher sharing one completion backend.
pub struct Engine {
    pub parser: SemanticParser,
    pub matcher: ActionMatcher,
}

impl Engine {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            parser: SemanticParser::new(backend.clone()),
            matcher: ActionMatcher::new(backend),
        }
    }

    pub fn from_parts(parser: SemanticParser, matcher: ActionMatcher) -> Self {
        Self { parser, matcher }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerConfig {
    pub max_stack_depth: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            max_stack_depth: DEFAULT_MAX_STACK_DEPTH,
        }
    }
}

/// One level of the suspended recursion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingFrame {
    /// The predicate this frame defines; `None` for the root command.
    pub parent: Option<PredicateInstance>,
    /// Steps resolved so far at this level.
    pub accumulated: Vec<PredicateInstance>,
    /// Parsed steps not yet resolved. While the session awaits a
    /// clarification, the front of the top frame's queue is the unknown step.
    pub remaining: VecDeque<PredicateInstance>,
    /// The utterance this frame was parsed from.
    pub utterance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    AwaitingCommand,
    AwaitingClarification,
    Concluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    Instructor,
    Agent,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReplyKind {
    ClarificationQuestion,
    TaskLearned,
    StepsAccepted,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReply {
    pub kind: ReplyKind,
    pub text: String,
    /// Definitions added to the library: during this turn for questions,
    /// during the whole command for `TaskLearned`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learned: Option<Vec<Signature>>,
}

pub fn clarification_question(pred: &PredicateInstance) -> String {
    format!("What does {} mean?", pred.name.display_form())
}

/// The predicate name a clarification question asks about.
pub fn question_subject(text: &str) -> Option<&str> {
    text.strip_prefix("What does ")?.strip_suffix(" mean?")
}

impl AgentReply {
    pub fn error(err: &TurnError) -> Self {
        Self {
            kind: ReplyKind::Error,
            text: format!("Sorry, I could not use that: {err}"),
            learned: None,
        }
    }

    pub fn question_subject(&self) -> Option<&str> {
        match self.kind {
            ReplyKind::ClarificationQuestion => question_subject(&self.text),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TurnError {
    #[error("the session has concluded")]
    Concluded,
    #[error(transparent)]
    Parser(#[from] ParseError),
    #[error(transparent)]
    Matcher(#[from] MatchError),
    #[error("clarification depth {depth} exceeds the limit of {limit}")]
    DepthExceeded { depth: usize, limit: usize },
    #[error("{0} is already being explained; it cannot be part of its own definition")]
    RecursiveDefinition(Signature),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Library(#[from] LibraryError),
}

impl TurnError {
    /// Failures of the completion backend, as opposed to bad input.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            TurnError::Parser(ParseError::Backend(_)) | TurnError::Matcher(MatchError::Backend(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SessionState {
    id: String,
    stack: Vec<PendingFrame>,
    phase: Phase,
    transcript: Vec<TranscriptEntry>,
    /// Signatures learned since the current root command was given.
    learned_in_command: Vec<Signature>,
}

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("corrupt session token: {0}")]
    CorruptToken(String),
}

/// Serialized session state, including the library contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionToken(pub Vec<u8>);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenBody {
    state: SessionState,
    library: LibraryDocument,
}

pub struct DialogSession {
    state: SessionState,
    library: SharedLibrary,
    engine: Arc<Engine>,
    config: LearnerConfig,
    turn_learned: Vec<Signature>,
}

impl DialogSession {
    pub fn new(id: impl Into<String>, library: SharedLibrary, engine: Arc<Engine>) -> Self {
        Self {
            state: SessionState {
                id: id.into(),
                stack: Vec::new(),
                phase: Phase::AwaitingCommand,
                transcript: Vec::new(),
                learned_in_command: Vec::new(),
            },
            library,
            engine,
            config: LearnerConfig::default(),
            turn_learned: Vec::new(),
        }
    }

    pub fn with_config(mut self, config: LearnerConfig) -> Self {
        self.config = config;
        self
    }

    pub fn id(&self) -> &str {
        &self.state.id
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn stack(&self) -> &[PendingFrame] {
        &self.state.stack
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.state.transcript
    }

    pub fn library(&self) -> &SharedLibrary {
        &self.library
    }

    /// Definitions added by the most recent successful turn.
    pub fn learned_last_turn(&self) -> &[Signature] {
        &self.turn_learned
    }

    /// The step awaiting clarification, if any.
    pub fn pending_clarification(&self) -> Option<&PredicateInstance> {
        match self.state.phase {
            Phase::AwaitingClarification => self.state.stack.last()?.remaining.front(),
            _ => None,
        }
    }

    pub fn pending_question(&self) -> Option<String> {
        self.pending_clarification().map(clarification_question)
    }

    /// End the session. Further utterances are refused.
    pub fn conclude(&mut self) {
        self.state.phase = Phase::Concluded;
        self.state.stack.clear();
    }

    /// Process one instructor turn.
    ///
    /// On error, the library and session state are rolled back to what they
    /// were before the utterance; the transcript records the utterance and a
    /// system notice.
    pub fn submit_utterance(&mut self, utterance: &str) -> Result<AgentReply, TurnError> {
        if self.state.phase == Phase::Concluded {
            return Err(TurnError::Concluded);
        }
        let library = Arc::clone(&self.library);
        let mut lib = library.write().unwrap_or_else(|e| e.into_inner());
        let lib_before = lib.clone();
        let state_before = self.state.clone();
        self.turn_learned.clear();
        self.record(Speaker::Instructor, utterance);
        match self.run_turn(&mut lib, utterance) {
            Ok(reply) => {
                self.record(Speaker::Agent, &reply.text);
                Ok(reply)
            }
            Err(err) => {
                info!(session = %self.state.id, %err, "turn failed, rolling back");
                *lib = lib_before;
                self.state = state_before;
                self.turn_learned.clear();
                self.record(Speaker::Instructor, utterance);
                self.record(Speaker::System, &err.to_string());
                Err(err)
            }
        }
    }

    fn record(&mut self, speaker: Speaker, text: &str) {
        self.state.transcript.push(TranscriptEntry {
            speaker,
            text: text.to_string(),
            timestamp: Utc::now(),
        });
    }

    fn run_turn(
        &mut self,
        lib: &mut TaskLibrary,
        utterance: &str,
    ) -> Result<AgentReply, TurnError> {
        let known = lib.signatures();
        match self.state.phase {
            Phase::AwaitingClarification => {
                let parent = self
                    .pending_clarification()
                    .cloned()
                    .expect("clarification phase implies a pending step");
                let depth = self.state.stack.len() + 1;
                if depth > self.config.max_stack_depth {
                    return Err(TurnError::DepthExceeded {
                        depth,
                        limit: self.config.max_stack_depth,
                    });
                }
                let parsed =
                    self.engine
                        .parser
                        .parse_utterance(utterance, &known, Some(&parent))?;
                self.state.stack.push(PendingFrame {
                    parent: Some(parent),
                    accumulated: Vec::new(),
                    remaining: parsed.steps.into(),
                    utterance: utterance.trim().to_string(),
                });
            }
            Phase::AwaitingCommand => {
                let parsed = self
                    .engine
                    .parser
                    .parse_utterance(utterance, &known, None)?;
                self.state.learned_in_command.clear();
                self.state.stack = vec![PendingFrame {
                    parent: None,
                    accumulated: Vec::new(),
                    remaining: parsed.steps.into(),
                    utterance: utterance.trim().to_string(),
                }];
            }
            Phase::Concluded => return Err(TurnError::Concluded),
        }
        self.resolve(lib)
    }

    fn resolve(&mut self, lib: &mut TaskLibrary) -> Result<AgentReply, TurnError> {
        loop {
            let top = self
                .state
                .stack
                .last_mut()
                .expect("resolution needs a frame");
            if let Some(next) = top.remaining.front() {
                let candidates = lib.signatures();
                let result = self.engine.matcher.match_predicate(next, &candidates)?;
                match result.outcome {
                    MatchOutcome::Known(sig) => {
                        let step = top.remaining.pop_front().expect("front exists");
                        debug!(%step, known = %sig, method = ?result.method, "step resolved");
                        top.accumulated.push(renamed(step, &sig, lib));
                    }
                    MatchOutcome::Unknown => {
                        let sig = next.signature();
                        let question = clarification_question(next);
                        if self.state.stack.iter().any(|f| {
                            f.parent.as_ref().map(PredicateInstance::signature) == Some(sig.clone())
                        }) {
                            return Err(TurnError::RecursiveDefinition(sig));
                        }
                        self.state.phase = Phase::AwaitingClarification;
                        return Ok(AgentReply {
                            kind: ReplyKind::ClarificationQuestion,
                            text: question,
                            learned: (!self.turn_learned.is_empty())
                                .then(|| self.turn_learned.clone()),
                        });
                    }
                }
                continue;
            }

            let frame = self.state.stack.pop().expect("top frame exists");
            let Some(parent) = frame.parent else {
                self.state.phase = Phase::AwaitingCommand;
                return Ok(self.command_done(&frame.accumulated));
            };
            let def = generalize(&parent, &frame.accumulated)?.with_provenance(Provenance {
                utterance: frame.utterance,
                timestamp: Utc::now(),
            });
            let sig = def.signature.clone();
            if lib.contains(&sig) {
                // Taught concurrently in another session; the existing
                // definition stays.
                info!(%sig, "definition already present, keeping it");
            } else {
                info!(%sig, "learned");
                lib.insert(def)?;
                self.state.learned_in_command.push(sig.clone());
                self.turn_learned.push(sig.clone());
            }
            let below = self
                .state
                .stack
                .last_mut()
                .expect("a clarification frame always sits on another frame");
            let step = below
                .remaining
                .pop_front()
                .expect("clarified step is still queued");
            below.accumulated.push(renamed(step, &sig, lib));
        }
    }

    fn command_done(&mut self, steps: &[PredicateInstance]) -> AgentReply {
        let learned = std::mem::take(&mut self.state.learned_in_command);
        if learned.is_empty() {
            let listed: Vec<String> = steps.iter().map(|s| s.to_string()).collect();
            AgentReply {
                kind: ReplyKind::StepsAccepted,
                text: format!("OK: {}.", listed.join(", ")),
                learned: None,
            }
        } else {
            let listed: Vec<String> = learned.iter().map(|s| s.to_string()).collect();
            AgentReply {
                kind: ReplyKind::TaskLearned,
                text: format!("Got it. I learned {}.", listed.join(", ")),
                learned: Some(learned),
            }
        }
    }

    /// Capture the session, library contents included.
    pub fn snapshot(&self) -> SessionToken {
        let lib = self.library.read().unwrap_or_else(|e| e.into_inner());
        let body = TokenBody {
            state: self.state.clone(),
            library: LibraryDocument::from_library(&lib, SaveOptions::default()),
        };
        SessionToken(serde_json::to_vec(&body).expect("session state serializes"))
    }

    /// Rebuild a session from a token, with its own library handle.
    pub fn restore(token: &SessionToken, engine: Arc<Engine>) -> Result<Self, TokenError> {
        let body: TokenBody = serde_json::from_slice(&token.0)
            .map_err(|e| TokenError::CorruptToken(e.to_string()))?;
        let library = body
            .library
            .into_library()
            .map_err(|e: StoreError| TokenError::CorruptToken(e.to_string()))?;
        Ok(Self {
            state: body.state,
            library: library.into_shared(),
            engine,
            config: LearnerConfig::default(),
            turn_learned: Vec::new(),
        })
    }
}

/// Give an accepted step the library's spelling of its action name.
fn renamed(step: PredicateInstance, sig: &Signature, lib: &TaskLibrary) -> PredicateInstance {
    let name = lib
        .get(sig)
        .map(|d| d.signature.name.clone())
        .unwrap_or_else(|| sig.name.clone());
    PredicateInstance::new(name, step.args)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Counting, FixtureBackend, FixtureEntry, Role, Scripted};
    use crate::model::{TaskDefinition, Term};
    use crate::store::default_primitives;

    fn parse(subject: &str, response: &str) -> FixtureEntry {
        FixtureEntry {
            tag: Role::Parse,
            subject: Some(subject.into()),
            fingerprint: None,
            response: response.into(),
        }
    }

    fn judge(subject: &str, response: &str) -> FixtureEntry {
        FixtureEntry {
            tag: Role::Match,
            subject: Some(subject.into()),
            fingerprint: None,
            response: response.into(),
        }
    }

    fn session_with(entries: Vec<FixtureEntry>) -> (DialogSession, Arc<Counting<FixtureBackend>>) {
        let backend = Arc::new(Counting::new(FixtureBackend::new(entries)));
        let engine = Arc::new(Engine::new(backend.clone()));
        let session = DialogSession::new("s1", default_primitives().into_shared(), engine);
        (session, backend)
    }

    fn pick_up_entries() -> Vec<FixtureEntry> {
        vec![
            parse("pick up the cup", "pickUp(cup)"),
            judge("pickUp/1", "NONE"),
            parse(
                "open your hand, move your hand to the cup, close your hand, then pull your hand back",
                "openHand()\nmoveHand(cup)\ncloseHand()\npullHandBack()",
            ),
            judge("pullHandBack/0", "resetHandPosition"),
        ]
    }

    #[test]
    fn unknown_command_asks() {
        let (mut s, _) = session_with(vec![
            parse("clean the kitchen", "clean(kitchen)"),
            judge("clean/1", "NONE"),
        ]);
        let reply = s.submit_utterance("clean the kitchen").unwrap();
        assert_eq!(reply.kind, ReplyKind::ClarificationQuestion);
        assert_eq!(reply.text, "What does clean mean?");
        assert_eq!(reply.learned, None);
        assert_eq!(s.phase(), Phase::AwaitingClarification);
        assert_eq!(
            s.pending_question().as_deref(),
            Some("What does clean mean?")
        );
        assert_eq!(reply.question_subject(), Some("clean"));
    }

    #[test]
    fn clarification_learns_and_returns() {
        let (mut s, _) = session_with(pick_up_entries());
        s.submit_utterance("pick up the cup").unwrap();
        let reply = s
            .submit_utterance("open your hand, move your hand to the cup, close your hand, then pull your hand back")
            .unwrap();
        assert_eq!(reply.kind, ReplyKind::TaskLearned);
        assert_eq!(
            reply.learned,
            Some(vec![Signature::parse("pickUp/1").unwrap()])
        );
        assert_eq!(s.learned_last_turn(), reply.learned.as_deref().unwrap());
        assert_eq!(s.phase(), Phase::AwaitingCommand);
        assert!(s.stack().is_empty());

        let lib = s.library().read().unwrap();
        let def = lib.get(&Signature::parse("pick_up/1").unwrap()).unwrap();
        let body: Vec<String> = def.steps().unwrap().iter().map(|s| s.to_string()).collect();
        assert_eq!(
            body,
            [
                "openHand()",
                "moveHand(?0)",
                "closeHand()",
                "resetHandPosition()"
            ]
        );
        assert_eq!(
            def.provenance.as_ref().unwrap().utterance,
            "open your hand, move your hand to the cup, close your hand, then pull your hand back"
        );
    }

    #[test]
    fn known_steps_are_accepted_in_order() {
        let (mut s, backend) = session_with(vec![parse(
            "open and close your hand",
            "openHand()\ncloseHand()\nopenHand()",
        )]);
        let before = s.library().read().unwrap().clone();
        let reply = s.submit_utterance("open and close your hand").unwrap();
        assert_eq!(reply.kind, ReplyKind::StepsAccepted);
        assert_eq!(reply.text, "OK: openHand(), closeHand(), openHand().");
        assert_eq!(*s.library().read().unwrap(), before);
        assert_eq!(backend.calls(Role::Match), 0);
        assert_eq!(s.phase(), Phase::AwaitingCommand);
    }

    #[test]
    fn accepted_steps_take_library_spelling() {
        let (mut s, _) = session_with(vec![parse("open", "open_hand()")]);
        let reply = s.submit_utterance("open").unwrap();
        assert_eq!(reply.text, "OK: openHand().");
    }

    #[test]
    fn learned_task_is_reused_without_asking() {
        let mut entries = pick_up_entries();
        entries.push(parse("pick up the plate", "pickUp(plate)"));
        let (mut s, backend) = session_with(entries);
        s.submit_utterance("pick up the cup").unwrap();
        s.submit_utterance(
            "open your hand, move your hand to the cup, close your hand, then pull your hand back",
        )
        .unwrap();
        backend.reset();
        let reply = s.submit_utterance("pick up the plate").unwrap();
        assert_eq!(reply.kind, ReplyKind::StepsAccepted);
        assert_eq!(reply.text, "OK: pickUp(plate).");
        assert_eq!(backend.calls(Role::Match), 0);
    }

    #[test]
    fn repeated_unknown_in_one_command_is_asked_once() {
        let mut entries = pick_up_entries();
        entries.push(parse(
            "pick up the cup and the plate",
            "pickUp(cup)\npickUp(plate)",
        ));
        let (mut s, _) = session_with(entries);
        let q = s.submit_utterance("pick up the cup and the plate").unwrap();
        assert_eq!(q.kind, ReplyKind::ClarificationQuestion);
        let done = s
            .submit_utterance("open your hand, move your hand to the cup, close your hand, then pull your hand back")
            .unwrap();
        assert_eq!(done.kind, ReplyKind::TaskLearned);
        assert_eq!(done.text, "Got it. I learned pickUp/1.");
    }

    #[test]
    fn backend_failure_rolls_back() {
        // the clarification answer has no fixture entry
        let (mut s, _) = session_with(vec![
            parse("pick up the cup", "pickUp(cup)"),
            judge("pickUp/1", "NONE"),
        ]);
        s.submit_utterance("pick up the cup").unwrap();
        let before = s.snapshot();
        let err = s.submit_utterance("grab it somehow").unwrap_err();
        assert!(err.is_backend_failure());
        assert_eq!(s.phase(), Phase::AwaitingClarification);
        assert_eq!(s.stack().len(), 1);
        let restored = DialogSession::restore(&before, Arc::clone(&s.engine)).unwrap();
        assert_eq!(restored.stack(), s.stack());
        assert_eq!(
            *restored.library().read().unwrap(),
            *s.library().read().unwrap()
        );
        let last = s.transcript().last().unwrap();
        assert_eq!(last.speaker, Speaker::System);
    }

    #[test]
    fn failure_after_learning_undoes_the_learning() {
        // pick_up gets learned mid-turn, then the next root step cannot be matched
        let mut entries = pick_up_entries();
        entries.push(parse("pick up the cup and wave", "pickUp(cup)\nwave()"));
        let (mut s, _) = session_with(entries);
        s.submit_utterance("pick up the cup and wave").unwrap();
        let lib_before = s.library().read().unwrap().clone();
        let err = s
            .submit_utterance("open your hand, move your hand to the cup, close your hand, then pull your hand back")
            .unwrap_err();
        assert!(matches!(err, TurnError::Matcher(MatchError::Backend(_))));
        assert_eq!(*s.library().read().unwrap(), lib_before);
        assert_eq!(
            s.pending_question().as_deref(),
            Some("What does pickUp mean?")
        );
    }

    #[test]
    fn blank_and_unparseable_roll_back() {
        let (mut s, _) = session_with(vec![parse("mumble", "I am not sure what you mean.")]);
        assert_eq!(
            s.submit_utterance("   "),
            Err(TurnError::Parser(ParseError::BlankUtterance))
        );
        let err = s.submit_utterance("mumble").unwrap_err();
        assert!(matches!(
            err,
            TurnError::Parser(ParseError::Unparseable { attempts: 3, .. })
        ));
        assert_eq!(s.phase(), Phase::AwaitingCommand);
        assert!(s.stack().is_empty());
    }

    #[test]
    fn self_reference_is_refused() {
        let (mut s, _) = session_with(vec![
            parse("dance", "dance()"),
            judge("dance/0", "NONE"),
            parse("spin and dance", "spin()\ndance()"),
            judge("spin/0", "NONE"),
            parse("really just spin", "twirl()"),
            judge("twirl/0", "NONE"),
            parse("twirl means dance", "dance()"),
        ]);
        s.submit_utterance("dance").unwrap();
        let q = s.submit_utterance("spin and dance").unwrap();
        assert_eq!(q.text, "What does spin mean?");
        let q = s.submit_utterance("really just spin").unwrap();
        assert_eq!(q.text, "What does twirl mean?");
        let err = s.submit_utterance("twirl means dance").unwrap_err();
        assert_eq!(
            err,
            TurnError::RecursiveDefinition(Signature::parse("dance/0").unwrap())
        );
        assert_eq!(
            s.pending_question().as_deref(),
            Some("What does twirl mean?")
        );
    }

    #[test]
    fn stack_depth_is_bounded() {
        let entries = vec![
            parse("a", "a()"),
            judge("a/0", "NONE"),
            parse("b", "b()"),
            parse("c", "c()"),
            judge("b/0", "NONE"),
            judge("c/0", "NONE"),
        ];
        let (s, _) = session_with(entries);
        let mut s = s.with_config(LearnerConfig { max_stack_depth: 2 });
        s.submit_utterance("a").unwrap();
        s.submit_utterance("b").unwrap();
        let err = s.submit_utterance("c").unwrap_err();
        assert_eq!(err, TurnError::DepthExceeded { depth: 3, limit: 2 });
        assert_eq!(s.stack().len(), 2);
    }

    #[test]
    fn concluded_sessions_refuse_input() {
        let (mut s, _) = session_with(vec![]);
        s.conclude();
        assert_eq!(s.submit_utterance("hello"), Err(TurnError::Concluded));
    }

    #[test]
    fn matcher_answer_violation_is_surfaced() {
        let (mut s, _) = session_with(vec![
            parse("reach for the cup", "reach(cup)"),
            judge("reach/1", "grab"),
        ]);
        let err = s.submit_utterance("reach for the cup").unwrap_err();
        assert!(matches!(
            err,
            TurnError::Matcher(MatchError::AnswerViolation { .. })
        ));
        assert!(!err.is_backend_failure());
    }

    #[test]
    fn snapshot_restore() {
        let (mut s, _) = session_with(pick_up_entries());
        let fresh = s.snapshot();
        let r = DialogSession::restore(&fresh, Arc::clone(&s.engine)).unwrap();
        assert_eq!(r.phase(), s.phase());
        assert_eq!(r.stack(), s.stack());
        assert_eq!(*r.library().read().unwrap(), *s.library().read().unwrap());

        s.submit_utterance("pick up the cup").unwrap();
        assert_ne!(s.phase(), r.phase());
        let r2 = DialogSession::restore(&fresh, Arc::clone(&s.engine)).unwrap();
        assert_eq!(r2.phase(), Phase::AwaitingCommand);
        assert!(r2.stack().is_empty());

        let mid = s.snapshot();
        let r3 = DialogSession::restore(&mid, Arc::clone(&s.engine)).unwrap();
        assert_eq!(r3.pending_question(), s.pending_question());
        assert_eq!(r3.id(), "s1");

        assert!(matches!(
            DialogSession::restore(
                &SessionToken(b"\x00garbage".to_vec()),
                Arc::clone(&s.engine)
            ),
            Err(TokenError::CorruptToken(_))
        ));
    }

    #[test]
    fn questions_use_first_spelling() {
        let engine = Arc::new(Engine::new(Arc::new(Scripted::new([
            "putAway(pepper)",
            "NONE",
        ]))));
        let mut s = DialogSession::new("x", default_primitives().into_shared(), engine);
        let r = s.submit_utterance("put away the pepper").unwrap();
        assert_eq!(r.text, "What does putAway mean?");
    }

    #[test]
    fn existing_definition_is_kept() {
        let (mut s, _) = session_with(pick_up_entries());
        s.submit_utterance("pick up the cup").unwrap();
        // another teacher defines pick_up/1 between turns
        let other = TaskDefinition::learned(
            Signature::parse("pick_up/1").unwrap(),
            vec!["x".into()],
            vec![PredicateInstance::new(
                "moveHand".parse().unwrap(),
                vec![Term::Var(0)],
            )],
        )
        .unwrap();
        s.library().write().unwrap().insert(other.clone()).unwrap();
        let reply = s
            .submit_utterance("open your hand, move your hand to the cup, close your hand, then pull your hand back")
            .unwrap();
        assert_eq!(reply.kind, ReplyKind::StepsAccepted);
        let lib = s.library().read().unwrap();
        assert_eq!(lib.get(&other.signature), Some(&other));
    }
}
