//! Interactive task learning from dialog.
//!
//! An instructor's utterances are parsed into predicate-argument structures,
//! matched against the library of known actions, and any unknown step is
//! clarified recursively ("What does X mean?") until the new task bottoms out
//! in known actions. The result is a library of hierarchical task definitions
//! with scoped variable arguments that can be expanded into primitive plans.

pub mod learner;
pub mod library;
pub mod llm;
pub mod matcher;
pub mod model;
pub mod parser;
pub mod plan;
pub mod prompt;
pub mod replay;
pub mod store;

pub use learner::{
    AgentReply, DialogSession, Engine, LearnerConfig, PendingFrame, Phase, ReplyKind, SessionToken,
    Speaker, TokenError, TranscriptEntry, TurnError,
};
pub use library::{LibraryError, SharedLibrary, TaskLibrary};
pub use llm::{CompletionBackend, CompletionRequest, CompletionResponse, LlmError, Role};
pub use matcher::{ActionMatcher, MatchError, MatchMethod, MatchOutcome, MatchResult};
pub use model::{
    canonicalize, generalize, instantiate, Body, ModelError, PredicateInstance, Provenance,
    Signature, Symbol, TaskDefinition, Term,
};
pub use parser::{ParseError, ParseResult, SchemaViolation, SemanticParser};
pub use plan::{expand, ExpandError, PlanTree, DEFAULT_MAX_DEPTH};
pub use replay::{evaluate, replay_script, EvalReport, ReplayReport, TurnRecord};
pub use store::{
    default_primitives, load_library, load_script, save_library, LibraryDocument, SaveOptions,
    ScriptTurn, StoreError, TranscriptScript,
};
