//! On-disk formats: library documents and transcript scripts.
//!
//! Library documents are written canonically (insertion order, 2-space
//! indented JSON, LF, trailing newline) so that load followed by save is
//! byte-identical. Provenance is optional and can be left out entirely for
//! golden files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::ReplyKind;
use crate::library::TaskLibrary;
use crate::model::{
    canonicalize, Body, PredicateInstance, Provenance, Signature, TaskDefinition, Term,
};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LIBRARY_PATH: &str = "library.json";

const BUNDLED_PRIMITIVES: &str = include_str!("../data/primitives.json");

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error at {locus}: {message}")]
    Schema { locus: String, message: String },
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    VersionUnsupported(i64),
}

impl StoreError {
    fn schema(locus: impl Into<String>, message: impl ToString) -> Self {
        StoreError::Schema {
            locus: locus.into(),
            message: message.to_string(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        StoreError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SaveOptions {
    pub provenance: bool,
}

impl Default for SaveOptions {
    fn default() -> Self {
        Self { provenance: true }
    }
}

impl SaveOptions {
    pub fn without_provenance() -> Self {
        Self { provenance: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveEntry {
    pub name: String,
    pub arity: usize,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum ArgEntry {
    Const(String),
    Var(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub name: String,
    pub args: Vec<ArgEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedEntry {
    pub name: String,
    pub arity: usize,
    pub params: Vec<String>,
    pub body: Vec<StepEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryDocument {
    pub format_version: u32,
    pub primitives: Vec<PrimitiveEntry>,
    pub learned: Vec<LearnedEntry>,
}

impl LibraryDocument {
    pub fn from_library(library: &TaskLibrary, options: SaveOptions) -> Self {
        let mut primitives = Vec::new();
        let mut learned = Vec::new();
        for def in library.definitions() {
            let name = def.signature.name.display_form().to_string();
            match &def.body {
                Body::Primitive => primitives.push(PrimitiveEntry {
                    name,
                    arity: def.signature.arity,
                    params: def.params.clone(),
                }),
                Body::Learned(steps) => learned.push(LearnedEntry {
                    name,
                    arity: def.signature.arity,
                    params: def.params.clone(),
                    body: steps.iter().map(step_entry).collect(),
                    provenance: def.provenance.clone().filter(|_| options.provenance),
                }),
            }
        }
        Self {
            format_version: FORMAT_VERSION,
            primitives,
            learned,
        }
    }

    /// Parse with the version gate applied before anything else.
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            StoreError::schema(format!("line {} column {}", e.line(), e.column()), e)
        })?;
        match value.get("format_version") {
            None => return Err(StoreError::schema("format_version", "missing field")),
            Some(v) => match v.as_i64() {
                Some(1) => {}
                Some(other) => return Err(StoreError::VersionUnsupported(other)),
                None => return Err(StoreError::schema("format_version", "expected an integer")),
            },
        }
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let locus = e.path().to_string();
            let inner = e.into_inner();
            StoreError::schema(
                format!("{locus} (line {} column {})", inner.line(), inner.column()),
                inner,
            )
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("library document serializes");
        text.push('\n');
        text
    }

    /// Build the library, checking every invariant a document can violate.
    pub fn into_library(self) -> Result<TaskLibrary, StoreError> {
        let mut library = TaskLibrary::new();
        for (i, p) in self.primitives.iter().enumerate() {
            let locus = format!("primitives[{i}]");
            if p.params.len() != p.arity {
                return Err(StoreError::schema(
                    locus,
                    format!("{} params for arity {}", p.params.len(), p.arity),
                ));
            }
            let def = TaskDefinition {
                signature: Signature::new(
                    canonicalize(&p.name).map_err(|e| StoreError::schema(&locus, e))?,
                    p.arity,
                ),
                params: p.params.clone(),
                body: Body::Primitive,
                provenance: None,
            };
            library
                .insert(def)
                .map_err(|e| StoreError::schema(&locus, e))?;
        }
        for (i, l) in self.learned.into_iter().enumerate() {
            let locus = format!("learned[{i}]");
            let name = canonicalize(&l.name)
                .map_err(|e| StoreError::schema(format!("{locus}.name"), e))?;
            let steps = l
                .body
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    instance(s).map_err(|e| StoreError::schema(format!("{locus}.body[{j}]"), e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut def = TaskDefinition::learned(Signature::new(name, l.arity), l.params, steps)
                .map_err(|e| StoreError::schema(&locus, e))?;
            def.provenance = l.provenance;
            library
                .insert(def)
                .map_err(|e| StoreError::schema(&locus, e))?;
        }
        for def in library.learned() {
            for (j, step) in def.steps().unwrap_or_default().iter().enumerate() {
                if !library.contains(&step.signature()) {
                    return Err(StoreError::schema(
                        format!("{}.body[{j}]", def.signature),
                        format!("{} is not defined in this document", step.signature()),
                    ));
                }
            }
        }
        Ok(library)
    }
}

fn step_entry(step: &PredicateInstance) -> StepEntry {
    StepEntry {
        name: step.name.display_form().to_string(),
        args: step
            .args
            .iter()
            .map(|a| match a {
                Term::Const(s) => ArgEntry::Const(s.display_form().to_string()),
                Term::Var(i) => ArgEntry::Var(*i),
            })
            .collect(),
    }
}

fn instance(step: &StepEntry) -> Result<PredicateInstance, crate::model::ModelError> {
    let args = step
        .args
        .iter()
        .map(|a| match a {
            ArgEntry::Const(s) => Term::constant(s),
            ArgEntry::Var(i) => Ok(Term::Var(*i)),
        })
        .collect::<Result<_, _>>()?;
    Ok(PredicateInstance::new(canonicalize(&step.name)?, args))
}

pub fn library_to_json(library: &TaskLibrary, options: SaveOptions) -> String {
    LibraryDocument::from_library(library, options).to_json()
}

pub fn library_from_json(text: &str) -> Result<TaskLibrary, StoreError> {
    LibraryDocument::parse(text)?.into_library()
}

pub fn save_library(
    library: &TaskLibrary,
    path: impl AsRef<Path>,
    options: SaveOptions,
) -> Result<(), StoreError> {
    let path = path.as_ref();
    std::fs::write(path, library_to_json(library, options)).map_err(|e| StoreError::io(path, e))
}

pub fn load_library(path: impl AsRef<Path>) -> Result<TaskLibrary, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    library_from_json(&text)
}

/// The robot's innate actions: openHand/0, moveHand/1, closeHand/0,
/// resetHandPosition/0 and move/1.
pub fn default_primitives() -> TaskLibrary {
    library_from_json(BUNDLED_PRIMITIVES).expect("bundled primitives are valid")
}

/// One scripted instructor turn with optional expectations on the reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptTurn {
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_kind: Option<ReplyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_question_about: Option<String>,
}

/// Scripted dialog, stored as a JSON array of turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TranscriptScript {
    pub turns: Vec<ScriptTurn>,
}

impl TranscriptScript {
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let script: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let locus = e.path().to_string();
            let inner = e.into_inner();
            StoreError::schema(
                format!("{locus} (line {} column {})", inner.line(), inner.column()),
                inner,
            )
        })?;
        if script.turns.is_empty() {
            return Err(StoreError::schema("$", "script has no turns"));
        }
        for (i, turn) in script.turns.iter().enumerate() {
            if let Some(about) = &turn.expect_question_about {
                if !matches!(
                    turn.expect_kind,
                    None | Some(ReplyKind::ClarificationQuestion)
                ) {
                    return Err(StoreError::schema(
                        format!("[{i}].expect_question_about"),
                        "only valid for ClarificationQuestion replies",
                    ));
                }
                canonicalize(about)
                    .map_err(|e| StoreError::schema(format!("[{i}].expect_question_about"), e))?;
            }
        }
        Ok(script)
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

pub fn load_script(path: impl AsRef<Path>) -> Result<TranscriptScript, StoreError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    TranscriptScript::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generalize;

    fn inst(name: &str, args: &[&str]) -> PredicateInstance {
        PredicateInstance::ground(name, args).unwrap()
    }

    fn small_library() -> TaskLibrary {
        let mut lib = default_primitives();
        let def = generalize(
            &inst("putAway", &["pepper"]),
            &[inst("move", &["cupboard"]), inst("openHand", &[])],
        )
        .unwrap()
        .with_provenance(Provenance {
            utterance: "move it to the cupboard and let go".into(),
            timestamp: "2026-10-16T09:30:00.123456789Z".parse().unwrap(),
        });
        lib.insert(def).unwrap();
        lib
    }

    #[test]
    fn primitives_round_trip() {
        let lib = default_primitives();
        assert_eq!(lib.len(), 5);
        assert!(lib.primitives().count() == 5);
        let text = library_to_json(&lib, SaveOptions::default());
        assert_eq!(text, BUNDLED_PRIMITIVES);
        assert_eq!(library_from_json(&text).unwrap(), lib);
    }

    #[test]
    fn learned_round_trip_is_byte_stable() {
        let lib = small_library();
        for opts in [SaveOptions::default(), SaveOptions::without_provenance()] {
            let first = library_to_json(&lib, opts);
            let again = library_to_json(&library_from_json(&first).unwrap(), opts);
            assert_eq!(first, again);
            assert!(!first.contains('\r'));
            assert!(first.ends_with("}\n"));
        }
        let with = library_to_json(&lib, SaveOptions::default());
        assert!(with.contains("\"timestamp\": \"2026-10-16T09:30:00.123456789Z\""));
        assert!(!library_to_json(&lib, SaveOptions::without_provenance()).contains("provenance"));
    }

    #[test]
    fn body_encoding() {
        let text = library_to_json(&small_library(), SaveOptions::without_provenance());
        assert!(text.contains(
            "\"body\": [\n        {\n          \"name\": \"move\",\n          \"args\": [\n            {\n              \"const\": \"cupboard\"\n            }\n          ]\n        },"
        ));
    }

    #[test]
    fn version_gate() {
        let text = library_to_json(&small_library(), SaveOptions::default())
            .replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            library_from_json(&text),
            Err(StoreError::VersionUnsupported(2))
        ));
        assert!(matches!(
            library_from_json("{\"primitives\": [], \"learned\": []}"),
            Err(StoreError::Schema { .. })
        ));
    }

    #[test]
    fn truncated_file_is_schema_error() {
        let text = library_to_json(&small_library(), SaveOptions::default());
        let err = library_from_json(&text[..text.len() / 2]).unwrap_err();
        assert!(matches!(err, StoreError::Schema { .. }), "{err}");
    }

    #[test]
    fn schema_errors_name_the_field() {
        let text = library_to_json(&small_library(), SaveOptions::without_provenance())
            .replace("\"const\": \"cupboard\"", "\"konst\": \"cupboard\"");
        let err = library_from_json(&text).unwrap_err().to_string();
        assert!(err.contains("learned[0].body[0].args[0]"), "{err}");

        let text = library_to_json(&small_library(), SaveOptions::without_provenance()).replace(
            "\"name\": \"openHand\",\n      \"arity\": 0",
            "\"name\": \"open\",\n      \"arity\": 0",
        );
        let err = library_from_json(&text).unwrap_err().to_string();
        assert!(
            err.contains("putAway/1.body[1]") && err.contains("openHand/0"),
            "{err}"
        );
    }

    #[test]
    fn variable_scope_checked_on_load() {
        let text = library_to_json(&small_library(), SaveOptions::without_provenance()).replace(
            "\"arity\": 1,\n      \"params\": [\n        \"pepper\"\n      ]",
            "\"arity\": 0,\n      \"params\": []",
        );
        let lib = library_from_json(&text).unwrap();
        // pepper was not used in the body, so arity 0 is still consistent
        assert_eq!(lib.learned().next().unwrap().signature.arity, 0);

        let doc = r#"{"format_version": 1, "primitives": [{"name": "moveHand", "arity": 1, "params": ["t"]}],
            "learned": [{"name": "reach", "arity": 1, "params": ["x"], "body": [{"name": "moveHand", "args": [{"var": 1}]}]}]}"#;
        let err = library_from_json(doc).unwrap_err().to_string();
        assert!(
            err.contains("learned[0]") && err.contains("out of range"),
            "{err}"
        );
    }

    #[test]
    fn io_errors() {
        assert!(matches!(
            load_library("/nonexistent/library.json"),
            Err(StoreError::Io { .. })
        ));
        assert!(matches!(
            load_script("/nonexistent/script.json"),
            Err(StoreError::Io { .. })
        ));
    }

    #[test]
    fn scripts() {
        let s = TranscriptScript::parse(r#"[{"utterance": "open your hand"}]"#).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.turns[0].expect_kind, None);

        let s = TranscriptScript::parse(
            r#"[{"utterance": "clean the kitchen", "expect_kind": "ClarificationQuestion", "expect_question_about": "clean"}]"#,
        )
        .unwrap();
        assert_eq!(
            s.turns[0].expect_kind,
            Some(ReplyKind::ClarificationQuestion)
        );

        let err = TranscriptScript::parse(r#"[{"utterance": "x", "expect_kind": "Applause"}]"#)
            .unwrap_err();
        assert!(
            matches!(err, StoreError::Schema { ref locus, .. } if locus.starts_with("[0].expect_kind")),
            "{err}"
        );
        assert!(TranscriptScript::parse("[]").is_err());
        assert!(TranscriptScript::parse(
            r#"[{"utterance": "x", "expect_kind": "TaskLearned", "expect_question_about": "y"}]"#
        )
        .is_err());
        assert!(TranscriptScript::parse(r#"[{"utterance": "x", "mood": "happy"}]"#).is_err());
    }
}
