//! The registry of known actions.

use std::sync::{Arc, RwLock};

use indexmap::IndexMap;
use thiserror::Error;

use crate::model::{Body, ModelError, Signature, TaskDefinition};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LibraryError {
    #[error("{0} is already defined")]
    Duplicate(Signature),
    #[error(transparent)]
    Invalid(#[from] ModelError),
}

/// Known actions keyed by `(canonical name, arity)`, in insertion order.
///
/// Definitions are never replaced once inserted. Equality compares the set of
/// definitions regardless of the order they were added in.
#[derive(Debug, Clone, Default)]
pub struct TaskLibrary {
    definitions: IndexMap<Signature, TaskDefinition>,
}

/// Library handle shared between dialog sessions. A session holds the write
/// lock for the duration of one turn.
pub type SharedLibrary = Arc<RwLock<TaskLibrary>>;

impl TaskLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_shared(self) -> SharedLibrary {
        Arc::new(RwLock::new(self))
    }

    pub fn insert(&mut self, def: TaskDefinition) -> Result<(), LibraryError> {
        def.validate()?;
        if self.definitions.contains_key(&def.signature) {
            return Err(LibraryError::Duplicate(def.signature));
        }
        self.definitions.insert(def.signature.clone(), def);
        Ok(())
    }

    pub fn get(&self, signature: &Signature) -> Option<&TaskDefinition> {
        self.definitions.get(signature)
    }

    pub fn contains(&self, signature: &Signature) -> bool {
        self.definitions.contains_key(signature)
    }

    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    /// Signatures in insertion order, each exactly once.
    pub fn signatures(&self) -> Vec<Signature> {
        self.definitions.keys().cloned().collect()
    }

    pub fn definitions(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.definitions.values()
    }

    pub fn primitives(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.definitions().filter(|d| d.is_primitive())
    }

    pub fn learned(&self) -> impl Iterator<Item = &TaskDefinition> {
        self.definitions().filter(|d| !d.is_primitive())
    }

    /// Field-level differences against `reference`, ignoring provenance and
    /// parameter display names. Empty means structurally equal.
    pub fn structural_diff(&self, reference: &TaskLibrary) -> Vec<String> {
        let mut diffs = Vec::new();
        for (sig, expected) in &reference.definitions {
            let Some(actual) = self.definitions.get(sig) else {
                diffs.push(format!("{sig}: missing"));
                continue;
            };
            match (&actual.body, &expected.body) {
                (Body::Primitive, Body::Primitive) => {}
                (Body::Primitive, Body::Learned(_)) => {
                    diffs.push(format!("{sig}.kind: expected learned, found primitive"))
                }
                (Body::Learned(_), Body::Primitive) => {
                    diffs.push(format!("{sig}.kind: expected primitive, found learned"))
                }
                (Body::Learned(got), Body::Learned(want)) => {
                    if got.len() != want.len() {
                        diffs.push(format!(
                            "{sig}.body: expected {} steps, found {}",
                            want.len(),
                            got.len()
                        ));
                    }
                    for (i, (g, w)) in got.iter().zip(want).enumerate() {
                        if g != w {
                            diffs.push(format!("{sig}.body[{i}]: expected {w}, found {g}"));
                        }
                    }
                }
            }
        }
        for sig in self.definitions.keys() {
            if !reference.contains(sig) {
                diffs.push(format!("{sig}: unexpected definition"));
            }
        }
        diffs
    }
}

impl PartialEq for TaskLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .definitions
                .iter()
                .all(|(sig, def)| other.get(sig) == Some(def))
    }
}

impl Eq for TaskLibrary {}
