//! Symbolic task representation: names, terms, predicate instances and
//! parameterized task definitions.
//!
//! Everything in here is an immutable value. Learned definitions are built by
//! [`generalize`], which lifts the constants of a taught example into scoped
//! variables, and turned back into ground steps by [`instantiate`].

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("name {0:?} contains no alphanumeric characters")]
    EmptyName(String),
    #[error("cannot generalize an empty step list")]
    EmptySteps,
    #[error("step {0} refers to the task being defined")]
    SelfReference(String),
    #[error("{0} is not ground")]
    NotGround(String),
    #[error("arity mismatch for {name}: expected {expected} arguments, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("{0} is primitive and has no body")]
    PrimitiveHasNoBody(String),
    #[error("variable #{index} out of range in {name} (arity {arity})")]
    VariableOutOfRange {
        name: String,
        index: usize,
        arity: usize,
    },
    #[error("learned definition {0} has an empty body")]
    EmptyBody(String),
    #[error("expected {expected} parameter names for {name}, got {got}")]
    ParamCount {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// A predicate or constant name.
///
/// Equality, ordering and hashing go through the canonical key (lowercase
/// alphanumerics only), so `pick_up`, `pickUp` and `pick up` are the same
/// symbol. The display form is kept as first written.
#[derive(Clone)]
pub struct Symbol {
    display: String,
    key: String,
}

impl Symbol {
    pub fn new(raw: &str) -> Result<Self, ModelError> {
        canonicalize(raw)
    }

    pub fn display_form(&self) -> &str {
        &self.display
    }

    pub fn canonical_key(&self) -> &str {
        &self.key
    }
}

/// Trim `raw_name` and derive its canonical key.
pub fn canonicalize(raw_name: &str) -> Result<Symbol, ModelError> {
    let display = raw_name.trim();
    let key: String = display
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if key.is_empty() {
        return Err(ModelError::EmptyName(raw_name.to_string()));
    }
    Ok(Symbol {
        display: display.to_string(),
        key,
    })
}

impl PartialEq for Symbol {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Symbol {}

impl Hash for Symbol {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key.hash(state);
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.display)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display)
    }
}

impl std::str::FromStr for Symbol {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        canonicalize(s)
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.display)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        canonicalize(&raw).map_err(serde::de::Error::custom)
    }
}

/// A predicate argument. Variables index into the parameter list of the
/// definition whose body they appear in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Const(Symbol),
    Var(usize),
}

impl Term {
    pub fn constant(raw: &str) -> Result<Self, ModelError> {
        Ok(Term::Const(canonicalize(raw)?))
    }

    pub fn as_const(&self) -> Option<&Symbol> {
        match self {
            Term::Const(s) => Some(s),
            Term::Var(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(s) => write!(f, "{s}"),
            Term::Var(i) => write!(f, "?{i}"),
        }
    }
}

/// Action identity: canonical name plus arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub name: Symbol,
    pub arity: usize,
}

impl Signature {
    pub fn new(name: Symbol, arity: usize) -> Self {
        Self { name, arity }
    }

    /// Parse `name/arity`.
    pub fn parse(text: &str) -> Option<Self> {
        let (name, arity) = text.trim().rsplit_once('/')?;
        let arity = arity.trim().parse().ok()?;
        Some(Self::new(canonicalize(name).ok()?, arity))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredicateInstance {
    pub name: Symbol,
    pub args: Vec<Term>,
}

impl PredicateInstance {
    pub fn new(name: Symbol, args: Vec<Term>) -> Self {
        Self { name, args }
    }

    /// Build a ground instance from raw strings. Mostly useful in tests.
    pub fn ground(name: &str, args: &[&str]) -> Result<Self, ModelError> {
        let args = args
            .iter()
            .map(|a| Term::constant(a))
            .collect::<Result<_, _>>()?;
        Ok(Self::new(canonicalize(name)?, args))
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn signature(&self) -> Signature {
        Signature::new(self.name.clone(), self.args.len())
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|a| matches!(a, Term::Const(_)))
    }

    /// Constant arguments, or `None` if any argument is a variable.
    pub fn ground_args(&self) -> Option<Vec<Symbol>> {
        self.args.iter().map(|a| a.as_const().cloned()).collect()
    }
}

impl fmt::Display for PredicateInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{arg}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub utterance: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    Primitive,
    Learned(Vec<PredicateInstance>),
}

/// A named, parameterized action.
///
/// `params` are display names only. Equality ignores provenance.
#[derive(Debug, Clone)]
pub struct TaskDefinition {
    pub signature: Signature,
    pub params: Vec<String>,
    pub body: Body,
    pub provenance: Option<Provenance>,
}

impl PartialEq for TaskDefinition {
    fn eq(&self, other: &Self) -> bool {
        self.signature == other.signature && self.params == other.params && self.body == other.body
    }
}

impl Eq for TaskDefinition {}

impl TaskDefinition {
    pub fn primitive(name: &str, params: &[&str]) -> Result<Self, ModelError> {
        let signature = Signature::new(canonicalize(name)?, params.len());
        Ok(Self {
            signature,
            params: params.iter().map(|p| p.to_string()).collect(),
            body: Body::Primitive,
            provenance: None,
        })
    }

    pub fn learned(
        signature: Signature,
        params: Vec<String>,
        steps: Vec<PredicateInstance>,
    ) -> Result<Self, ModelError> {
        let def = Self {
            signature,
            params,
            body: Body::Learned(steps),
            provenance: None,
        };
        def.validate()?;
        Ok(def)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn is_primitive(&self) -> bool {
        matches!(self.body, Body::Primitive)
    }

    pub fn steps(&self) -> Option<&[PredicateInstance]> {
        match &self.body {
            Body::Primitive => None,
            Body::Learned(steps) => Some(steps),
        }
    }

    /// Checks the local invariants: parameter count, variable scope, non-empty
    /// body and absence of direct self-recursion. References to other tasks
    /// are only resolved at expansion time.
    pub fn validate(&self) -> Result<(), ModelError> {
        let name = self.signature.to_string();
        let arity = self.signature.arity;
        if self.params.len() != arity {
            return Err(ModelError::ParamCount {
                name,
                expected: arity,
                got: self.params.len(),
            });
        }
        let Body::Learned(steps) = &self.body else {
            return Ok(());
        };
        if steps.is_empty() {
            return Err(ModelError::EmptyBody(name));
        }
        for step in steps {
            if step.signature() == self.signature {
                return Err(ModelError::SelfReference(step.to_string()));
            }
            for arg in &step.args {
                if let Term::Var(index) = arg {
                    if *index >= arity {
                        return Err(ModelError::VariableOutOfRange {
                            name,
                            index: *index,
                            arity,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lift a taught example into a reusable definition.
///
/// Every step constant equal to one of the parent's arguments becomes a
/// variable bound to the leftmost matching parameter. Other constants stay
/// as they are.
pub fn generalize(
    parent: &PredicateInstance,
    steps: &[PredicateInstance],
) -> Result<TaskDefinition, ModelError> {
    let parent_args = parent
        .ground_args()
        .ok_or_else(|| ModelError::NotGround(parent.to_string()))?;
    if steps.is_empty() {
        return Err(ModelError::EmptySteps);
    }
    let signature = parent.signature();
    let mut body = Vec::with_capacity(steps.len());
    for step in steps {
        if !step.is_ground() {
            return Err(ModelError::NotGround(step.to_string()));
        }
        if step.signature() == signature {
            return Err(ModelError::SelfReference(step.to_string()));
        }
        let args = step
            .args
            .iter()
            .map(|arg| match arg {
                Term::Const(c) => match parent_args.iter().position(|p| p == c) {
                    Some(index) => Term::Var(index),
                    None => arg.clone(),
                },
                Term::Var(_) => unreachable!("checked ground above"),
            })
            .collect();
        body.push(PredicateInstance::new(step.name.clone(), args));
    }
    let params = parent_args
        .iter()
        .map(|a| a.display_form().to_string())
        .collect();
    TaskDefinition::learned(signature, params, body)
}

/// Substitute `args` for the variables of a learned body.
pub fn instantiate(
    def: &TaskDefinition,
    args: &[Symbol],
) -> Result<Vec<PredicateInstance>, ModelError> {
    let name = def.signature.to_string();
    let steps = def
        .steps()
        .ok_or_else(|| ModelError::PrimitiveHasNoBody(name.clone()))?;
    if args.len() != def.signature.arity {
        return Err(ModelError::ArityMismatch {
            name,
            expected: def.signature.arity,
            got: args.len(),
        });
    }
    steps
        .iter()
        .map(|step| {
            let args = step
                .args
                .iter()
                .map(|arg| match arg {
                    Term::Const(_) => Ok(arg.clone()),
                    Term::Var(i) => args.get(*i).cloned().map(Term::Const).ok_or(
                        ModelError::VariableOutOfRange {
                            name: name.clone(),
                            index: *i,
                            arity: args.len(),
                        },
                    ),
                })
                .collect::<Result<_, _>>()?;
            Ok(PredicateInstance::new(step.name.clone(), args))
        })
        .collect()
}
