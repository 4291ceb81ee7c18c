//! Workloads shared by the benchmarks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use taskforge::llm::FixtureBackend;
use taskforge::{
    canonicalize, default_primitives, generalize, load_script, replay_script, DialogSession,
    Engine, PredicateInstance, ReplayReport, TaskDefinition, TaskLibrary, Term, TranscriptScript,
};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture_backend() -> Arc<FixtureBackend> {
    Arc::new(
        FixtureBackend::from_path(workspace_root().join("fixtures/llm_fixtures.json")).unwrap(),
    )
}

pub fn table1_script() -> TranscriptScript {
    load_script(workspace_root().join("scripts/table1.json")).unwrap()
}

/// Run the reference dialog on a fresh session.
pub fn run_table1(backend: Arc<FixtureBackend>, script: &TranscriptScript) -> ReplayReport {
    let engine = Arc::new(Engine::new(backend));
    let mut session = DialogSession::new("bench", default_primitives().into_shared(), engine);
    replay_script(&mut session, script)
}

/// A chain of `depth` tasks, each calling the next `fanout` times, bottoming
/// out in `moveHand/1`.
pub fn chain_library(depth: usize, fanout: usize) -> (TaskLibrary, PredicateInstance) {
    let mut lib = default_primitives();
    let arg = canonicalize("pepper").unwrap();
    let mut callee = PredicateInstance::new(
        canonicalize("moveHand").unwrap(),
        vec![Term::Const(arg.clone())],
    );
    for level in 0..depth {
        let parent = PredicateInstance::new(
            canonicalize(&format!("level{level}")).unwrap(),
            vec![Term::Const(arg.clone())],
        );
        let steps = vec![callee.clone(); fanout];
        let def: TaskDefinition = generalize(&parent, &steps).unwrap();
        lib.insert(def).unwrap();
        callee = parent;
    }
    (lib, callee)
}

/// A parent with `arity` arguments and `len` steps drawing on them.
pub fn generalize_case(arity: usize, len: usize) -> (PredicateInstance, Vec<PredicateInstance>) {
    let objects: Vec<_> = (0..arity)
        .map(|i| canonicalize(&format!("obj{i}")).unwrap())
        .collect();
    let parent = PredicateInstance::new(
        canonicalize("teach").unwrap(),
        objects.iter().cloned().map(Term::Const).collect(),
    );
    let steps = (0..len)
        .map(|i| {
            PredicateInstance::new(
                canonicalize("put").unwrap(),
                vec![
                    Term::Const(objects[i % arity].clone()),
                    Term::Const(canonicalize("counter").unwrap()),
                ],
            )
        })
        .collect();
    (parent, steps)
}

/// A well-formed completion of `lines` predicate lines.
pub fn completion(lines: usize) -> String {
    (0..lines)
        .map(|i| format!("put(object{i}, counter)"))
        .collect::<Vec<_>>()
        .join("\n")
}
