//! A recorded dialog replays identically without the recording backend.

use std::path::PathBuf;
use std::sync::Arc;

use taskforge::llm::{Cassette, CompletionBackend, FixtureBackend};
use taskforge::store::library_to_json;
use taskforge::{
    default_primitives, load_script, replay_script, DialogSession, Engine, LlmError, ReplayReport,
    SaveOptions,
};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(backend: Arc<dyn CompletionBackend>) -> (ReplayReport, String) {
    let mut session = DialogSession::new(
        "c",
        default_primitives().into_shared(),
        Arc::new(Engine::new(backend)),
    );
    let report = replay_script(
        &mut session,
        &load_script(root().join("scripts/table1.json")).unwrap(),
    );
    let lib = library_to_json(
        &session.library().read().unwrap(),
        SaveOptions::without_provenance(),
    );
    (report, lib)
}

#[test]
fn record_then_replay_matches_fixture_run() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("table1.cassette.json");
    let fixtures: Arc<dyn CompletionBackend> =
        Arc::new(FixtureBackend::from_path(root().join("fixtures/llm_fixtures.json")).unwrap());

    let (direct, direct_lib) = run(fixtures.clone());
    let recorder = Arc::new(Cassette::record(&tape, fixtures).unwrap());
    let (recorded, recorded_lib) = run(recorder.clone());
    assert_eq!(recorder.entries().len(), 10);
    let player = Arc::new(Cassette::replay(&tape).unwrap());
    let (replayed, replayed_lib) = run(player);

    assert!(direct.is_clean());
    for (a, b) in [(&direct, &recorded), (&direct, &replayed)] {
        let ra: Vec<_> = a.turns.iter().map(|t| &t.reply).collect();
        let rb: Vec<_> = b.turns.iter().map(|t| &t.reply).collect();
        assert_eq!(ra, rb);
    }
    assert_eq!(direct_lib, recorded_lib);
    assert_eq!(direct_lib, replayed_lib);
}

#[test]
fn replay_miss_is_a_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let tape = dir.path().join("empty.json");
    std::fs::write(&tape, "[]\n").unwrap();
    let (report, _) = run(Arc::new(Cassette::replay(&tape).unwrap()));
    assert!(report.backend_failed());
    assert_eq!(report.turns.len(), 1);
    let backend = Cassette::replay(&tape).unwrap();
    let err = backend
        .complete(&taskforge::CompletionRequest::new(
            taskforge::Role::Parse,
            "x",
            "y",
        ))
        .unwrap_err();
    assert!(matches!(err, LlmError::ReplayMiss { .. }));
}
