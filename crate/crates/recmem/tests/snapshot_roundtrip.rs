//! Snapshot persistence: layout, round trips, failure modes.

mod common;

use std::fs;

use common::*;
use recmem::error::Error;
use recmem::harness::run_ingest;
use recmem::query::RetrievalBudget;
use recmem::snapshot::{restore, snapshot};

#[test]
fn golden_snapshot_layout() {
    let record = golden_record();
    let cfg = golden_config();
    let (engine, _) = run_ingest(&record, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    snapshot(&engine, &cfg, dir.path()).unwrap();

    let count_lines = |name: &str| {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(count_lines("subconscious.jsonl"), 3);
    assert_eq!(count_lines("episodes.jsonl"), 1);
    assert_eq!(count_lines("facts.jsonl"), 3);
    assert!(dir.path().join("config.json").exists());
    assert!(dir.path().join("ledger.json").exists());
}

#[test]
fn restore_reproduces_retrieval_exactly() {
    let record = golden_record();
    let cfg = golden_config();
    let (engine, _) = run_ingest(&record, &cfg).unwrap();
    let budget = RetrievalBudget::default();
    let before = engine.retrieve("What is Mia allergic to?", &budget).unwrap();
    let before_answer = engine.answer("q1", "What is Mia allergic to?", &budget).unwrap();

    let dir = tempfile::tempdir().unwrap();
    snapshot(&engine, &cfg, dir.path()).unwrap();
    let restored = restore(dir.path()).unwrap();

    let after = restored.retrieve("What is Mia allergic to?", &budget).unwrap();
    assert_eq!(after, before);
    let after_answer = restored.answer("q1", "What is Mia allergic to?", &budget).unwrap();
    assert_eq!(after_answer.text, before_answer.text);
    assert_eq!(after_answer.usage, before_answer.usage);

    // Counters and ledger history survive.
    assert_eq!(restored.counters(), engine.counters());
    // The restored ledger has the original query plus the one just made.
    assert_eq!(restored.ledger().report().per_question.len(), 1);
}

#[test]
fn restored_engine_continues_the_stream() {
    let record = golden_record();
    let cfg = golden_config();
    let (engine, _) = run_ingest(&record, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    snapshot(&engine, &cfg, dir.path()).unwrap();

    let mut restored = restore(dir.path()).unwrap();
    // Fresh ids continue after the persisted ones, and the follow-up cake
    // turn still merges into the restored episode.
    let follow_up = recmem::turn::InteractionUnit::new(
        "t4",
        "More on the birthday cake for Mia from SweetLeaf please",
        "Of course, the cake order is on track.",
        recmem::turn::Timestamp::parse("2023-05-01T11:00:00Z").unwrap(),
    );
    let outcome = restored.ingest_turn(follow_up).unwrap();
    assert!(matches!(outcome, recmem::engine::TurnOutcome::Merged { .. }));
    assert_eq!(restored.episodic().episodes_in_order()[0].revision, 2);
    // Duplicate detection still sees pre-snapshot turns.
    let dup = recmem::turn::InteractionUnit::new(
        "t1",
        "dup",
        "dup",
        recmem::turn::Timestamp::parse("2023-05-01T12:00:00Z").unwrap(),
    );
    assert!(matches!(
        restored.ingest_turn(dup),
        Err(Error::DuplicateTurnId(_))
    ));
}

#[test]
fn snapshots_are_byte_identical_across_runs() {
    let record = golden_record();
    let cfg = golden_config();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    let (engine_a, _) = run_ingest(&record, &cfg).unwrap();
    snapshot(&engine_a, &cfg, dir_a.path()).unwrap();
    let (engine_b, _) = run_ingest(&record, &cfg).unwrap();
    snapshot(&engine_b, &cfg, dir_b.path()).unwrap();

    for name in [
        "config.json",
        "subconscious.jsonl",
        "episodes.jsonl",
        "facts.jsonl",
        "ledger.json",
    ] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn restore_from_empty_dir_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(restore(dir.path()), Err(Error::Io(_))));
    assert!(matches!(
        restore(&dir.path().join("missing")),
        Err(Error::Io(_))
    ));
}

#[test]
fn version_mismatch_is_detected() {
    let record = golden_record();
    let cfg = golden_config();
    let (engine, _) = run_ingest(&record, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    snapshot(&engine, &cfg, dir.path()).unwrap();

    let path = dir.path().join("config.json");
    let bumped = fs::read_to_string(&path)
        .unwrap()
        .replace("\"format_version\": 1", "\"format_version\": 99");
    fs::write(&path, bumped).unwrap();
    assert!(matches!(
        restore(dir.path()),
        Err(Error::VersionMismatch {
            expected: 1,
            found: 99
        })
    ));
}
