use std::fs;
use std::path::PathBuf;

use serde_json::json;
use xlke::dataset::{corpus_stats, expand_language, ingest, ingest_tag, DatasetError, ReverseTranslator};
use xlke::model::{read_entries, write_entries};
use xlke::{LanguageCode, QueryKind, TaskId};

fn raw(task: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/raw")
        .join(task)
}

#[test]
fn sample_statistics_match_hand_counts() {
    let cases = [
        (TaskId::Zsre, 5, 7.0, 1.8),
        (TaskId::Counterfact, 4, 6.25, 1.0),
        (TaskId::Wfd, 4, 6.25, 2.25),
    ];
    for (task, count, q_len, a_len) in cases {
        let report = ingest(task, &raw(task.as_str())).unwrap();
        assert!(report.dropped.is_empty(), "{task}: {:?}", report.dropped);
        let stats = corpus_stats(&report.entries).unwrap();
        assert_eq!((stats.count, stats.q_len, stats.a_len), (count, q_len, a_len), "{task}");
    }
}

#[test]
fn portability_join_fills_missing_records() {
    let report = ingest(TaskId::Zsre, &raw("zsre")).unwrap();
    let last = &report.entries[4];
    assert_eq!(last.id, "zsre-000004");
    assert!(!last.test(QueryKind::Portability).unwrap().query.is_empty());

    let cf = ingest(TaskId::Counterfact, &raw("counterfact")).unwrap();
    for e in &cf.entries {
        let l = e.test(QueryKind::Locality).unwrap();
        assert!(l.original_answer.is_some());
        assert!(e.edit.old_answer.is_some());
    }
}

#[test]
fn wfd_portability_comes_from_one_hop() {
    let report = ingest(TaskId::Wfd, &raw("wfd")).unwrap();
    for e in &report.entries {
        let p = e.test(QueryKind::Portability).unwrap();
        assert!(!p.query.contains('{'), "unfilled template in {}", p.query);
    }
}

#[test]
fn missing_portability_extension_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(raw("zsre").join("zsre.json"), dir.path().join("zsre.json")).unwrap();
    let err = ingest(TaskId::Zsre, dir.path()).unwrap_err();
    assert!(matches!(err, DatasetError::MissingPortabilityExtension { .. }), "{err}");
}

#[test]
fn unusable_records_are_dropped_with_reasons() {
    let dir = tempfile::tempdir().unwrap();
    let records = json!([
        {"subject": "A", "src": "Who made A?", "alt": "Bob", "answers": ["Al"],
         "rephrase": "Maker of A?", "loc": "nq question: who is c", "loc_ans": "Cy",
         "portability": {"New Question": "Where is Bob from?", "New Answer": "Oslo"}},
        {"subject": "B", "src": "Who made B?", "alt": "  ", "answers": ["Al"],
         "rephrase": "Maker of B?", "loc": "nq question: who is d", "loc_ans": "Di",
         "portability": {"New Question": "q", "New Answer": "a"}},
        {"subject": "C", "src": "Who made C?", "alt": "Eve", "answers": ["Al"],
         "loc": "nq question: who is e", "loc_ans": "Ed",
         "portability": {"New Question": "q", "New Answer": "a"}}
    ]);
    fs::write(dir.path().join("zsre.json"), records.to_string()).unwrap();
    let report = ingest(TaskId::Zsre, dir.path()).unwrap();
    assert_eq!(report.entries.len(), 1);
    let dropped: Vec<usize> = report.dropped.iter().map(|d| d.index).collect();
    assert_eq!(dropped, vec![1, 2]);
    assert!(report.dropped[0].reason.contains("alt"));
    assert!(report.dropped[1].reason.contains("rephrase"));
}

#[test]
fn unknown_task_tag() {
    assert!(matches!(
        ingest_tag("squad", &raw("zsre")),
        Err(DatasetError::UnknownTask(_))
    ));
}

#[test]
fn expansion_writes_and_reads_back() {
    let report = ingest(TaskId::Counterfact, &raw("counterfact")).unwrap();
    let fr = LanguageCode::new("fr").unwrap();
    let expanded = expand_language(&report.entries, &fr, &ReverseTranslator, 2).unwrap();
    assert_eq!(expanded.len(), report.entries.len());
    assert!(expanded.iter().all(|e| e.id.ends_with("-fr") && e.language == fr));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cf.jsonl");
    let all: Vec<_> = report.entries.iter().chain(&expanded).collect();
    write_entries(all.iter().copied(), &path).unwrap();
    let back = read_entries(&path).unwrap();
    assert_eq!(back.len(), all.len());
    assert!(back.iter().zip(&all).all(|(a, b)| a == *b));
}
