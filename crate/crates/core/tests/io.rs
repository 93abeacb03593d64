use std::path::Path;

use garde_core::io::{load_corpus, load_timeline, save_timeline, IoError};
use garde_core::model::{validate_timeline, Frame, Instruction, Timeline};
use garde_core::providers::{Embedder, MockEmbedder};
use proptest::prelude::*;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn minimal_fixture_loads() {
    let t = load_timeline(&fixture("minimal.timeline.jsonl")).unwrap();
    assert_eq!(t.frames.len(), 1);
    assert_eq!(t.ground_truth_times, vec![0.0]);
    assert_eq!(t.frames[0].encoding().unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(
        load_corpus(Path::new("/nonexistent/corpus.jsonl")),
        Err(IoError::Io { .. })
    ));
}

#[test]
fn mock_text_embedding_is_stable() {
    let v = MockEmbedder::new(0, 8).embed_text("red kettle boiling").unwrap();
    let again = MockEmbedder::new(0, 8).embed_text("red kettle boiling").unwrap();
    assert_eq!(v, again);
    assert!((v.norm() - 1.0).abs() < 1e-12);
    for (a, b) in v.values().iter().zip(GOLDEN) {
        assert_eq!(a.to_bits(), b.to_bits(), "{:?}", v.values());
    }
    assert_ne!(v, MockEmbedder::new(1, 8).embed_text("red kettle boiling").unwrap());
}

// computed independently from the hash-expansion definition
const GOLDEN: [f64; 8] = [
    0.3381926270410926,
    0.403098683463541,
    -0.23860844945303866,
    0.3816672031628092,
    -0.4407677749729059,
    -0.30299165340926193,
    -0.09388203164545796,
    0.4750150975794104,
];

fn timelines() -> impl Strategy<Value = Timeline> {
    (
        "[a-z]{1,8}",
        "[a-z ]{0,12}[a-z]",
        0u32..20,
        prop::collection::vec(0u32..100, 1..6),
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..8),
        prop::option::of("[A-Z]{3}"),
    )
        .prop_map(|(id, text, t0, mut gt, encs, task_tag)| {
            gt.sort_unstable();
            Timeline {
                id,
                instruction: Instruction::new(text, t0 as f64 * 0.5).unwrap(),
                ground_truth_times: gt.into_iter().map(|g| g as f64 * 0.25).collect(),
                task_tag,
                frames: encs
                    .into_iter()
                    .enumerate()
                    .map(|(i, e)| Frame::with_encoding(i as f64 / 3.0, e))
                    .collect(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn timeline_round_trips(t in timelines()) {
        prop_assume!(validate_timeline(&t).is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        save_timeline(&path, &t).unwrap();
        prop_assert_eq!(load_timeline(&path).unwrap(), t);
    }
}
