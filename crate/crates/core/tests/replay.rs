mod common;

use std::sync::Arc;

use common::planted;
use garde_core::engine::EngineError;
use garde_core::providers::{
    MockResponder, ProviderError, ProviderKind, ProviderSettings, ReplayLog,
};
use garde_core::{run_stream, EngineConfig};

fn replay_settings(path: &std::path::Path) -> ProviderSettings {
    ProviderSettings {
        embedder: ProviderKind::Replay,
        proposer: ProviderKind::Replay,
        responder: ProviderKind::Replay,
        replay_path: Some(path.to_path_buf()),
        ..ProviderSettings::default()
    }
}

#[test]
fn replay_reproduces_a_recorded_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.jsonl");
    let (tl, p) = planted(&[6.0, 14.0, 22.0], 0.1);
    let p = p.with_responder(Arc::new(MockResponder::new(Some((10.0, 20.0)))));

    let log = ReplayLog::new();
    let cfg = EngineConfig::default();
    let recorded = run_stream(&cfg, &tl, &p.recording(&log)).unwrap();
    log.save(&path).unwrap();
    assert!(!log.is_empty());

    let replayed = run_stream(&cfg, &tl, &replay_settings(&path).build().unwrap()).unwrap();
    assert_eq!(recorded.trigger_log, replayed.trigger_log);
    assert_eq!(recorded.score_trace, replayed.score_trace);
    for (a, b) in recorded.score_trace.records().iter().zip(replayed.score_trace.records()) {
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    let verdicts: Vec<_> = replayed.trigger_log.iter().map(|e| e.verdict).collect();
    assert_eq!(verdicts.len(), 3);
}

#[test]
fn unrecorded_request_is_a_miss() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.jsonl");
    let (tl, p) = planted(&[6.0], 0.1);
    let log = ReplayLog::new();
    run_stream(&EngineConfig::default(), &tl, &p.recording(&log)).unwrap();
    log.save(&path).unwrap();

    let (other, _) = planted(&[6.0], 0.2);
    let settings = ProviderSettings {
        responder: ProviderKind::None,
        ..replay_settings(&path)
    };
    let err = run_stream(&EngineConfig::default(), &other, &settings.build().unwrap()).unwrap_err();
    // the query-time context frame already differs, so the proposer misses first
    assert!(matches!(err, EngineError::Proposer(ProviderError::ReplayMiss { .. })), "{err}");
}

#[test]
fn missing_log_is_an_io_error() {
    let settings = replay_settings(std::path::Path::new("/nonexistent/replay.jsonl"));
    assert!(matches!(settings.build(), Err(ProviderError::Io(_))));
}
