//! The streaming loop.
//!
//! A [`Session`] is opened at query time: the proposer sees the instruction
//! and a short low-rate history once, and the resulting cues are embedded.
//! Frames are then pushed one at a time. Each frame joins a fixed-size
//! sliding window; on process-rate ticks with a full window the window is
//! pooled into a segment embedding and scored against every cue, and the
//! surge rule decides whether to fire. With the encoding cache on, each
//! frame is encoded exactly once on arrival and reused for every window it
//! belongs to, so per-tick cost does not depend on stream position.

mod dispatch;
mod session;
mod trigger;
mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{MatchError, ScoreTrace};
use crate::model::{validate_timeline, EngineConfig, ModelError, Timeline, TriggerEvent, Violation};
use crate::providers::{ProviderError, Providers};

pub use session::{context_frames, start_session, Session, StepOutcome, DEFAULT_RESPONDER_WORKERS};
pub use trigger::TriggerRule;
pub use window::{WindowEntry, WindowState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("{0}")]
    Config(ModelError),
    #[error("invalid timeline: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Timeline(Vec<Violation>),
    #[error("proposer failed: {0}")]
    Proposer(ProviderError),
    #[error("embedder failed: {0}")]
    Embedder(ProviderError),
    #[error("invalid proposals: {0}")]
    Proposals(ModelError),
    #[error("frame at {next} arrived after {prev}")]
    OutOfOrder { prev: f64, next: f64 },
    #[error("frame at {timestamp} precedes the query time {issued_at}")]
    BeforeQuery { timestamp: f64, issued_at: f64 },
    #[error("bad frame timestamp {0}")]
    BadTimestamp(f64),
    #[error("{0}")]
    Match(MatchError),
    #[error("no responder attached")]
    NoResponder,
    #[error("no trigger event {0}")]
    UnknownEvent(usize),
}

impl EngineError {
    /// True when the failure came from a provider rather than the inputs.
    pub fn is_provider(&self) -> bool {
        matches!(self, EngineError::Proposer(_) | EngineError::Embedder(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub frames_ingested: u64,
    /// Frames skipped because they fell between segment-rate grid points.
    #[serde(default)]
    pub frames_dropped: u64,
    pub ticks: u64,
    pub encode_calls: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineReport {
    pub trigger_log: Vec<TriggerEvent>,
    pub score_trace: ScoreTrace,
    pub counters: Counters,
    /// Width of the score moving average; anything above 1 changes trigger behavior.
    pub smoothing_window: usize,
    pub cache_active: bool,
}

/// Runs one timeline end to end: opens a session at the query time with
/// the frames up to it as history, then streams every frame from it on.
pub fn run_stream(
    cfg: &EngineConfig,
    timeline: &Timeline,
    providers: &Providers,
) -> Result<EngineReport, EngineError> {
    let violations = validate_timeline(timeline);
    if !violations.is_empty() {
        return Err(EngineError::Timeline(violations));
    }
    let t0 = timeline.instruction.issued_at;
    // a frame exactly at the query time is both context and the first live frame
    let history = &timeline.frames[..timeline.frames.partition_point(|f| f.timestamp <= t0)];
    let live = &timeline.frames[timeline.frames.partition_point(|f| f.timestamp < t0)..];

    let mut session = start_session(
        cfg.clone(),
        timeline.instruction.clone(),
        history,
        providers.proposer.as_ref(),
        providers.embedder.clone(),
    )?;
    if let Some(r) = &providers.responder {
        session = session.with_responder(r.clone(), DEFAULT_RESPONDER_WORKERS);
    }
    for frame in live {
        session.step(frame.clone())?;
    }
    Ok(session.finish())
}
