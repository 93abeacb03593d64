//! Streaming trigger engine for proactive video understanding.
//!
//! An instruction is parsed once into a small set of declarative visual
//! cues. A lightweight embedder then scores a sliding window of frames
//! against those cues at a fixed rate, and a trigger fires whenever some
//! cue's similarity jumps by more than a threshold between ticks. The
//! [`eval`] module scores trigger logs against annotated response times.

pub mod engine;
pub mod eval;
pub mod io;
pub mod matching;
pub mod model;
pub mod providers;
pub mod synth;

pub use engine::{run_stream, start_session, EngineError, EngineReport, Session};
pub use matching::{cosine_similarity, normalize, score_segment, ScoreTrace};
pub use model::{
    EmbeddingVector, EngineConfig, Frame, FramePayload, Instruction, Proposal, ProposalSet,
    SimilarityRecord, Timeline, TriggerEvent, Verdict,
};
