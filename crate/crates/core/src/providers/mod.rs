//! Contracts for the three external model roles and their implementations.
//!
//! * [`Embedder`] backs the matching stage: per-frame encodings, pooling of a
//!   window into a segment embedding, and text embedding for proposals.
//! * [`Proposer`] turns an instruction plus a short history into cues.
//! * [`Responder`] verifies a trigger and produces the response text.
//!
//! Each role has a deterministic mock, a replay variant driven by a log
//! recorded from an earlier run, and an HTTP/JSON remote variant.

mod mock;
mod remote;
mod replay;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::MatchError;
use crate::model::{EmbeddingVector, Frame, Instruction, ProposalSet, TriggerEvent};

pub use mock::{MockEmbedder, MockProposer, MockResponder, ProposerFixture};
pub use remote::{RemoteEmbedder, RemoteProposer, RemoteResponder, RemoteSettings};
pub use replay::{
    RecordingEmbedder, RecordingProposer, RecordingResponder, ReplayEmbedder, ReplayLog,
    ReplayProposer, ReplayResponder,
};

pub const EMBEDDER_URL_ENV: &str = "GARDE_EMBEDDER_URL";
pub const PROPOSER_URL_ENV: &str = "GARDE_PROPOSER_URL";
pub const RESPONDER_URL_ENV: &str = "GARDE_RESPONDER_URL";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("transport error from {endpoint} after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("replay log has no record for {op} request {digest}")]
    ReplayMiss { op: String, digest: String },
    #[error("proposer returned no usable proposals")]
    EmptyProposals,
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty window")]
    EmptyWindow,
    #[error("zero-norm embedding")]
    ZeroVector,
    #[error("{0}")]
    Io(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl From<MatchError> for ProviderError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::ZeroVector => ProviderError::ZeroVector,
            MatchError::DimensionMismatch { expected, found } => {
                ProviderError::DimensionMismatch { expected, found }
            }
            other => ProviderError::Malformed(other.to_string()),
        }
    }
}

/// A single frame's visual encoding, the unit held by the encoding cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEncoding {
    pub values: Arc<[f64]>,
    pub frame_timestamp: f64,
}

impl FrameEncoding {
    pub fn new(values: impl Into<Arc<[f64]>>, frame_timestamp: f64) -> Result<Self, ProviderError> {
        let values = values.into();
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::Malformed(
                "frame encoding must be non-empty and finite".into(),
            ));
        }
        Ok(Self {
            values,
            frame_timestamp,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderCapabilities {
    pub supports_frame_encoding: bool,
    pub embedding_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponderVerdict {
    pub text: String,
    pub accepted: bool,
}

impl ResponderVerdict {
    pub fn new(text: impl Into<String>, accepted: bool) -> Result<Self, ProviderError> {
        let text = text.into();
        if accepted && text.trim().is_empty() {
            return Err(ProviderError::Malformed(
                "accepted verdict must carry response text".into(),
            ));
        }
        Ok(Self { text, accepted })
    }
}

pub trait Embedder: Send + Sync {
    fn capabilities(&self) -> ProviderCapabilities;

    fn encode_frame(&self, frame: &Frame) -> Result<FrameEncoding, ProviderError>;

    /// Pools an ordered window of frame encodings into a unit-norm segment embedding.
    fn pool(&self, encodings: &[FrameEncoding]) -> Result<EmbeddingVector, ProviderError>;

    fn embed_text(&self, cue: &str) -> Result<EmbeddingVector, ProviderError>;

    /// Whole-segment embedding, used when the encoding cache is off or the
    /// provider has no frame-level access.
    fn embed_segment(&self, frames: &[Frame]) -> Result<EmbeddingVector, ProviderError> {
        let encodings = frames
            .iter()
            .map(|f| self.encode_frame(f))
            .collect::<Result<Vec<_>, _>>()?;
        self.pool(&encodings)
    }
}

pub trait Proposer: Send + Sync {
    fn propose(&self, instruction: &Instruction, context: &[Frame])
        -> Result<ProposalSet, ProviderError>;
}

pub trait Responder: Send + Sync {
    fn respond(
        &self,
        instruction: &Instruction,
        recent: &[Frame],
        trigger: &TriggerEvent,
    ) -> Result<ResponderVerdict, ProviderError>;
}

/// The provider bundle a stream run needs.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub proposer: Arc<dyn Proposer>,
    pub responder: Option<Arc<dyn Responder>>,
}

impl Providers {
    /// Mock embedder and proposer with the given seed and dimension, no responder.
    pub fn mock(seed: u64, dim: usize, proposer: MockProposer) -> Self {
        Self {
            embedder: Arc::new(MockEmbedder::new(seed, dim)),
            proposer: Arc::new(proposer),
            responder: None,
        }
    }

    pub fn with_responder(mut self, responder: Arc<dyn Responder>) -> Self {
        self.responder = Some(responder);
        self
    }

    /// Wraps every provider so that its calls are appended to `log`.
    pub fn recording(self, log: &ReplayLog) -> Self {
        Self {
            embedder: Arc::new(RecordingEmbedder::new(self.embedder, log.clone())),
            proposer: Arc::new(RecordingProposer::new(self.proposer, log.clone())),
            responder: self
                .responder
                .map(|r| Arc::new(RecordingResponder::new(r, log.clone())) as Arc<dyn Responder>),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Replay,
    Remote,
    None,
}

/// Provider selection and endpoints, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub embedder: ProviderKind,
    pub proposer: ProviderKind,
    pub responder: ProviderKind,
    pub seed: u64,
    pub embedding_dim: usize,
    pub frame_encoding: bool,
    /// Mock proposer fixture file; the built-in fixtures are used when absent.
    pub proposals: Option<PathBuf>,
    /// Mock responder acceptance window `[start, end]`; absent accepts everything.
    pub accept_window: Option<[f64; 2]>,
    pub replay_path: Option<PathBuf>,
    pub embedder_url: Option<String>,
    pub proposer_url: Option<String>,
    pub responder_url: Option<String>,
    pub timeout_seconds: f64,
    pub max_attempts: u32,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            embedder: ProviderKind::Mock,
            proposer: ProviderKind::Mock,
            responder: ProviderKind::None,
            seed: 0,
            embedding_dim: 64,
            frame_encoding: true,
            proposals: None,
            accept_window: None,
            replay_path: None,
            embedder_url: None,
            proposer_url: None,
            responder_url: None,
            timeout_seconds: 10.0,
            max_attempts: 2,
        }
    }
}

impl ProviderSettings {
    /// Applies `GARDE_*_URL` overrides from the given lookup.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(u) = lookup(EMBEDDER_URL_ENV) {
            self.embedder_url = Some(u);
        }
        if let Some(u) = lookup(PROPOSER_URL_ENV) {
            self.proposer_url = Some(u);
        }
        if let Some(u) = lookup(RESPONDER_URL_ENV) {
            self.responder_url = Some(u);
        }
    }

    fn remote(&self, url: &Option<String>, role: &str) -> Result<RemoteSettings, ProviderError> {
        let base_url = url
            .clone()
            .ok_or_else(|| ProviderError::Precondition(format!("no {role} url configured")))?;
        Ok(RemoteSettings {
            base_url,
            timeout: std::time::Duration::from_secs_f64(self.timeout_seconds),
            max_attempts: self.max_attempts.max(1),
        })
    }

    fn replay_log(&self) -> Result<ReplayLog, ProviderError> {
        let path = self
            .replay_path
            .as_ref()
            .ok_or_else(|| ProviderError::Precondition("no replay_path configured".into()))?;
        ReplayLog::load(path)
    }

    pub fn build(&self) -> Result<Providers, ProviderError> {
        let mut replay: Option<ReplayLog> = None;
        let mut replay_log = || -> Result<ReplayLog, ProviderError> {
            if replay.is_none() {
                replay = Some(self.replay_log()?);
            }
            Ok(replay.clone().expect("just set"))
        };

        let embedder: Arc<dyn Embedder> = match self.embedder {
            ProviderKind::Mock => Arc::new(
                MockEmbedder::new(self.seed, self.embedding_dim)
                    .with_frame_access(self.frame_encoding),
            ),
            ProviderKind::Replay => Arc::new(ReplayEmbedder::new(replay_log()?)?),
            ProviderKind::Remote => Arc::new(RemoteEmbedder::new(
                self.remote(&self.embedder_url, "embedder")?,
                ProviderCapabilities {
                    supports_frame_encoding: self.frame_encoding,
                    embedding_dim: self.embedding_dim,
                },
            )),
            ProviderKind::None => {
                return Err(ProviderError::Precondition("an embedder is required".into()))
            }
        };
        let proposer: Arc<dyn Proposer> = match self.proposer {
            ProviderKind::Mock => Arc::new(match &self.proposals {
                Some(p) => MockProposer::from_file(p)?,
                None => MockProposer::builtin(),
            }),
            ProviderKind::Replay => Arc::new(ReplayProposer::new(replay_log()?)),
            ProviderKind::Remote => Arc::new(RemoteProposer::new(
                self.remote(&self.proposer_url, "proposer")?,
            )),
            ProviderKind::None => {
                return Err(ProviderError::Precondition("a proposer is required".into()))
            }
        };
        let responder: Option<Arc<dyn Responder>> = match self.responder {
            ProviderKind::Mock => Some(Arc::new(MockResponder::new(
                self.accept_window.map(|[a, b]| (a, b)),
            ))),
            ProviderKind::Replay => Some(Arc::new(ReplayResponder::new(replay_log()?))),
            ProviderKind::Remote => Some(Arc::new(RemoteResponder::new(
                self.remote(&self.responder_url, "responder")?,
            ))),
            ProviderKind::None => None,
        };
        Ok(Providers {
            embedder,
            proposer,
            responder,
        })
    }
}
