//! Domain types shared by the engine, the providers and the evaluator.
//!
//! Everything here is immutable once constructed. Times are real-valued
//! seconds measured from the start of the stream.

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the unit norm of a proposal embedding.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("instruction text is empty")]
    EmptyInstruction,
    #[error("timestamp {0} is negative or not finite")]
    BadTimestamp(f64),
    #[error("proposal cue is empty")]
    EmptyCue,
    #[error("proposal set is empty")]
    EmptyProposalSet,
    #[error("proposal indices must be contiguous from 0, found {found} at position {position}")]
    ProposalIndex { position: usize, found: usize },
    #[error("embedding norm {0} is not within tolerance of 1")]
    NotUnitNorm(f64),
    #[error("embedding must be non-empty and finite")]
    BadEmbedding,
    #[error("invalid engine config: {0}")]
    Config(String),
}

/// The human-language query and the stream time it was issued at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub text: String,
    pub issued_at: f64,
}

impl Instruction {
    pub fn new(text: impl Into<String>, issued_at: f64) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyInstruction);
        }
        if !(issued_at.is_finite() && issued_at >= 0.0) {
            return Err(ModelError::BadTimestamp(issued_at));
        }
        Ok(Self { text, issued_at })
    }
}

/// A dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::BadEmbedding);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Euclidean norm, accumulated in index order.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc + v * v).sqrt()
    }
}

/// What a frame carries: raw image data, or an encoding computed upstream.
#[derive(Debug, Clone, PartialEq)]
pub enum FramePayload {
    ImagePath(PathBuf),
    ImageBytes(Arc<[u8]>),
    Encoding(Arc<[f64]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameWire", into = "FrameWire")]
pub struct Frame {
    pub timestamp: f64,
    pub payload: FramePayload,
}

impl Frame {
    pub fn with_encoding(timestamp: f64, encoding: Vec<f64>) -> Self {
        Self {
            timestamp,
            payload: FramePayload::Encoding(encoding.into()),
        }
    }

    pub fn with_bytes(timestamp: f64, bytes: impl Into<Arc<[u8]>>) -> Self {
        Self {
            timestamp,
            payload: FramePayload::ImageBytes(bytes.into()),
        }
    }

    pub fn with_image_path(timestamp: f64, path: impl Into<PathBuf>) -> Self {
        Self {
            timestamp,
            payload: FramePayload::ImagePath(path.into()),
        }
    }

    pub fn encoding(&self) -> Option<&[f64]> {
        match &self.payload {
            FramePayload::Encoding(e) => Some(e),
            _ => None,
        }
    }
}

/// On-disk frame layout: exactly one of the optional fields is present.
#[derive(Serialize, Deserialize)]
struct FrameWire {
    timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoding: Option<Vec<f64>>,
}

impl TryFrom<FrameWire> for Frame {
    type Error = String;

    fn try_from(w: FrameWire) -> Result<Self, Self::Error> {
        use base64::Engine as _;
        let payload = match (w.image_path, w.image_b64, w.encoding) {
            (Some(p), None, None) => FramePayload::ImagePath(p),
            (None, Some(b), None) => FramePayload::ImageBytes(
                base64::engine::general_purpose::STANDARD
                    .decode(b)
                    .map_err(|e| format!("frame at {}: bad image_b64: {e}", w.timestamp))?
                    .into(),
            ),
            (None, None, Some(e)) => FramePayload::Encoding(e.into()),
            _ => {
                return Err(format!(
                    "frame at {}: exactly one of image_path, image_b64, encoding must be present",
                    w.timestamp
                ))
            }
        };
        Ok(Frame {
            timestamp: w.timestamp,
            payload,
        })
    }
}

impl From<Frame> for FrameWire {
    fn from(f: Frame) -> Self {
        use base64::Engine as _;
        let mut w = FrameWire {
            timestamp: f.timestamp,
            image_path: None,
            image_b64: None,
            encoding: None,
        };
        match f.payload {
            FramePayload::ImagePath(p) => w.image_path = Some(p),
            FramePayload::ImageBytes(b) => {
                w.image_b64 = Some(base64::engine::general_purpose::STANDARD.encode(b))
            }
            FramePayload::Encoding(e) => w.encoding = Some(e.to_vec()),
        }
        w
    }
}

/// One declarative visual cue. `embedding` is filled in once the text has
/// been embedded and is always unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub index: usize,
    pub cue: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
}

impl Proposal {
    pub fn new(index: usize, cue: impl Into<String>) -> Result<Self, ModelError> {
        let cue = cue.into();
        if cue.trim().is_empty() {
            return Err(ModelError::EmptyCue);
        }
        Ok(Self {
            index,
            cue,
            embedding: None,
        })
    }

    pub fn with_embedding(mut self, embedding: EmbeddingVector) -> Result<Self, ModelError> {
        let norm = embedding.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(ModelError::NotUnitNorm(norm));
        }
        self.embedding = Some(embedding);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    proposals: Vec<Proposal>,
    source_instruction: Instruction,
    created_at: f64,
}

impl ProposalSet {
    pub fn new(
        proposals: Vec<Proposal>,
        source_instruction: Instruction,
        created_at: f64,
    ) -> Result<Self, ModelError> {
        if proposals.is_empty() {
            return Err(ModelError::EmptyProposalSet);
        }
        for (position, p) in proposals.iter().enumerate() {
            if p.index != position {
                return Err(ModelError::ProposalIndex {
                    position,
                    found: p.index,
                });
            }
        }
        Ok(Self {
            proposals,
            source_instruction,
            created_at,
        })
    }

    /// Builds a set from bare cue strings, indexing them in order.
    pub fn from_cues<S: Into<String>>(
        cues: impl IntoIterator<Item = S>,
        source_instruction: Instruction,
        created_at: f64,
    ) -> Result<Self, ModelError> {
        let proposals = cues
            .into_iter()
            .enumerate()
            .map(|(i, c)| Proposal::new(i, c))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(proposals, source_instruction, created_at)
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn source_instruction(&self) -> &Instruction {
        &self.source_instruction
    }

    pub fn created_at(&self) -> f64 {
        self.created_at
    }

    pub fn cues(&self) -> impl Iterator<Item = &str> {
        self.proposals.iter().map(|p| p.cue.as_str())
    }

    /// Returns a copy with embeddings attached in proposal order.
    pub fn with_embeddings(&self, embeddings: Vec<EmbeddingVector>) -> Result<Self, ModelError> {
        if embeddings.len() != self.proposals.len() {
            return Err(ModelError::BadEmbedding);
        }
        let proposals = self
            .proposals
            .iter()
            .cloned()
            .zip(embeddings)
            .map(|(p, e)| p.with_embedding(e))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            proposals,
            source_instruction: self.source_instruction.clone(),
            created_at: self.created_at,
        })
    }

    pub fn is_embedded(&self) -> bool {
        self.proposals.iter().all(|p| p.embedding.is_some())
    }
}

/// Per-tick proposal scores. `max_surge` is absent on the first tick of a
/// session because there is no previous score vector to difference against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub tick_time: f64,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_surge: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pending,
    Accepted,
    Rejected,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pending => "pending",
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub time: f64,
    pub best_proposal_index: usize,
    pub surge: f64,
    pub verdict: Verdict,
    /// Responder failure, if verification did not complete normally.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TriggerEvent {
    pub fn new(time: f64, best_proposal_index: usize, surge: f64) -> Self {
        Self {
            time,
            best_proposal_index,
            surge,
            verdict: Verdict::Pending,
            error: None,
        }
    }
}

/// An annotated stream episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub id: String,
    pub instruction: Instruction,
    pub ground_truth_times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_tag: Option<String>,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyInstruction,
    NegativeQueryTime,
    NoFrames,
    BadFrameTime,
    NonMonotonicFrames,
    BadFramePayload,
    UnsortedGroundTruth,
    GroundTruthBeforeQuery,
    BadGroundTruthTime,
}

/// A broken timeline invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.detail)
    }
}

/// Checks every timeline invariant; an empty result means the timeline is valid.
pub fn validate_timeline(t: &Timeline) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: String, kind, detail: String| {
        out.push(Violation {
            field,
            kind,
            detail,
        })
    };

    if t.instruction.text.trim().is_empty() {
        push(
            "instruction.text".into(),
            ViolationKind::EmptyInstruction,
            "must be non-empty".into(),
        );
    }
    let t0 = t.instruction.issued_at;
    if !(t0.is_finite() && t0 >= 0.0) {
        push(
            "instruction.issued_at".into(),
            ViolationKind::NegativeQueryTime,
            format!("must be finite and >= 0, got {t0}"),
        );
    }

    if t.frames.is_empty() {
        push(
            "frames".into(),
            ViolationKind::NoFrames,
            "must be non-empty".into(),
        );
    }
    let mut prev: Option<f64> = None;
    for (i, f) in t.frames.iter().enumerate() {
        if !(f.timestamp.is_finite() && f.timestamp >= 0.0) {
            push(
                format!("frames[{i}].timestamp"),
                ViolationKind::BadFrameTime,
                format!("must be finite and >= 0, got {}", f.timestamp),
            );
        }
        if let Some(p) = prev {
            if f.timestamp <= p {
                push(
                    format!("frames[{i}].timestamp"),
                    ViolationKind::NonMonotonicFrames,
                    format!("{} does not follow {p}: frames must be strictly increasing", f.timestamp),
                );
            }
        }
        if let FramePayload::Encoding(e) = &f.payload {
            if e.is_empty() || e.iter().any(|v| !v.is_finite()) {
                push(
                    format!("frames[{i}].encoding"),
                    ViolationKind::BadFramePayload,
                    "must be non-empty and finite".into(),
                );
            }
        }
        prev = Some(f.timestamp);
    }

    for (i, g) in t.ground_truth_times.iter().enumerate() {
        if !g.is_finite() {
            push(
                format!("ground_truth_times[{i}]"),
                ViolationKind::BadGroundTruthTime,
                format!("must be finite, got {g}"),
            );
            continue;
        }
        if i > 0 && *g < t.ground_truth_times[i - 1] {
            push(
                format!("ground_truth_times[{i}]"),
                ViolationKind::UnsortedGroundTruth,
                format!("{g} is below its predecessor; must be sorted ascending"),
            );
        }
        if *g < t0 {
            push(
                format!("ground_truth_times[{i}]"),
                ViolationKind::GroundTruthBeforeQuery,
                format!("{g} precedes the query time {t0}"),
            );
        }
    }
    out
}

/// JSON has no infinities; `"inf"` and `"-inf"` stand in for them.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("expected a number, got {other:?}"))),
            },
        }
    }
}

/// Surge threshold of the reference operating point.
pub const DEFAULT_THRESHOLD: f64 = 0.04;

/// Streaming engine parameters. Defaults are the reference operating point:
/// 2 s windows sampled at 2 fps, matched at 2 Hz, 5 s of 1 fps context for
/// the proposer and a surge threshold of 0.04.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub window_seconds: f64,
    pub segment_fps: f64,
    pub process_rate_hz: f64,
    #[serde(with = "extended_float")]
    pub threshold: f64,
    pub cooldown_seconds: f64,
    pub context_seconds: f64,
    pub context_fps: f64,
    /// Moving-average width applied to scores before differencing; 1 is off.
    pub smoothing_window: usize,
    pub cache: bool,
    /// Wall-clock budget for one responder call.
    pub responder_deadline_seconds: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            window_seconds: 2.0,
            segment_fps: 2.0,
            process_rate_hz: 2.0,
            threshold: DEFAULT_THRESHOLD,
            cooldown_seconds: 0.0,
            context_seconds: 5.0,
            context_fps: 1.0,
            smoothing_window: 1,
            cache: true,
            responder_deadline_seconds: 2.0,
        }
    }
}

impl EngineConfig {
    /// Number of frames held by the sliding window.
    pub fn window_frames(&self) -> Result<usize, ModelError> {
        let n = self.window_seconds * self.segment_fps;
        let rounded = n.round();
        if !n.is_finite() || (n - rounded).abs() > 1e-9 || rounded < 2.0 {
            return Err(ModelError::Config(format!(
                "window_seconds x segment_fps must be an integer >= 2, got {n}"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("window_seconds", self.window_seconds),
            ("segment_fps", self.segment_fps),
            ("process_rate_hz", self.process_rate_hz),
            ("context_seconds", self.context_seconds),
            ("context_fps", self.context_fps),
            ("responder_deadline_seconds", self.responder_deadline_seconds),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        // +inf is a legitimate "never trigger" setting
        if self.threshold.is_nan() || self.threshold == f64::NEG_INFINITY {
            return Err(ModelError::Config(format!(
                "threshold must be a number, got {}",
                self.threshold
            )));
        }
        if !(self.cooldown_seconds.is_finite() && self.cooldown_seconds >= 0.0) {
            return Err(ModelError::Config(format!(
                "cooldown_seconds must be >= 0, got {}",
                self.cooldown_seconds
            )));
        }
        if self.smoothing_window == 0 {
            return Err(ModelError::Config("smoothing_window must be >= 1".into()));
        }
        self.window_frames().map(|_| ())
    }
}
