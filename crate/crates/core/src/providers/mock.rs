//! Deterministic in-process providers.
//!
//! Mock embeddings are seeded-hash expansions: SHA-256 over the seed, a
//! domain tag and the input bytes, stretched to the embedding dimension.
//! They need no stored fixtures and are identical across runs and platforms.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    Embedder, FrameEncoding, Proposer, ProviderCapabilities, ProviderError, Responder,
    ResponderVerdict,
};
use crate::matching::normalize;
use crate::model::{EmbeddingVector, Frame, FramePayload, Instruction, ProposalSet, TriggerEvent};

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
    frame_access: bool,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            seed,
            dim,
            frame_access: true,
        }
    }

    /// A mock without frame-level access only offers whole-segment embedding.
    pub fn with_frame_access(mut self, frame_access: bool) -> Self {
        self.frame_access = frame_access;
        self
    }

    /// Stretches `data` to `dim` values in [-1, 1).
    pub fn expand(&self, tag: &[u8], data: &[u8]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        let mut block = 0u64;
        while out.len() < self.dim {
            let digest = Sha256::new()
                .chain_update(self.seed.to_le_bytes())
                .chain_update(tag)
                .chain_update((data.len() as u64).to_le_bytes())
                .chain_update(data)
                .chain_update(block.to_le_bytes())
                .finalize();
            for chunk in digest.chunks_exact(8) {
                if out.len() == self.dim {
                    break;
                }
                let word = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
                let unit = (word >> 11) as f64 / (1u64 << 53) as f64;
                out.push(2.0 * unit - 1.0);
            }
            block += 1;
        }
        out
    }

    fn encode(&self, frame: &Frame) -> Result<FrameEncoding, ProviderError> {
        let values: Vec<f64> = match &frame.payload {
            FramePayload::Encoding(e) => {
                if e.len() != self.dim {
                    return Err(ProviderError::DimensionMismatch {
                        expected: self.dim,
                        found: e.len(),
                    });
                }
                return FrameEncoding::new(e.clone(), frame.timestamp);
            }
            FramePayload::ImageBytes(b) => self.expand(b"frame", b),
            FramePayload::ImagePath(p) => {
                let bytes = std::fs::read(p)
                    .map_err(|e| ProviderError::Io(format!("{}: {e}", p.display())))?;
                self.expand(b"frame", &bytes)
            }
        };
        FrameEncoding::new(values, frame.timestamp)
    }

    fn mean_pool(&self, encodings: &[FrameEncoding]) -> Result<EmbeddingVector, ProviderError> {
        let first = encodings.first().ok_or(ProviderError::EmptyWindow)?;
        let dim = first.dim();
        let mut sum = vec![0.0; dim];
        for e in encodings {
            if e.dim() != dim {
                return Err(ProviderError::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            for (s, v) in sum.iter_mut().zip(e.values.iter()) {
                *s += v;
            }
        }
        let n = encodings.len() as f64;
        let mean = EmbeddingVector::new(sum.into_iter().map(|s| s / n).collect())
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(normalize(&mean)?)
    }
}

impl Embedder for MockEmbedder {
    fn capabilities(&self) -> ProviderCapabilities {
        ProviderCapabilities {
            supports_frame_encoding: self.frame_access,
            embedding_dim: self.dim,
        }
    }

    fn encode_frame(&self, frame: &Frame) -> Result<FrameEncoding, ProviderError> {
        if !self.frame_access {
            return Err(ProviderError::Unsupported(
                "this embedder does not expose frame encodings".into(),
            ));
        }
        self.encode(frame)
    }

    fn pool(&self, encodings: &[FrameEncoding]) -> Result<EmbeddingVector, ProviderError> {
        self.mean_pool(encodings)
    }

    fn embed_text(&self, cue: &str) -> Result<EmbeddingVector, ProviderError> {
        if cue.trim().is_empty() {
            return Err(ProviderError::Precondition("cue must be non-empty".into()));
        }
        let v = EmbeddingVector::new(self.expand(b"text", cue.as_bytes()))
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(normalize(&v)?)
    }

    fn embed_segment(&self, frames: &[Frame]) -> Result<EmbeddingVector, ProviderError> {
        let encodings = frames
            .iter()
            .map(|f| self.encode(f))
            .collect::<Result<Vec<_>, _>>()?;
        self.mean_pool(&encodings)
    }
}

/// Canned proposals for one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposerFixture {
    pub id: String,
    pub instruction: String,
    pub proposals: Vec<String>,
}

/// Returns canned proposals looked up by instruction text.
#[derive(Debug, Clone, Default)]
pub struct MockProposer {
    fixtures: Vec<ProposerFixture>,
}

impl MockProposer {
    pub fn new(fixtures: Vec<ProposerFixture>) -> Self {
        Self { fixtures }
    }

    pub fn builtin() -> Self {
        Self::new(vec![ProposerFixture {
            id: "q1".into(),
            instruction: "tell me when the water boils".into(),
            proposals: vec![
                "vigorous bubbling at water surface".into(),
                "sustained steam emission from kettle".into(),
            ],
        }])
    }

    /// Reads a JSON array of fixtures.
    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))?;
        let fixtures = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Malformed(format!("{}: {e}", path.display())))?;
        Ok(Self::new(fixtures))
    }

    pub fn fixture(&self, id: &str) -> Option<&ProposerFixture> {
        self.fixtures.iter().find(|f| f.id == id)
    }
}

impl Proposer for MockProposer {
    fn propose(
        &self,
        instruction: &Instruction,
        _context: &[Frame],
    ) -> Result<ProposalSet, ProviderError> {
        let fixture = self
            .fixtures
            .iter()
            .find(|f| f.instruction == instruction.text)
            .ok_or_else(|| {
                ProviderError::Precondition(format!(
                    "no proposer fixture for instruction {:?}",
                    instruction.text
                ))
            })?;
        if fixture.proposals.is_empty() {
            return Err(ProviderError::EmptyProposals);
        }
        ProposalSet::from_cues(
            fixture.proposals.iter().cloned(),
            instruction.clone(),
            instruction.issued_at,
        )
        .map_err(|_| ProviderError::EmptyProposals)
    }
}

/// Accepts a trigger iff its time lies in the configured window.
#[derive(Debug, Clone, Default)]
pub struct MockResponder {
    accept_window: Option<(f64, f64)>,
}

impl MockResponder {
    pub fn new(accept_window: Option<(f64, f64)>) -> Self {
        Self { accept_window }
    }
}

impl Responder for MockResponder {
    fn respond(
        &self,
        _instruction: &Instruction,
        _recent: &[Frame],
        trigger: &TriggerEvent,
    ) -> Result<ResponderVerdict, ProviderError> {
        let accepted = match self.accept_window {
            Some((lo, hi)) => trigger.time >= lo && trigger.time <= hi,
            None => true,
        };
        let text = if accepted {
            format!(
                "event observed at {:.2}s (cue {})",
                trigger.time, trigger.best_proposal_index
            )
        } else {
            "no response warranted".to_string()
        };
        ResponderVerdict::new(text, accepted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_is_deterministic_and_passes_through() {
        let m = MockEmbedder::new(7, 16);
        let f = Frame::with_bytes(1.0, b"pixels".to_vec());
        let a = m.encode_frame(&f).unwrap();
        assert_eq!(a, m.encode_frame(&f).unwrap());
        assert_eq!(a.dim(), 16);
        assert!(a.values.iter().all(|v| (-1.0..1.0).contains(v)));

        let pre = Frame::with_encoding(2.0, (0..16).map(|i| i as f64).collect());
        let e = m.encode_frame(&pre).unwrap();
        assert_eq!(&*e.values, pre.encoding().unwrap());

        let other_seed = MockEmbedder::new(8, 16).encode_frame(&f).unwrap();
        assert_ne!(a, other_seed);
    }

    #[test]
    fn passthrough_checks_dimension() {
        let m = MockEmbedder::new(0, 4);
        let f = Frame::with_encoding(0.0, vec![1.0, 2.0]);
        assert!(matches!(
            m.encode_frame(&f),
            Err(ProviderError::DimensionMismatch { expected: 4, found: 2 })
        ));
    }

    #[test]
    fn pool_examples() {
        let m = MockEmbedder::new(0, 2);
        let enc = |v: Vec<f64>| FrameEncoding::new(v, 0.0).unwrap();
        let single = m.pool(&[enc(vec![3.0, 4.0])]).unwrap();
        assert_eq!(single.values(), &[0.6, 0.8]);
        let twice = m.pool(&[enc(vec![3.0, 4.0]), enc(vec![3.0, 4.0])]).unwrap();
        assert_eq!(twice.values(), &[0.6, 0.8]);
        let mixed = m.pool(&[enc(vec![1.0, 0.0]), enc(vec![0.0, 1.0])]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((mixed.values()[0] - h).abs() < 1e-15 && (mixed.values()[1] - h).abs() < 1e-15);
        assert_eq!(m.pool(&[]), Err(ProviderError::EmptyWindow));
        assert!(matches!(
            m.pool(&[enc(vec![1.0, 0.0]), enc(vec![1.0])]),
            Err(ProviderError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embed_text_is_unit_and_deterministic() {
        let m = MockEmbedder::new(0, 32);
        let v = m.embed_text("red kettle boiling").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert_eq!(v, m.embed_text("red kettle boiling").unwrap());
        assert!(matches!(m.embed_text(""), Err(ProviderError::Precondition(_))));
    }

    #[test]
    fn no_frame_access_still_embeds_segments() {
        let full = MockEmbedder::new(3, 8);
        let seg_only = full.clone().with_frame_access(false);
        let frames = vec![
            Frame::with_bytes(0.0, b"a".to_vec()),
            Frame::with_bytes(0.5, b"b".to_vec()),
        ];
        assert!(seg_only.encode_frame(&frames[0]).is_err());
        assert_eq!(
            seg_only.embed_segment(&frames).unwrap(),
            full.embed_segment(&frames).unwrap()
        );
        assert!(!seg_only.capabilities().supports_frame_encoding);
    }

    #[test]
    fn builtin_proposer_fixture() {
        let p = MockProposer::builtin();
        let i = Instruction::new("tell me when the water boils", 5.0).unwrap();
        let set = p.propose(&i, &[]).unwrap();
        let cues: Vec<_> = set.cues().collect();
        assert_eq!(
            cues,
            ["vigorous bubbling at water surface", "sustained steam emission from kettle"]
        );
        assert_eq!(p.fixture("q1").unwrap().proposals.len(), 2);
        let unknown = Instruction::new("something else", 0.0).unwrap();
        assert!(p.propose(&unknown, &[]).is_err());
    }

    #[test]
    fn empty_fixture_is_an_empty_proposal_error() {
        let p = MockProposer::new(vec![ProposerFixture {
            id: "e".into(),
            instruction: "q".into(),
            proposals: vec![],
        }]);
        let i = Instruction::new("q", 0.0).unwrap();
        assert_eq!(p.propose(&i, &[]), Err(ProviderError::EmptyProposals));
    }

    #[test]
    fn responder_window() {
        let r = MockResponder::new(Some((10.0, 14.0)));
        let i = Instruction::new("q", 0.0).unwrap();
        assert!(r.respond(&i, &[], &TriggerEvent::new(11.0, 0, 0.1)).unwrap().accepted);
        assert!(!r.respond(&i, &[], &TriggerEvent::new(20.0, 0, 0.1)).unwrap().accepted);
    }

    proptest! {
        #[test]
        fn mean_pool_is_permutation_invariant(
            rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..6),
            rot in 0usize..6,
        ) {
            let m = MockEmbedder::new(0, 6);
            let enc: Vec<_> = rows.iter().map(|r| FrameEncoding::new(r.clone(), 0.0).unwrap()).collect();
            let mut shuffled = enc.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            match (m.pool(&enc), m.pool(&shuffled)) {
                (Ok(a), Ok(b)) => {
                    for (x, y) in a.values().iter().zip(b.values()) {
                        prop_assert!((x - y).abs() < 1e-9);
                    }
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "pooling disagreed: {:?} vs {:?}", a, b),
            }
        }
    }
}
