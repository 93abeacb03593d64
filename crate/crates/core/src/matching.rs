//! Embedding-space scoring: normalization, cosine similarity and the
//! per-tick proposal score vector.
//!
//! Dot products accumulate in ascending index order so that replayed runs
//! reproduce scores bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingVector, ProposalSet, SimilarityRecord};

/// Norms below this are treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("proposal {0} has no embedding")]
    MissingEmbedding(usize),
    #[error("previous record has {found} scores, proposal set has {expected}")]
    ScoreCount { expected: usize, found: usize },
    #[error("trace records must have strictly increasing tick times ({prev} then {next})")]
    NonMonotonicTrace { prev: f64, next: f64 },
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, MatchError> {
    let norm = v.norm();
    if norm < ZERO_NORM {
        return Err(MatchError::ZeroVector);
    }
    let values = v.values().iter().map(|x| x / norm).collect();
    Ok(EmbeddingVector::new(values).expect("scaled finite vector stays finite"))
}

/// Cosine similarity computed as the dot product of the two normalized
/// vectors, clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MatchError> {
    if a.dim() != b.dim() {
        return Err(MatchError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let a = normalize(a)?;
    let b = normalize(b)?;
    Ok(clamp_unit(dot(a.values(), b.values())))
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Index and value of the largest per-proposal increase from `previous` to
/// `current`. Ties go to the lowest index.
pub fn max_surge(previous: &[f64], current: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (p, c)) in previous.iter().zip(current).enumerate() {
        let d = c - p;
        match best {
            Some((_, b)) if d <= b => {}
            _ => best = Some((i, d)),
        }
    }
    best
}

impl SimilarityRecord {
    /// Builds a record from a score vector, differencing against the
    /// previous record when there is one.
    pub fn from_scores(
        tick_time: f64,
        scores: Vec<f64>,
        previous: Option<&SimilarityRecord>,
    ) -> Result<Self, MatchError> {
        let max_surge = match previous {
            None => None,
            Some(prev) => {
                if prev.scores.len() != scores.len() {
                    return Err(MatchError::ScoreCount {
                        expected: scores.len(),
                        found: prev.scores.len(),
                    });
                }
                max_surge(&prev.scores, &scores).map(|(_, s)| s)
            }
        };
        Ok(Self {
            tick_time,
            scores,
            max_surge,
        })
    }
}

/// Scores one segment embedding against every proposal.
pub fn score_segment(
    segment_embedding: &EmbeddingVector,
    proposals: &ProposalSet,
    tick_time: f64,
    previous: Option<&SimilarityRecord>,
) -> Result<SimilarityRecord, MatchError> {
    let segment = normalize(segment_embedding)?;
    let mut scores = Vec::with_capacity(proposals.len());
    for p in proposals.proposals() {
        let e = p
            .embedding
            .as_ref()
            .ok_or(MatchError::MissingEmbedding(p.index))?;
        if e.dim() != segment.dim() {
            return Err(MatchError::DimensionMismatch {
                expected: e.dim(),
                found: segment.dim(),
            });
        }
        // proposal embeddings are unit norm by construction
        scores.push(clamp_unit(dot(segment.values(), e.values())));
    }
    SimilarityRecord::from_scores(tick_time, scores, previous)
}

/// The score history of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreTrace {
    records: Vec<SimilarityRecord>,
}

impl ScoreTrace {
    pub fn new(records: Vec<SimilarityRecord>) -> Result<Self, MatchError> {
        let mut trace = Self::default();
        for r in records {
            trace.push(r)?;
        }
        Ok(trace)
    }

    pub fn push(&mut self, record: SimilarityRecord) -> Result<(), MatchError> {
        if let Some(last) = self.records.last() {
            if record.tick_time <= last.tick_time {
                return Err(MatchError::NonMonotonicTrace {
                    prev: last.tick_time,
                    next: record.tick_time,
                });
            }
            if record.scores.len() != last.scores.len() {
                return Err(MatchError::ScoreCount {
                    expected: last.scores.len(),
                    found: record.scores.len(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[SimilarityRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<SimilarityRecord> {
        self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Instruction;
    use proptest::prelude::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&ev(&[3.0, 4.0])).unwrap().values(), &[0.6, 0.8]);
        assert_eq!(
            normalize(&ev(&[1.0, 0.0, 0.0])).unwrap().values(),
            &[1.0, 0.0, 0.0]
        );
        assert_eq!(normalize(&ev(&[0.0, 0.0])), Err(MatchError::ZeroVector));
    }

    #[test]
    fn cosine_examples() {
        let a = ev(&[0.6, 0.8]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        // 1/sqrt(2) to 17 significant digits
        let c = cosine_similarity(&ev(&[1.0, 1.0]), &ev(&[1.0, 0.0])).unwrap();
        assert!((c - 0.7071067811865475).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&ev(&[1.0, 0.0]), &ev(&[1.0, 0.0, 0.0])),
            Err(MatchError::DimensionMismatch { .. })
        ));
        assert_eq!(
            cosine_similarity(&ev(&[0.0, 0.0]), &ev(&[1.0, 0.0])),
            Err(MatchError::ZeroVector)
        );
    }

    fn proposals(embeddings: &[&[f64]]) -> ProposalSet {
        let i = Instruction::new("q", 0.0).unwrap();
        let set = ProposalSet::from_cues(
            (0..embeddings.len()).map(|i| format!("cue {i}")),
            i,
            0.0,
        )
        .unwrap();
        set.with_embeddings(embeddings.iter().map(|e| normalize(&ev(e)).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn score_segment_identity_and_first_tick() {
        let set = proposals(&[&[0.6, 0.8], &[1.0, 0.0]]);
        let r = score_segment(&ev(&[0.6, 0.8]), &set, 2.0, None).unwrap();
        assert!((r.scores[0] - 1.0).abs() < 1e-15);
        assert_eq!(r.max_surge, None);
    }

    #[test]
    fn surge_is_elementwise_max() {
        let prev = SimilarityRecord {
            tick_time: 1.0,
            scores: vec![0.10, 0.30],
            max_surge: None,
        };
        let r = SimilarityRecord::from_scores(1.5, vec![0.18, 0.29], Some(&prev)).unwrap();
        assert!((r.max_surge.unwrap() - 0.08).abs() < 1e-12);
        assert_eq!(max_surge(&prev.scores, &r.scores).unwrap().0, 0);
    }

    #[test]
    fn surge_ties_go_to_lowest_index() {
        assert_eq!(max_surge(&[0.0, 0.0, 0.0], &[0.1, 0.1, 0.05]), Some((0, 0.1)));
    }

    #[test]
    fn score_segment_errors() {
        let i = Instruction::new("q", 0.0).unwrap();
        let bare = ProposalSet::from_cues(["a"], i, 0.0).unwrap();
        assert_eq!(
            score_segment(&ev(&[1.0, 0.0]), &bare, 0.0, None),
            Err(MatchError::MissingEmbedding(0))
        );
        let set = proposals(&[&[1.0, 0.0]]);
        assert!(matches!(
            score_segment(&ev(&[1.0, 0.0, 0.0]), &set, 0.0, None),
            Err(MatchError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn trace_rejects_out_of_order() {
        let r = |t: f64| SimilarityRecord {
            tick_time: t,
            scores: vec![0.0],
            max_surge: None,
        };
        assert!(ScoreTrace::new(vec![r(1.0), r(1.0)]).is_err());
        assert_eq!(ScoreTrace::new(vec![r(1.0), r(2.0)]).unwrap().len(), 2);
    }

    fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, dim)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(a in vector(8), b in vector(8), c in 1e-3f64..1e3) {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let lhs = cosine_similarity(&ev(&scaled), &ev(&b)).unwrap();
            let rhs = cosine_similarity(&ev(&a), &ev(&b)).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn cosine_is_symmetric(a in vector(6), b in vector(6)) {
            let ab = cosine_similarity(&ev(&a), &ev(&b)).unwrap();
            let ba = cosine_similarity(&ev(&b), &ev(&a)).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn score_segment_is_pure_and_surge_consistent(
            seg in vector(4), prev_seg in vector(4), p0 in vector(4), p1 in vector(4)
        ) {
            let set = proposals(&[&p0, &p1]);
            let prev = score_segment(&ev(&prev_seg), &set, 0.0, None).unwrap();
            let a = score_segment(&ev(&seg), &set, 0.5, Some(&prev)).unwrap();
            let b = score_segment(&ev(&seg), &set, 0.5, Some(&prev)).unwrap();
            prop_assert_eq!(&a, &b);
            let expect = a.scores.iter().zip(&prev.scores).map(|(c, p)| c - p).fold(f64::MIN, f64::max);
            prop_assert!((a.max_surge.unwrap() - expect).abs() < 1e-12);
            for (i, s) in a.scores.iter().enumerate() {
                let direct = cosine_similarity(&ev(&seg), set.proposals()[i].embedding.as_ref().unwrap()).unwrap();
                prop_assert!((s - direct).abs() < 1e-12);
            }
        }
    }
}
