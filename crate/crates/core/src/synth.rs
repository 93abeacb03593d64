//! Synthetic timelines with planted cue surges.
//!
//! Every frame carries a precomputed encoding: a fixed background direction
//! orthogonal to all cue embeddings, plus small Gaussian noise. At each
//! surge time the first frame at or after it is blended towards one cue's
//! embedding (with the other cues projected out), so the pooled window score
//! for that cue jumps when the frame enters the window and falls back when
//! it leaves. With the mock embedder
//! this yields one trigger per planted surge at the default settings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::dot;
use crate::model::{Frame, Instruction, ModelError, Timeline};
use crate::providers::{Embedder, MockEmbedder, ProposerFixture, ProviderError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Spec(String),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("{0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSurge {
    pub time: f64,
    /// Index into the spec's cues.
    #[serde(default)]
    pub proposal: usize,
    /// False plants a distractor: a surge with no annotated event.
    #[serde(default = "yes")]
    pub ground_truth: bool,
    /// Keep the plant on every frame in `[time, time + hold_seconds]`.
    #[serde(default)]
    pub hold_seconds: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub id: String,
    pub duration_seconds: f64,
    pub fps: f64,
    pub issued_at: f64,
    pub instruction: String,
    pub task_tag: Option<String>,
    pub seed: u64,
    /// Standard deviation of the per-frame noise vector's norm.
    pub noise: f64,
    pub embedding_dim: usize,
    /// Must match the seed of the mock embedder used at run time.
    pub embedder_seed: u64,
    /// Mixing weight of the cue direction in a planted frame, in (0, 1].
    pub strength: f64,
    pub cues: Vec<String>,
    pub surges: Vec<PlantedSurge>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            id: "synth".into(),
            duration_seconds: 30.0,
            fps: 2.0,
            issued_at: 0.0,
            instruction: "tell me when the water boils".into(),
            task_tag: None,
            seed: 0,
            noise: 0.02,
            embedding_dim: 64,
            embedder_seed: 0,
            strength: 0.8,
            cues: vec![
                "vigorous bubbling at water surface".into(),
                "sustained steam emission from kettle".into(),
            ],
            surges: Vec::new(),
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if !(self.duration_seconds.is_finite() && self.duration_seconds > 0.0) {
            return bad(format!("duration_seconds must be positive, got {}", self.duration_seconds));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.strength > 0.0 && self.strength <= 1.0) {
            return bad(format!("strength must be in (0, 1], got {}", self.strength));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.cues.is_empty() {
            return bad("at least one cue is required".into());
        }
        if self.embedding_dim <= self.cues.len() {
            return bad("embedding_dim must exceed the number of cues".into());
        }
        for s in &self.surges {
            if s.proposal >= self.cues.len() {
                return bad(format!("surge at {} names cue {} of {}", s.time, s.proposal, self.cues.len()));
            }
            if !(s.time >= self.issued_at && s.time < self.duration_seconds) {
                return bad(format!("surge at {} lies outside the stream after the query", s.time));
            }
            if !(s.hold_seconds.is_finite() && s.hold_seconds >= 0.0) {
                return bad(format!("surge at {} has a bad hold", s.time));
            }
        }
        Ok(())
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Gram-Schmidt basis of the span of `vs`.
fn orthonormal(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let r = reject(v.clone(), &basis);
        if dot(&r, &r).sqrt() > 1e-9 {
            basis.push(unit(r));
        }
    }
    basis
}

/// Removes the components of `v` along an orthonormal `basis`.
fn reject(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Vec<f64> {
    for q in basis {
        let p = dot(&v, q);
        v.iter_mut().zip(q).for_each(|(x, y)| *x -= p * y);
    }
    v
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect()
}

/// Builds the timeline and the proposer fixture that yields its cues.
pub fn synthesize(spec: &SynthSpec) -> Result<(Timeline, ProposerFixture), SynthError> {
    spec.check()?;
    let dim = spec.embedding_dim;
    let embedder = MockEmbedder::new(spec.embedder_seed, dim);
    let cue_vecs = spec
        .cues
        .iter()
        .map(|c| embedder.embed_text(c).map(|e| e.into_values()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // the background is orthogonal to every cue so the baseline score is ~0
    let background = unit(reject(gaussian(&mut rng, dim, 1.0), &orthonormal(&cue_vecs)));
    // each plant direction is its cue with the other cues projected out, so
    // a plant moves only its own cue's score
    let targets: Vec<Vec<f64>> = (0..cue_vecs.len())
        .map(|p| {
            let others: Vec<Vec<f64>> = cue_vecs
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != p)
                .map(|(_, c)| c.clone())
                .collect();
            unit(reject(cue_vecs[p].clone(), &orthonormal(&others)))
        })
        .collect();

    let n_frames = (spec.duration_seconds * spec.fps).ceil() as usize;
    let times: Vec<f64> = (0..n_frames).map(|i| i as f64 / spec.fps).collect();
    let mut planted: Vec<Option<usize>> = vec![None; n_frames];
    for s in &spec.surges {
        let start = times.partition_point(|&t| t < s.time);
        for (i, slot) in planted.iter_mut().enumerate().skip(start) {
            if i > start && times[i] > s.time + s.hold_seconds {
                break;
            }
            *slot = Some(s.proposal);
        }
    }

    let noise_scale = spec.noise / (dim as f64).sqrt();
    let alpha = spec.strength;
    let frames = times
        .iter()
        .zip(&planted)
        .map(|(&t, plant)| {
            let base = match plant {
                Some(p) => unit(
                    background
                        .iter()
                        .zip(&targets[*p])
                        .map(|(b, e)| (1.0 - alpha) * b + alpha * e)
                        .collect(),
                ),
                None => background.clone(),
            };
            let noise = gaussian(&mut rng, dim, noise_scale);
            Frame::with_encoding(t, base.iter().zip(&noise).map(|(b, n)| b + n).collect())
        })
        .collect();

    let mut ground_truth_times: Vec<f64> = spec
        .surges
        .iter()
        .filter(|s| s.ground_truth)
        .map(|s| s.time)
        .collect();
    ground_truth_times.sort_by(f64::total_cmp);

    let timeline = Timeline {
        id: spec.id.clone(),
        instruction: Instruction::new(spec.instruction.clone(), spec.issued_at)?,
        ground_truth_times,
        task_tag: spec.task_tag.clone(),
        frames,
    };
    let fixture = ProposerFixture {
        id: spec.id.clone(),
        instruction: spec.instruction.clone(),
        proposals: spec.cues.clone(),
    };
    Ok((timeline, fixture))
}
