use crate::matching::max_surge;
use crate::model::SimilarityRecord;

/// The surge rule: fire when the largest per-proposal score increase since
/// the previous tick is strictly above `threshold`, optionally rate-limited
/// by a cooldown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerRule {
    pub threshold: f64,
    pub cooldown_seconds: f64,
}

impl TriggerRule {
    pub fn new(threshold: f64, cooldown_seconds: f64) -> Self {
        Self {
            threshold,
            cooldown_seconds,
        }
    }

    /// Returns `(best_proposal_index, surge)` when `current` fires.
    pub fn evaluate(
        &self,
        previous: Option<&SimilarityRecord>,
        current: &SimilarityRecord,
        last_trigger_time: Option<f64>,
    ) -> Option<(usize, f64)> {
        let surge = current.max_surge?;
        if surge.partial_cmp(&self.threshold) != Some(std::cmp::Ordering::Greater) {
            return None;
        }
        if self.cooldown_seconds > 0.0 {
            if let Some(last) = last_trigger_time {
                if current.tick_time - last < self.cooldown_seconds {
                    return None;
                }
            }
        }
        let index = previous
            .and_then(|p| max_surge(&p.scores, &current.scores))
            .map_or(0, |(i, _)| i);
        Some((index, surge))
    }
}
