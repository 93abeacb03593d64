use serde::{Deserialize, Serialize};

use super::{check_tolerance, compute_metrics, match_triggers, EvalError, MetricsReport};

/// One single-event episode: the trigger times and the event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleEventEpisode {
    pub triggers: Vec<f64>,
    pub ground_truth: f64,
}

/// Fraction of episodes with at least one trigger in `(gt, gt + tolerance]`.
pub fn single_event_accuracy(episodes: &[SingleEventEpisode], tolerance: f64) -> Result<f64, EvalError> {
    check_tolerance(tolerance)?;
    if episodes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    let hits = episodes
        .iter()
        .filter(|ep| {
            ep.triggers
                .iter()
                .any(|&t| t > ep.ground_truth && t - ep.ground_truth <= tolerance)
        })
        .count();
    Ok(hits as f64 / episodes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegenerateReport {
    /// Per-tick agreement with "has the event happened yet".
    pub proxy_accuracy: f64,
    /// Online metrics when each no-to-yes flip is read as a trigger.
    pub online: MetricsReport,
    pub derived_triggers: Vec<f64>,
}

/// Scores a per-tick yes/no answer series two ways: per-tick agreement with
/// whether an event has already occurred, and the online metrics of the
/// triggers implied by its no-to-yes flips. A policy that answers "yes"
/// forever after the first event looks good on the first and bad on the
/// second.
pub fn degenerate_policy_check(
    answers: &[(f64, bool)],
    ground_truth: &[f64],
    tolerance: f64,
) -> Result<DegenerateReport, EvalError> {
    if answers.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(EvalError::Unsorted("answers"));
    }
    let first_event = ground_truth.iter().copied().fold(f64::INFINITY, f64::min);
    let agree = answers
        .iter()
        .filter(|&&(t, yes)| yes == (t >= first_event))
        .count();
    let proxy_accuracy = if answers.is_empty() {
        0.0
    } else {
        agree as f64 / answers.len() as f64
    };
    let derived_triggers: Vec<f64> = answers
        .windows(2)
        .filter(|w| !w[0].1 && w[1].1)
        .map(|w| w[1].0)
        .collect();
    let online = compute_metrics(&match_triggers(&derived_triggers, ground_truth, tolerance)?);
    Ok(DegenerateReport {
        proxy_accuracy,
        online,
        derived_triggers,
    })
}
