//! Offline evaluation: trigger/ground-truth matching, online metrics, the
//! episode reward, threshold sweeps and single-event accuracy.

mod accuracy;
mod align;
mod metrics;
mod reward;
mod sweep;

use thiserror::Error;

pub use accuracy::{degenerate_policy_check, single_event_accuracy, DegenerateReport, SingleEventEpisode};
pub use align::{match_triggers, Matching};
pub(crate) use align::check_tolerance;
pub use metrics::{aggregate_metrics, compute_metrics, Metrics, MetricsReport};
pub use reward::{compute_reward, reward_from_counts, RewardResult};
pub use sweep::{scan_triggers, theta_grid, threshold_sweep, SweepEpisode, SweepPoint};

/// Matching window for online recall/precision, in seconds.
pub const EVAL_TOLERANCE_SECONDS: f64 = 2.0;
/// Matching window used by the reward, in seconds.
pub const REWARD_TOLERANCE_SECONDS: f64 = 4.0;
pub const DEFAULT_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{0} must be sorted ascending")]
    Unsorted(&'static str),
    #[error("{0} contains a non-finite time")]
    NonFinite(&'static str),
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("reward needs at least one ground-truth event")]
    EmptyGroundTruth,
    #[error("lambda must be finite, got {0}")]
    BadLambda(f64),
    #[error("bad threshold grid: {0}")]
    BadGrid(String),
    #[error("no episodes to evaluate")]
    NoEpisodes,
}
