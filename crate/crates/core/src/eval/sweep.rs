use serde::{Deserialize, Serialize};

use super::{aggregate_metrics, check_tolerance, match_triggers, EvalError, Matching, MetricsReport};
use crate::engine::TriggerRule;
use crate::matching::ScoreTrace;
use crate::model::{TriggerEvent, DEFAULT_THRESHOLD};

/// Replays the surge rule over a recorded score trace. Produces the same
/// trigger times the live engine would for the same records and rule.
pub fn scan_triggers(trace: &ScoreTrace, rule: TriggerRule) -> Vec<TriggerEvent> {
    let records = trace.records();
    let mut out: Vec<TriggerEvent> = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        let previous = i.checked_sub(1).map(|j| &records[j]);
        let last = out.last().map(|e| e.time);
        if let Some((index, surge)) = rule.evaluate(previous, rec, last) {
            out.push(TriggerEvent::new(rec.tick_time, index, surge));
        }
    }
    out
}

/// One recorded episode for offline threshold scans.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEpisode {
    pub trace: ScoreTrace,
    pub ground_truth: Vec<f64>,
    pub task_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub theta: f64,
    pub report: MetricsReport,
}

/// `steps` evenly spaced thresholds over `[min, max]`, with the default
/// threshold always present.
pub fn theta_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>, EvalError> {
    if !(min.is_finite() && max.is_finite() && min <= max) || steps == 0 {
        return Err(EvalError::BadGrid(format!("min {min}, max {max}, steps {steps}")));
    }
    let mut grid: Vec<f64> = if steps == 1 {
        vec![min]
    } else {
        let step = (max - min) / (steps - 1) as f64;
        (0..steps).map(|i| min + step * i as f64).collect()
    };
    match grid.iter_mut().find(|t| (**t - DEFAULT_THRESHOLD).abs() < 1e-9) {
        Some(t) => *t = DEFAULT_THRESHOLD,
        None => grid.push(DEFAULT_THRESHOLD),
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// Re-evaluates every episode at each threshold. The grid must be
/// non-empty and ascending.
pub fn threshold_sweep(
    episodes: &[SweepEpisode],
    thetas: &[f64],
    tolerance: f64,
    cooldown_seconds: f64,
) -> Result<Vec<SweepPoint>, EvalError> {
    check_tolerance(tolerance)?;
    if thetas.is_empty() {
        return Err(EvalError::BadGrid("empty threshold grid".into()));
    }
    if thetas.iter().any(|t| t.is_nan()) || thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvalError::BadGrid("thresholds must be strictly ascending".into()));
    }
    thetas
        .iter()
        .map(|&theta| {
            let rule = TriggerRule::new(theta, cooldown_seconds);
            let matchings = episodes
                .iter()
                .map(|ep| {
                    let times: Vec<f64> = scan_triggers(&ep.trace, rule).iter().map(|e| e.time).collect();
                    match_triggers(&times, &ep.ground_truth, tolerance)
                })
                .collect::<Result<Vec<Matching>, _>>()?;
            let report = aggregate_metrics(
                episodes
                    .iter()
                    .zip(&matchings)
                    .map(|(ep, m)| (ep.task_tag.as_deref(), m)),
            );
            Ok(SweepPoint { theta, report })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimilarityRecord;

    fn trace(scores: &[f64]) -> ScoreTrace {
        let mut t = ScoreTrace::default();
        for (i, &s) in scores.iter().enumerate() {
            let prev = t.records().last().cloned();
            t.push(SimilarityRecord::from_scores(i as f64, vec![s], prev.as_ref()).unwrap())
                .unwrap();
        }
        t
    }

    #[test]
    fn scan_matches_rule() {
        let t = trace(&[0.1, 0.3, 0.31, 0.2, 0.5]);
        let times: Vec<f64> = scan_triggers(&t, TriggerRule::new(0.04, 0.0))
            .iter()
            .map(|e| e.time)
            .collect();
        assert_eq!(times, vec![1.0, 4.0]);
        assert!(scan_triggers(&t, TriggerRule::new(f64::INFINITY, 0.0)).is_empty());
    }

    #[test]
    fn grid_contains_default() {
        let g = theta_grid(0.0, 0.1, 5).unwrap();
        assert!(g.contains(&DEFAULT_THRESHOLD));
        assert_eq!(g.len(), 6);
        assert_eq!(theta_grid(0.0, 0.1, 6).unwrap().len(), 6);
        let g = theta_grid(0.0, 0.08, 3).unwrap();
        assert_eq!(g, vec![0.0, 0.04, 0.08]);
    }

    #[test]
    fn sweep_is_monotone_in_trigger_count() {
        let ep = SweepEpisode {
            trace: trace(&[0.1, 0.3, 0.31, 0.2, 0.5, 0.52, 0.9]),
            ground_truth: vec![1.0, 4.0],
            task_tag: None,
        };
        let grid = theta_grid(0.0, 0.5, 11).unwrap();
        let pts = threshold_sweep(&[ep], &grid, 2.0, 0.0).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].report.overall.n_triggers <= w[0].report.overall.n_triggers);
            assert!(w[1].report.recall() <= w[0].report.recall());
        }
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(threshold_sweep(&[], &[], 2.0, 0.0).is_err());
        assert!(threshold_sweep(&[], &[0.2, 0.1], 2.0, 0.0).is_err());
    }
}
