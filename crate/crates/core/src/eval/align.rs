use serde::{Deserialize, Serialize};

use super::EvalError;

/// A one-to-one pairing of trigger times with ground-truth times.
///
/// A trigger may only claim a ground-truth time at or before it, no more
/// than `tolerance` seconds earlier. Early triggers are false positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(f64, f64)>,
    pub unmatched_triggers: Vec<f64>,
    pub unmatched_ground_truth: Vec<f64>,
    pub tolerance: f64,
    /// Unmatched triggers that still fall inside some ground-truth window.
    /// Counting these as correct would let recall exceed 1.
    pub duplicate_hits: usize,
}

impl Matching {
    pub fn n_correct(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_triggers(&self) -> usize {
        self.pairs.len() + self.unmatched_triggers.len()
    }

    pub fn n_ground_truth(&self) -> usize {
        self.pairs.len() + self.unmatched_ground_truth.len()
    }
}

fn check_sorted(name: &'static str, xs: &[f64]) -> Result<(), EvalError> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(EvalError::NonFinite(name));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(EvalError::Unsorted(name));
    }
    Ok(())
}

pub(crate) fn check_tolerance(tolerance: f64) -> Result<(), EvalError> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(EvalError::BadTolerance(tolerance));
    }
    Ok(())
}

/// Greedy chronological matching: each trigger, in time order, takes the
/// earliest still-unmatched ground-truth time `g` with
/// `0 <= trigger - g <= tolerance`.
///
/// Because both window endpoints move forward with the trigger time, the
/// greedy choice also yields a maximum-cardinality matching.
pub fn match_triggers(
    triggers: &[f64],
    ground_truth: &[f64],
    tolerance: f64,
) -> Result<Matching, EvalError> {
    check_sorted("triggers", triggers)?;
    check_sorted("ground_truth", ground_truth)?;
    check_tolerance(tolerance)?;

    let mut pairs = Vec::new();
    let mut unmatched_triggers = Vec::new();
    let mut unmatched_ground_truth = Vec::new();
    let mut next = 0;
    for &t in triggers {
        // ground truth too old for this trigger is too old for every later one
        while next < ground_truth.len() && t - ground_truth[next] > tolerance {
            unmatched_ground_truth.push(ground_truth[next]);
            next += 1;
        }
        if next < ground_truth.len() && ground_truth[next] <= t {
            pairs.push((t, ground_truth[next]));
            next += 1;
        } else {
            unmatched_triggers.push(t);
        }
    }
    unmatched_ground_truth.extend_from_slice(&ground_truth[next..]);

    let duplicate_hits = unmatched_triggers
        .iter()
        .filter(|&&t| {
            ground_truth
                .iter()
                .any(|&g| t - g >= 0.0 && t - g <= tolerance)
        })
        .count();

    Ok(Matching {
        pairs,
        unmatched_triggers,
        unmatched_ground_truth,
        tolerance,
        duplicate_hits,
    })
}
