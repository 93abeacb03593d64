use serde::{Deserialize, Serialize};

use super::{match_triggers, EvalError};

/// Episode reward for a trigger policy.
///
/// `r = (1 - lambda * r_fp) * n_c / n` with the false-trigger penalty
/// `r_fp = 1 - 2^(-n_fp / n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardResult {
    pub n: usize,
    pub n_c: usize,
    pub n_fp: usize,
    pub lambda: f64,
    pub r_fp: f64,
    pub r: f64,
}

/// Reward from already-counted outcomes.
pub fn reward_from_counts(n: usize, n_c: usize, n_fp: usize, lambda: f64) -> Result<RewardResult, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    if !lambda.is_finite() {
        return Err(EvalError::BadLambda(lambda));
    }
    let n_f = n as f64;
    let r_fp = 1.0 - (-(n_fp as f64) / n_f).exp2();
    let r = (1.0 - lambda * r_fp) * (n_c as f64 / n_f);
    Ok(RewardResult {
        n,
        n_c,
        n_fp,
        lambda,
        r_fp,
        r,
    })
}

/// Matches triggers one-to-one against the ground truth and scores them.
/// Unmatched triggers are the false positives.
pub fn compute_reward(
    triggers: &[f64],
    ground_truth: &[f64],
    tolerance: f64,
    lambda: f64,
) -> Result<RewardResult, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let m = match_triggers(triggers, ground_truth, tolerance)?;
    reward_from_counts(ground_truth.len(), m.n_correct(), m.unmatched_triggers.len(), lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_episode_scores_one() {
        for lambda in [0.0, 0.5, 1.0, 1.5] {
            let r = compute_reward(&[10.0, 21.0], &[10.0, 20.0], 4.0, lambda).unwrap();
            assert_eq!(r.r_fp, 0.0);
            assert_eq!(r.r, 1.0);
        }
    }

    #[test]
    fn two_of_four_with_two_false() {
        let r = reward_from_counts(4, 2, 2, 1.0).unwrap();
        // 1 - 2^-0.5 and 0.5 * 2^-0.5
        assert!((r.r_fp - 0.2928932188134524).abs() < 1e-15);
        assert!((r.r - 0.35355339059327373).abs() < 1e-15);
    }

    #[test]
    fn no_correct_triggers_scores_zero() {
        for n_fp in 0..5 {
            for lambda in [0.0, 1.0, 3.0] {
                assert_eq!(reward_from_counts(3, 0, n_fp, lambda).unwrap().r, 0.0);
            }
        }
    }

    #[test]
    fn counts_come_from_matching() {
        // 4 s window: 13.5 matches 10, 30 is false
        let r = compute_reward(&[13.5, 30.0], &[10.0, 20.0], 4.0, 1.0).unwrap();
        assert_eq!((r.n, r.n_c, r.n_fp), (2, 1, 1));
        assert_eq!(
            compute_reward(&[1.0], &[], 4.0, 1.0),
            Err(EvalError::EmptyGroundTruth)
        );
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(n in 1usize..10, n_c in 0usize..10, n_fp in 0usize..10, lambda in 0.0f64..=1.0) {
            let n_c = n_c.min(n);
            let r = reward_from_counts(n, n_c, n_fp, lambda).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.r));
            prop_assert!((0.0..1.0).contains(&r.r_fp));
            let more_fp = reward_from_counts(n, n_c, n_fp + 1, lambda).unwrap();
            prop_assert!(more_fp.r <= r.r);
            if n_c < n {
                let more_c = reward_from_counts(n, n_c + 1, n_fp, lambda).unwrap();
                prop_assert!(more_c.r >= r.r);
            }
        }
    }
}
