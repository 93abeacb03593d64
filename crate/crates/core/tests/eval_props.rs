use std::collections::HashMap;

use garde_core::engine::TriggerRule;
use garde_core::eval::{
    compute_metrics, compute_reward, match_triggers, reward_from_counts, scan_triggers, theta_grid,
    threshold_sweep, SweepEpisode,
};
use garde_core::{ScoreTrace, SimilarityRecord};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use proptest::prelude::*;

/// Maximum one-to-one matching by exhaustive search over used-ground-truth masks.
fn brute_force(triggers: &[f64], gt: &[f64], tol: f64) -> usize {
    fn go(i: usize, used: u32, t: &[f64], g: &[f64], tol: f64, memo: &mut HashMap<(usize, u32), usize>) -> usize {
        if i == t.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = go(i + 1, used, t, g, tol, memo);
        for (j, &gj) in g.iter().enumerate() {
            let d = t[i] - gj;
            if used & (1 << j) == 0 && d >= 0.0 && d <= tol {
                best = best.max(1 + go(i + 1, used | (1 << j), t, g, tol, memo));
            }
        }
        memo.insert((i, used), best);
        best
    }
    go(0, 0, triggers, gt, tol, &mut HashMap::new())
}

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    // half-second grid so window boundaries are hit exactly
    prop::collection::vec(0u32..60, 0..=max_len).prop_map(|mut v| {
        v.sort_unstable();
        v.into_iter().map(|x| x as f64 * 0.5).collect()
    })
}

/// 2^(-p/q) to within 2^-80, by bisection on m / 2^80 with exact integers.
fn exp2_neg(p: u32, q: u32) -> BigRational {
    let k = 80u32;
    let scale = BigInt::one() << k;
    let target = BigInt::one() << (k * q);
    let (mut lo, mut hi) = (BigInt::zero(), scale.clone());
    while &hi - &lo > BigInt::one() {
        let mid: BigInt = (&lo + &hi) >> 1;
        if mid.pow(q) * (BigInt::one() << p) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BigRational::new(lo, scale)
}

fn reward_oracle(n: u32, n_c: u32, n_fp: u32, lambda: BigRational) -> f64 {
    let one = BigRational::one();
    let r_fp = &one - exp2_neg(n_fp, n);
    let r = (one - lambda * r_fp) * BigRational::new(n_c.into(), n.into());
    r.to_f64().unwrap()
}

#[test]
fn reward_matches_exact_arithmetic() {
    let lambdas = [(0, 1), (1, 2), (1, 1), (3, 2)];
    for n in 1..=6u32 {
        for n_c in 0..=n {
            for n_fp in 0..=6u32 {
                for (a, b) in lambdas {
                    let lambda = a as f64 / b as f64;
                    let got = reward_from_counts(n as usize, n_c as usize, n_fp as usize, lambda).unwrap();
                    let want = reward_oracle(n, n_c, n_fp, BigRational::new(a.into(), b.into()));
                    assert!((got.r - want).abs() < 1e-12, "n={n} n_c={n_c} n_fp={n_fp} lambda={lambda}");
                }
            }
        }
    }
}

#[test]
fn reward_without_penalty_is_plain_recall() {
    let r = compute_reward(&[10.0, 11.0, 12.0, 30.0, 31.0], &[10.0, 20.0, 30.0], 4.0, 0.0).unwrap();
    assert_eq!(r.n_fp, 3);
    assert_eq!(r.r, 2.0 / 3.0);
}

fn trace_from(rows: &[Vec<f64>]) -> ScoreTrace {
    let mut t = ScoreTrace::default();
    for (i, s) in rows.iter().enumerate() {
        let prev = t.records().last().cloned();
        t.push(SimilarityRecord::from_scores(i as f64 * 0.5, s.clone(), prev.as_ref()).unwrap())
            .unwrap();
    }
    t
}

fn score_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, k), 0..40))
}

proptest! {
    #[test]
    fn greedy_matching_is_maximum(t in sorted_times(8), g in sorted_times(8), tol in prop::sample::select(vec![0.5, 1.0, 2.0, 4.0])) {
        let m = match_triggers(&t, &g, tol).unwrap();
        prop_assert_eq!(m.n_correct(), brute_force(&t, &g, tol));
        for &(ti, gi) in &m.pairs {
            prop_assert!(ti - gi >= 0.0 && ti - gi <= tol);
        }
        prop_assert_eq!(m.n_triggers(), t.len());
        prop_assert_eq!(m.n_ground_truth(), g.len());
    }

    #[test]
    fn f1_is_consistent(t in sorted_times(8), g in sorted_times(8)) {
        let r = compute_metrics(&match_triggers(&t, &g, 2.0).unwrap()).overall;
        prop_assert!((0.0..=1.0).contains(&r.recall));
        prop_assert!((0.0..=1.0).contains(&r.precision));
        let expected = if r.precision + r.recall > 0.0 {
            2.0 * r.precision * r.recall / (r.precision + r.recall)
        } else {
            0.0
        };
        prop_assert!((r.f1 - expected).abs() <= 1e-12);
    }

    #[test]
    fn scan_follows_the_surge_rule(rows in score_rows(), theta in -0.5f64..0.5) {
        let trace = trace_from(&rows);
        let got: Vec<f64> = scan_triggers(&trace, TriggerRule::new(theta, 0.0)).iter().map(|e| e.time).collect();
        let want: Vec<f64> = (1..rows.len())
            .filter(|&i| {
                rows[i].iter().zip(&rows[i - 1]).map(|(c, p)| c - p).fold(f64::NEG_INFINITY, f64::max) > theta
            })
            .map(|i| i as f64 * 0.5)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn sweep_is_monotone(rows in score_rows(), gt in sorted_times(5)) {
        let ep = SweepEpisode { trace: trace_from(&rows), ground_truth: gt, task_tag: None };
        let grid = theta_grid(-0.2, 0.6, 17).unwrap();
        let pts = threshold_sweep(&[ep], &grid, 2.0, 0.0).unwrap();
        prop_assert!(pts.iter().any(|p| p.theta == 0.04));
        for w in pts.windows(2) {
            prop_assert!(w[1].report.overall.n_triggers <= w[0].report.overall.n_triggers);
            prop_assert!(w[1].report.recall() <= w[0].report.recall());
        }
    }
}
