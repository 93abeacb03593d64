use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Matching;

/// Online recall/precision over matched trigger times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub n_gt: usize,
    pub n_triggers: usize,
    pub n_correct: usize,
    #[serde(default)]
    pub duplicate_hits: usize,
}

impl Metrics {
    /// Empty ground truth with no triggers counts as perfect silence;
    /// empty ground truth with triggers has recall 1 and precision 0; no
    /// triggers against real events has precision 0.
    pub fn from_counts(n_gt: usize, n_triggers: usize, n_correct: usize, duplicate_hits: usize) -> Self {
        let (recall, precision) = match (n_gt, n_triggers) {
            (0, 0) => (1.0, 1.0),
            (0, _) => (1.0, 0.0),
            (_, 0) => (0.0, 0.0),
            _ => (
                n_correct as f64 / n_gt as f64,
                n_correct as f64 / n_triggers as f64,
            ),
        };
        let f1 = if recall > 0.0 && precision > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            recall,
            precision,
            f1,
            n_gt,
            n_triggers,
            n_correct,
            duplicate_hits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub overall: Metrics,
    #[serde(default)]
    pub per_task: BTreeMap<String, Metrics>,
}

impl MetricsReport {
    pub fn recall(&self) -> f64 {
        self.overall.recall
    }

    pub fn precision(&self) -> f64 {
        self.overall.precision
    }

    pub fn f1(&self) -> f64 {
        self.overall.f1
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    gt: usize,
    triggers: usize,
    correct: usize,
    duplicates: usize,
}

impl Tally {
    fn add(&mut self, m: &Matching) {
        self.gt += m.n_ground_truth();
        self.triggers += m.n_triggers();
        self.correct += m.n_correct();
        self.duplicates += m.duplicate_hits;
    }

    fn metrics(self) -> Metrics {
        Metrics::from_counts(self.gt, self.triggers, self.correct, self.duplicates)
    }
}

/// Metrics for a single episode.
pub fn compute_metrics(m: &Matching) -> MetricsReport {
    aggregate_metrics([(None, m)])
}

/// Pools counts over episodes (micro-average), with a breakdown per task tag.
pub fn aggregate_metrics<'a>(
    episodes: impl IntoIterator<Item = (Option<&'a str>, &'a Matching)>,
) -> MetricsReport {
    let mut overall = Tally::default();
    let mut per_task: BTreeMap<String, Tally> = BTreeMap::new();
    for (tag, m) in episodes {
        overall.add(m);
        if let Some(tag) = tag {
            per_task.entry(tag.to_string()).or_default().add(m);
        }
    }
    MetricsReport {
        overall: overall.metrics(),
        per_task: per_task.into_iter().map(|(k, v)| (k, v.metrics())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::match_triggers;

    #[test]
    fn half_and_half() {
        let m = match_triggers(&[10.5, 25.0], &[10.0, 20.0], 2.0).unwrap();
        let r = compute_metrics(&m);
        assert_eq!((r.recall(), r.precision(), r.f1()), (0.5, 0.5, 0.5));
    }

    #[test]
    fn perfect_run() {
        let m = match_triggers(&[10.0, 20.5], &[10.0, 20.0], 2.0).unwrap();
        let r = compute_metrics(&m);
        assert_eq!((r.recall(), r.precision(), r.f1()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn edge_conventions() {
        let silent = Metrics::from_counts(0, 0, 0, 0);
        assert_eq!((silent.recall, silent.precision, silent.f1), (1.0, 1.0, 1.0));
        let chatty = Metrics::from_counts(0, 3, 0, 0);
        assert_eq!((chatty.recall, chatty.precision, chatty.f1), (1.0, 0.0, 0.0));
        let mute = Metrics::from_counts(3, 0, 0, 0);
        assert_eq!((mute.recall, mute.precision, mute.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn per_task_breakdown() {
        let a = match_triggers(&[1.0], &[1.0], 2.0).unwrap();
        let b = match_triggers(&[9.0], &[1.0], 2.0).unwrap();
        let r = aggregate_metrics([(Some("SSR"), &a), (Some("CRR"), &b), (None, &a)]);
        assert_eq!(r.overall.n_gt, 3);
        assert_eq!(r.overall.n_correct, 2);
        assert_eq!(r.per_task["SSR"].f1, 1.0);
        assert_eq!(r.per_task["CRR"].f1, 0.0);
    }

    #[test]
    fn json_layout() {
        let r = compute_metrics(&match_triggers(&[1.0], &[1.0], 2.0).unwrap());
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["recall", "precision", "f1", "n_gt", "n_triggers", "n_correct", "per_task"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
    }
}
