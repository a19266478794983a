//! Confusion matrices, per-class precision/recall/F1, support-weighted F1,
//! and the task-group average of weighted-F1 scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square count matrix; entry (i, j) counts gold class i predicted as j.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Gold-class frequency (row sum).
    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|j| self.count(class, j)).sum()
    }

    /// Predicted-class frequency (column sum).
    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.count(i, class)).sum()
    }
}

pub fn confusion(gold: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if gold.is_empty() {
        return Err(Error::usage("confusion matrix needs at least one sample"));
    }
    if gold.len() != pred.len() {
        return Err(Error::usage(format!(
            "gold and predicted label counts differ: {} vs {}",
            gold.len(),
            pred.len()
        )));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&g, &p) in gold.iter().zip(pred) {
        if g >= classes || p >= classes {
            return Err(Error::usage(format!(
                "label out of range for {classes} classes: gold {g}, pred {p}"
            )));
        }
        counts[g * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class precision, recall, and F1 = 2PR/(P+R), with the 0/0 → 0
/// convention for classes that are never predicted or never present.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.classes())
        .map(|class| {
            let tp = cm.count(class, class) as f64;
            let predicted = cm.predicted(class) as f64;
            let support = cm.support(class);
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
}

pub fn f1_report(cm: &ConfusionMatrix) -> F1Report {
    let per_class = per_class_f1(cm);
    let total = cm.total() as f64;
    let weighted_f1 = per_class
        .iter()
        .map(|m| (m.support as f64 / total) * m.f1)
        .sum();
    F1Report {
        per_class,
        weighted_f1,
    }
}

/// Support-weighted mean of per-class F1 scores.
pub fn weighted_f1(gold: &[usize], pred: &[usize], classes: usize) -> Result<f64> {
    Ok(f1_report(&confusion(gold, pred, classes)?).weighted_f1)
}

/// Arithmetic mean of a task group's weighted-F1 scores.
pub fn average_weighted_f1(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::usage(
            "average_weighted_f1 needs at least one score",
        ));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Fraction of exactly matching predictions.
pub fn accuracy(gold: &[usize], pred: &[usize]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::usage("accuracy needs at least one sample"));
    }
    if gold.len() != pred.len() {
        return Err(Error::usage(format!(
            "gold and predicted label counts differ: {} vs {}",
            gold.len(),
            pred.len()
        )));
    }
    let hits = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(hits as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Definition-level oracle: tallies pairs and applies the formulas with
    /// no shared code with the implementation above.
    fn weighted_f1_oracle(gold: &[usize], pred: &[usize], classes: usize) -> f64 {
        let mut result = 0.0;
        for c in 0..classes {
            let tp = gold
                .iter()
                .zip(pred)
                .filter(|&(&g, &p)| g == c && p == c)
                .count() as f64;
            let gold_c = gold.iter().filter(|&&g| g == c).count() as f64;
            let pred_c = pred.iter().filter(|&&p| p == c).count() as f64;
            let precision = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
            let recall = if gold_c > 0.0 { tp / gold_c } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            result += (gold_c / gold.len() as f64) * f1;
        }
        result
    }

    #[test]
    fn perfect_predictions_are_diagonal_with_unit_f1() {
        let gold = [0, 1, 2, 1, 0];
        let cm = confusion(&gold, &gold, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(cm.count(i, j), 0);
                }
            }
        }
        let report = f1_report(&cm);
        for m in &report.per_class {
            assert_eq!(m.f1, 1.0);
        }
        assert_eq!(report.weighted_f1, 1.0);
    }

    #[test]
    fn single_sample_lands_in_one_cell() {
        let cm = confusion(&[0], &[1], 2).unwrap();
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn random_case_matches_pairwise_tally() {
        let gold = [0, 2, 1, 1, 0, 2, 2, 1, 0, 0];
        let pred = [0, 1, 1, 2, 0, 2, 0, 1, 1, 0];
        let cm = confusion(&gold, &pred, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = gold
                    .iter()
                    .zip(&pred)
                    .filter(|&(&g, &p)| g == i && p == j)
                    .count() as u64;
                assert_eq!(cm.count(i, j), expected);
            }
        }
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(confusion(&[0, 2], &[0, 0], 2).is_err());
        assert!(confusion(&[], &[], 2).is_err());
    }

    #[test]
    fn absent_class_gets_zero_under_convention() {
        // Class 2 never appears in gold or predictions.
        let cm = confusion(&[0, 1], &[0, 1], 3).unwrap();
        let metrics = per_class_f1(&cm);
        assert_eq!(metrics[2].precision, 0.0);
        assert_eq!(metrics[2].recall, 0.0);
        assert_eq!(metrics[2].f1, 0.0);
        assert_eq!(metrics[2].support, 0);
    }

    #[test]
    fn hand_case_per_class_and_weighted() {
        let gold = [0, 0, 1];
        let pred = [0, 1, 1];
        let cm = confusion(&gold, &pred, 2).unwrap();
        let m = per_class_f1(&cm);
        assert_eq!(m[0].precision, 1.0);
        assert_eq!(m[0].recall, 0.5);
        assert!((m[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m[1].precision, 0.5);
        assert_eq!(m[1].recall, 1.0);
        assert!((m[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        let w = weighted_f1(&gold, &pred, 2).unwrap();
        assert!((w - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_predictor_closed_form() {
        // Everything predicted as class 0: only class 0 contributes, with
        // precision = p_0 and recall = 1.
        let gold = [0, 0, 0, 1, 1, 2];
        let pred = [0; 6];
        let p0 = 3.0 / 6.0;
        let f1_0 = 2.0 * p0 * 1.0 / (p0 + 1.0);
        let expected = p0 * f1_0;
        let w = weighted_f1(&gold, &pred, 3).unwrap();
        assert!((w - expected).abs() < 1e-15);
    }

    #[test]
    fn group_averages_match_published_aggregates() {
        let b = average_weighted_f1(&[0.8344, 0.8243, 0.5177, 0.9444]).unwrap();
        assert!((b - 0.7802).abs() < 5e-5);
        let c = average_weighted_f1(&[0.4634, 0.4429, 0.4317, 0.9444]).unwrap();
        assert!((c - 0.5706).abs() < 5e-5);
        assert_eq!(average_weighted_f1(&[0.75]).unwrap(), 0.75);
        assert!(average_weighted_f1(&[]).is_err());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 0], &[1, 2, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1], &[0, 0]).unwrap(), 0.0);
        let gold = [0, 1, 1, 0, 2];
        let pred = [0, 1, 0, 0, 1];
        let hits = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
        assert_eq!(
            accuracy(&gold, &pred).unwrap(),
            hits as f64 / gold.len() as f64
        );
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn weighted_f1_matches_definition_oracle(
            labels in proptest::collection::vec((0usize..4, 0usize..4), 1..60),
            classes in 2usize..5,
        ) {
            let gold: Vec<usize> = labels.iter().map(|(g, _)| g % classes).collect();
            let pred: Vec<usize> = labels.iter().map(|(_, p)| p % classes).collect();
            let got = weighted_f1(&gold, &pred, classes).unwrap();
            let want = weighted_f1_oracle(&gold, &pred, classes);
            prop_assert!((got - want).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn weighted_f1_invariant_under_relabeling(
            labels in proptest::collection::vec((0usize..3, 0usize..3), 1..40),
        ) {
            let gold: Vec<usize> = labels.iter().map(|(g, _)| *g).collect();
            let pred: Vec<usize> = labels.iter().map(|(_, p)| *p).collect();
            // Swap classes 0 and 2 consistently in both lists.
            let relabel = |v: usize| match v { 0 => 2, 2 => 0, other => other };
            let gold2: Vec<usize> = gold.iter().map(|&v| relabel(v)).collect();
            let pred2: Vec<usize> = pred.iter().map(|&v| relabel(v)).collect();
            let a = weighted_f1(&gold, &pred, 3).unwrap();
            let b = weighted_f1(&gold2, &pred2, 3).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
