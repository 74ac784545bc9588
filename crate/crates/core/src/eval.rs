//! Metrics and experiment reports: rank-based AUC, thresholded
//! precision/recall/F1, and the structured report format.

use std::io::Write;

use crate::error::{Error, Result};

/// Rank-based (Mann-Whitney) AUC with half credit for tied positive-negative
/// pairs. Requires at least one member of each class.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::Validation("labels and scores must align".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // average ranks across ties (1-based ranks)
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Confusion counts at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Precision, recall, and F1 at `score >= threshold`. Zero-denominator
/// conventions: precision is 0 with no positive predictions; F1 is 0 when
/// P + R = 0.
pub fn prf1(labels: &[bool], scores: &[f64], threshold: f64) -> (f64, f64, f64, Counts) {
    let mut c = Counts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&l, &s) in labels.iter().zip(scores.iter()) {
        let pred = s >= threshold;
        match (l, pred) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    let precision = if c.tp + c.fp > 0 {
        c.tp as f64 / (c.tp + c.fp) as f64
    } else {
        0.0
    };
    let recall = if c.tp + c.fn_ > 0 {
        c.tp as f64 / (c.tp + c.fn_) as f64
    } else {
        0.0
    };
    let f1 = f1_from(precision, recall);
    (precision, recall, f1, c)
}

/// Harmonic mean `2PR / (P + R)`, zero when both are zero.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Full evaluation of per-instance scores against labels.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub counts: Counts,
    pub pairs: Vec<(bool, f64)>,
}

/// Score every instance once and emit the full report. The classification
/// threshold on the positive-class score defaults to 0.5 and is recorded in
/// the report because precision/recall/F1 depend on it.
pub fn evaluate(labels: &[bool], scores: &[f64], threshold: f64) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset("evaluate on empty test set".into()));
    }
    let auc = auc(labels, scores)?;
    let (precision, recall, f1, counts) = prf1(labels, scores, threshold);
    Ok(EvalReport {
        auc,
        precision,
        recall,
        f1,
        threshold,
        counts,
        pairs: labels.iter().copied().zip(scores.iter().copied()).collect(),
    })
}

impl EvalReport {
    pub fn instance_count(&self) -> usize {
        self.pairs.len()
    }

    /// Structured text: metric names with 4-decimal values, counts, and the
    /// caller's config fingerprint and seed.
    pub fn save<W: Write>(&self, mut out: W, fingerprint: &str, seed: u64) -> Result<()> {
        writeln!(out, "auc {:.4}", self.auc)?;
        writeln!(out, "precision {:.4}", self.precision)?;
        writeln!(out, "recall {:.4}", self.recall)?;
        writeln!(out, "f1 {:.4}", self.f1)?;
        writeln!(out, "threshold {}", self.threshold)?;
        writeln!(
            out,
            "counts tp {} fp {} tn {} fn {}",
            self.counts.tp, self.counts.fp, self.counts.tn, self.counts.fn_
        )?;
        writeln!(out, "instances {}", self.instance_count())?;
        writeln!(out, "config {fingerprint}")?;
        writeln!(out, "seed {seed}")?;
        Ok(())
    }

    /// Raw score dump: `label score` per line, full precision.
    pub fn save_scores<W: Write>(&self, mut out: W) -> Result<()> {
        for &(label, score) in &self.pairs {
            writeln!(out, "{} {}", u8::from(label), score)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Oracle: O(P*N) all-pairs count with half credit for ties.
    fn auc_pairs_oracle(labels: &[bool], scores: &[f64]) -> f64 {
        let mut correct = 0.0f64;
        let mut total = 0.0f64;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                total += 1.0;
                if scores[i] > scores[j] {
                    correct += 1.0;
                } else if scores[i] == scores[j] {
                    correct += 0.5;
                }
            }
        }
        correct / total
    }

    #[test]
    fn auc_perfect_ranking() {
        assert_eq!(auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
    }

    #[test]
    fn auc_hand_case() {
        let labels = [true, false, true, false];
        let scores = [0.8, 0.7, 0.6, 0.5];
        assert!((auc(&labels, &scores).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auc_all_ties_is_half() {
        let labels = [true, false, true, false, false];
        let scores = [0.5; 5];
        assert!((auc(&labels, &scores).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_single_class_is_error() {
        assert!(matches!(
            auc(&[true, true], &[0.1, 0.2]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auc_matches_pairs_oracle_with_ties() {
        let mut rng = crate::seeds::rng(13, "auc-test");
        for _ in 0..200 {
            let n = rng.random_range(2..40);
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
            if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
                continue;
            }
            // quantized scores force plenty of ties
            let scores: Vec<f64> =
                (0..n).map(|_| (rng.random::<f64>() * 5.0).round() / 5.0).collect();
            let fast = auc(&labels, &scores).unwrap();
            let slow = auc_pairs_oracle(&labels, &scores);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = crate::seeds::rng(17, "auc-mono");
        let labels: Vec<bool> = (0..30).map(|_| rng.random::<f64>() < 0.5).collect();
        let scores: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let mapped: Vec<f64> = scores.iter().map(|&s| (3.0 * s).exp()).collect();
        assert!(
            (auc(&labels, &scores).unwrap() - auc(&labels, &mapped).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn prf1_paper_row_reconstruction() {
        // published precision/recall pair reproduces the published F1
        let f1 = f1_from(0.6682, 0.7849);
        assert!((f1 - 0.7219).abs() < 0.0001, "got {f1}");
    }

    #[test]
    fn prf1_all_correct() {
        let labels = [true, false, true];
        let scores = [0.9, 0.1, 0.8];
        let (p, r, f1, c) = prf1(&labels, &scores, 0.5);
        assert_eq!((p, r, f1), (1.0, 1.0, 1.0));
        assert_eq!(c, Counts { tp: 2, fp: 0, tn: 1, fn_: 0 });
    }

    #[test]
    fn prf1_equal_p_r_gives_f1_p() {
        // 1 TP, 1 FP, 1 FN: P = R = 0.5 = F1
        let labels = [true, false, true];
        let scores = [0.9, 0.9, 0.1];
        let (p, r, f1, _) = prf1(&labels, &scores, 0.5);
        assert_eq!(p, 0.5);
        assert_eq!(r, 0.5);
        assert_eq!(f1, 0.5);
    }

    #[test]
    fn prf1_threshold_extremes() {
        let labels = [true, false, true, false];
        let scores = [0.8, 0.7, 0.6, 0.5];
        let (_, r, _, _) = prf1(&labels, &scores, 0.0);
        assert_eq!(r, 1.0);
        let (p, r, f1, _) = prf1(&labels, &scores, 2.0);
        assert_eq!((p, r, f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn evaluate_constant_predictor() {
        let labels = [true, false, false];
        let scores = [0.5; 3];
        let report = evaluate(&labels, &scores, 0.5).unwrap();
        assert_eq!(report.auc, 0.5); // all ties, half credit
        assert_eq!(report.recall, 1.0); // 0.5 >= 0.5 predicts positive
        assert_eq!(report.instance_count(), 3);
    }

    #[test]
    fn evaluate_counts_sum_to_size() {
        let labels = [true, false, true, false, true];
        let scores = [0.9, 0.8, 0.3, 0.2, 0.6];
        let r = evaluate(&labels, &scores, 0.5).unwrap();
        assert_eq!(r.counts.tp + r.counts.fp + r.counts.tn + r.counts.fn_, 5);
        let f1 = f1_from(r.precision, r.recall);
        assert_eq!(f1, r.f1);
    }
}
