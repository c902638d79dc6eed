//! Open-set and 1-class metrics: openness, F-measure, ROC/AUC.

use crate::error::{Error, Result};

/// `1 − sqrt(training/total)` — larger means more unknown classes at test time.
pub fn openness(num_training_classes: usize, num_total_classes: usize) -> Result<f64> {
    if num_training_classes == 0 {
        return Err(Error::parameter("need at least one training class"));
    }
    if num_training_classes > num_total_classes {
        return Err(Error::parameter(format!(
            "{num_training_classes} training classes exceed {num_total_classes} total"
        )));
    }
    Ok(1.0 - (num_training_classes as f64 / num_total_classes as f64).sqrt())
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision == 0.0 && recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// ROC curve as (fpr, tpr) points swept from the highest score down, with
/// tied scores grouped at a single threshold, plus the trapezoidal AUC.
/// The trapezoid over grouped ties makes the AUC equal the pair-counting
/// probability `P(score⁺ > score⁻) + ½·P(tie)` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over the unique scores.
pub fn roc_and_auc(scores: &[f64], is_positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != is_positive.len() {
        return Err(Error::dimension("scores and labels differ in length"));
    }
    let pos = is_positive.iter().filter(|&&p| p).count();
    let neg = is_positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::parameter("ROC needs at least one positive and one negative"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::parameter("NaN score"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("no NaN"));

    let (pos_f, neg_f) = (pos as f64, neg as f64);
    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_fpr, mut prev_tpr) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        // Group every sample sharing this score at one threshold.
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if is_positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (fpr, tpr) = (fp as f64 / neg_f, tp as f64 / pos_f);
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        points.push((fpr, tpr));
        (prev_fpr, prev_tpr) = (fpr, tpr);
    }
    Ok(RocCurve { points, auc })
}

impl RocCurve {
    /// Upper-envelope interpolation of tpr at a query fpr.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let fpr = fpr.clamp(0.0, 1.0);
        let mut best_below = (0.0, 0.0);
        for window in self.points.windows(2) {
            let (x0, y0) = window[0];
            let (x1, y1) = window[1];
            if x0 <= fpr && fpr <= x1 {
                if x1 == x0 {
                    // Vertical segment: take the top.
                    best_below = (fpr, y1.max(best_below.1));
                } else {
                    let y = y0 + (y1 - y0) * (fpr - x0) / (x1 - x0);
                    best_below = (fpr, y.max(best_below.1));
                }
            }
        }
        best_below.1
    }
}

/// Vertical averaging on a fixed 101-point FPR grid with linear
/// interpolation; the averaged AUC is the trapezoid over the grid.
pub fn average_rocs(curves: &[RocCurve]) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::parameter("no curves to average"));
    }
    let n = curves.len() as f64;
    let mut points = Vec::with_capacity(101);
    for step in 0..=100 {
        let fpr = step as f64 / 100.0;
        let tpr = curves.iter().map(|c| c.tpr_at(fpr)).sum::<f64>() / n;
        points.push((fpr, tpr));
    }
    let mut auc = 0.0;
    for window in points.windows(2) {
        let (x0, y0) = window[0];
        let (x1, y1) = window[1];
        auc += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Exhaustive pair-counting oracle: P(score⁺ > score⁻) + ½ P(tie).
    fn auc_pair_oracle(scores: &[f64], is_positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in is_positive.iter().enumerate() {
            if !pi {
                continue;
            }
            for (j, &pj) in is_positive.iter().enumerate() {
                if pj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn openness_closed_world_is_zero() {
        assert_eq!(openness(10, 10).unwrap(), 0.0);
    }

    #[test]
    fn openness_exact_values() {
        assert!((openness(1, 10).unwrap() - (1.0 - 0.1f64.sqrt())).abs() < 1e-15);
        assert!((openness(1, 10).unwrap() - 0.68377).abs() < 1e-5);
        assert!((openness(4, 10).unwrap() - 0.36754).abs() < 1e-5);
    }

    #[test]
    fn openness_rejects_impossible_counts() {
        assert!(openness(11, 10).is_err());
        assert!(openness(0, 10).is_err());
    }

    #[test]
    fn openness_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for t in 1..=10 {
            let o = openness(t, 10).unwrap();
            assert!(o < prev);
            prev = o;
        }
    }

    #[test]
    fn f_measure_cases() {
        assert_eq!(f_measure(0.4, 0.4), 0.4, "harmonic mean of equals");
        assert_eq!(f_measure(1.0, 0.0), 0.0);
        assert!((f_measure(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
    }

    #[test]
    fn f_measure_min_side_bound() {
        let mut rng = Rng::seed_from(8);
        for _ in 0..1000 {
            let p = rng.next_f64();
            let r = rng.next_f64();
            assert!(f_measure(p, r) <= 2.0 * p.min(r) + 1e-12);
        }
    }

    #[test]
    fn perfectly_separated_scores_have_auc_one() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        let roc = roc_and_auc(&scores, &labels).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(*roc.points.first().unwrap(), (0.0, 0.0));
        assert_eq!(*roc.points.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn single_inversion_matches_pair_counting_exactly() {
        let scores = [0.9, 0.3, 0.5, 0.1];
        let labels = [true, true, false, false];
        let roc = roc_and_auc(&scores, &labels).unwrap();
        assert_eq!(roc.auc, auc_pair_oracle(&scores, &labels));
        assert_eq!(roc.auc, 0.75);
    }

    #[test]
    fn random_scores_give_half_auc() {
        let mut rng = Rng::seed_from(9);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
        let roc = roc_and_auc(&scores, &labels).unwrap();
        assert!((roc.auc - 0.5).abs() < 0.02, "auc {}", roc.auc);
    }

    #[test]
    fn ties_get_half_credit() {
        let scores = [0.5, 0.5];
        let labels = [true, false];
        let roc = roc_and_auc(&scores, &labels).unwrap();
        assert_eq!(roc.auc, 0.5);
    }

    #[test]
    fn exhaustive_pair_equality_on_random_inputs() {
        let mut rng = Rng::seed_from(10);
        for trial in 0..50 {
            let n = 2 + rng.next_below(198);
            let quantize = trial % 2 == 0;
            let mut scores = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let s = rng.next_f64();
                scores.push(if quantize { (s * 8.0).floor() / 8.0 } else { s });
                labels.push(rng.next_f64() < 0.5);
            }
            if !labels.contains(&true) || !labels.contains(&false) {
                continue;
            }
            let roc = roc_and_auc(&scores, &labels).unwrap();
            let want = auc_pair_oracle(&scores, &labels);
            assert_eq!(roc.auc, want, "n={n} quantize={quantize}");
        }
    }

    #[test]
    fn single_class_input_is_rejected() {
        assert!(matches!(
            roc_and_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn averaging_identical_curves_preserves_the_curve() {
        let scores = [0.9, 0.6, 0.4, 0.2, 0.8];
        let labels = [true, false, true, false, true];
        let c = roc_and_auc(&scores, &labels).unwrap();
        let one = average_rocs(std::slice::from_ref(&c)).unwrap();
        let two = average_rocs(&[c.clone(), c]).unwrap();
        assert_eq!(one.points, two.points);
        assert!((one.auc - two.auc).abs() < 1e-15);
    }
}
