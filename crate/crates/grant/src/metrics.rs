//! Ranking and error metrics: MAE, ROC-AUC (pairwise concordance with ties
//! counting one half), and average precision (step-interpolated area under
//! the precision-recall curve).

use crate::error::{Error, Result};

/// Mean absolute error over aligned prediction/target pairs.
pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no values to score".into()));
    }
    let total: f64 = preds
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p - t).abs())
        .sum();
    Ok(total / preds.len() as f64)
}

/// ROC-AUC as the probability that a random positive outscores a random
/// negative, with score ties counting one half. Computed from average ranks
/// (Mann-Whitney U), which equals the pairwise definition exactly.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scored(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Sum of average ranks (1-based) over positives, tie groups averaged.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
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
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * neg as f64))
}

/// Average precision: sum over descending score thresholds of
/// `(recall_k - recall_(k-1)) * precision_k`, with tied scores handled as a
/// single threshold group.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_scored(scores, labels)?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let p_total = pos as f64;
    let mut ap = 0.0;
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let tp_prev = tp;
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let delta_recall = (tp - tp_prev) as f64 / p_total;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += delta_recall * precision;
        i = j + 1;
    }
    Ok(ap)
}

fn check_scored(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no values to score".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_zero_when_exact() {
        assert_eq!(mae(&[1.0, -2.0], &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 3.0], &[0.0, 1.0]).unwrap(), 1.5);
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn roc_auc_known_case() {
        // 3 of 4 positive-negative pairs concordant.
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn roc_auc_ties_count_half() {
        let scores = [0.5, 0.5];
        let labels = [true, false];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn roc_auc_perfect_and_inverted() {
        let labels = [false, true];
        assert_eq!(roc_auc(&[0.1, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.1], &labels).unwrap(), 0.0);
    }

    #[test]
    fn roc_auc_degenerate_labels() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateLabels)
        ));
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[false, false]),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn average_precision_known_case() {
        // Precision at each positive: 1/1 and 2/3 -> AP = 5/6.
        let scores = [0.9, 0.8, 0.7];
        let labels = [true, false, true];
        let ap = average_precision(&scores, &labels).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn average_precision_all_positive_ranked_first() {
        let scores = [0.9, 0.8, 0.1, 0.05];
        let labels = [true, true, false, false];
        assert_eq!(average_precision(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn average_precision_needs_a_positive() {
        assert!(matches!(
            average_precision(&[0.3, 0.4], &[false, false]),
            Err(Error::DegenerateLabels)
        ));
    }

    // Brute-force oracles, used here on small randomized inputs; the
    // acceptance suite runs the same comparison at scale.
    fn roc_auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    #[test]
    fn roc_auc_matches_pairwise_on_random_ties() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.random_range(2..9);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..5) as f64) / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            let pos = labels.iter().filter(|&&l| l).count();
            if pos == 0 || pos == n {
                continue;
            }
            let got = roc_auc(&scores, &labels).unwrap();
            let want = roc_auc_pairwise(&scores, &labels);
            assert_eq!(got, want, "scores {scores:?} labels {labels:?}");
        }
    }
}
