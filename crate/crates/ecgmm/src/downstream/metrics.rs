//! Scalar evaluation metrics for binary scores, class predictions and
//! regression outputs.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Fraction of scores on the correct side of 0.5 (ties count as negative).
pub fn accuracy_at_half(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Value("no samples to score".into()));
    }
    let hits = scores
        .iter()
        .zip(labels.iter())
        .filter(|(&s, &y)| (s > 0.5) == y)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Fraction of exact class matches.
pub fn multiclass_accuracy(pred: &[u32], actual: &[u32]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} targets",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Value("no samples to score".into()));
    }
    let hits = pred.iter().zip(actual.iter()).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Mean absolute error, averaged over samples and target columns.
pub fn mean_absolute_error(pred: ArrayView2<f64>, actual: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != actual.dim() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.dim(),
            actual.dim()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Value("no samples to score".into()));
    }
    Ok((&pred - &actual).mapv(f64::abs).mean().expect("nonempty"))
}

/// Area under the ROC curve via the rank statistic; tied scores receive their
/// average rank. Errors when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Value(
            "ROC-AUC is undefined with a single class".into(),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Value("non-finite score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average ranks over tied score runs (ranks are 1-based).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc =
        (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);
    Ok(auc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_separation() {
        let scores = [0.9, 0.8, 0.2, 0.1];
        let labels = [true, true, false, false];
        assert_abs_diff_eq!(accuracy_at_half(&scores, &labels).unwrap(), 1.0);
        assert_abs_diff_eq!(roc_auc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn random_scores_give_half_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() <= 0.03, "AUC {auc} outside 0.5 ± 0.03");
    }

    #[test]
    fn all_equal_scores_tie_average_to_half() {
        let scores = vec![0.5; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 4).collect();
        assert_abs_diff_eq!(roc_auc(&scores, &labels).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_class_is_an_error() {
        let scores = [0.1, 0.9];
        assert!(matches!(
            roc_auc(&scores, &[true, true]),
            Err(Error::Value(_))
        ));
        assert!(matches!(
            roc_auc(&scores, &[false, false]),
            Err(Error::Value(_))
        ));
    }

    #[test]
    fn auc_matches_pair_counting_oracle() {
        // Rank formula vs direct enumeration of (positive, negative) pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(5..40);
            // Coarse grid of score values forces plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            let n_pos = labels.iter().filter(|&&y| y).count();
            if n_pos == 0 || n_pos == n {
                continue;
            }
            let mut wins = 0.0;
            let mut total = 0.0;
            for i in 0..n {
                if !labels[i] {
                    continue;
                }
                for j in 0..n {
                    if labels[j] {
                        continue;
                    }
                    total += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
            let expected = wins / total;
            let auc = roc_auc(&scores, &labels).unwrap();
            assert_abs_diff_eq!(auc, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn mae_and_accuracy_basics() {
        let pred = array![[1.0, 2.0], [3.0, 4.0]];
        let actual = array![[1.5, 2.0], [3.0, 3.0]];
        assert_abs_diff_eq!(
            mean_absolute_error(pred.view(), actual.view()).unwrap(),
            (0.5 + 0.0 + 0.0 + 1.0) / 4.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            multiclass_accuracy(&[0, 1, 2, 1], &[0, 1, 1, 1]).unwrap(),
            0.75
        );
        assert!(matches!(
            mean_absolute_error(pred.view(), array![[0.0]].view()),
            Err(Error::Shape(_))
        ));
    }
}
