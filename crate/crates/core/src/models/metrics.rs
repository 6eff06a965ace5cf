use super::ModelError;

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64, ModelError> {
    if labels.len() != scores.len() {
        return Err(ModelError::ShapeMismatch { expected: labels.len(), found: scores.len() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(ModelError::SingleClass("negative"));
    }
    if neg == 0 {
        return Err(ModelError::SingleClass("positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Fraction of predictions on the correct side of 0.5.
pub fn accuracy(labels: &[bool], scores: &[f64]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels.iter().zip(scores).filter(|&(&l, &s)| (s >= 0.5) == l).count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(labels: &[bool], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn examples() {
        assert_eq!(auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[true, true, false, false], &[0.8, 0.4, 0.6, 0.2]).unwrap(), 0.75);
        assert_eq!(auc(&[true, false, true, false], &[0.3; 4]).unwrap(), 0.5);
        assert!(matches!(auc(&[true, true], &[0.1, 0.2]), Err(ModelError::SingleClass(_))));
        assert!(auc(&[], &[]).is_err());
        assert_eq!(accuracy(&[true, false, true], &[0.7, 0.2, 0.4]), 2.0 / 3.0);
    }

    proptest! {
        #[test]
        fn rank_form_equals_pair_count(data in prop::collection::vec((any::<bool>(), 0u8..6), 2..40)) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| d.1 as f64 / 5.0).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = auc(&labels, &scores).unwrap();
            prop_assert!((a - pairwise(&labels, &scores)).abs() < 1e-12);
        }
    }
}
