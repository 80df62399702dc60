use crate::error::{OmogError, Result};

pub const HITS_K: usize = 100;

/// Fraction of exact matches.
pub fn accuracy(predictions: &[u32], labels: &[u32]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(OmogError::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(OmogError::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Fraction of positives scoring strictly above the `k`-th largest negative.
pub fn hits_at_k(pos_scores: &[f64], neg_scores: &[f64], k: usize) -> Result<f64> {
    if k == 0 || neg_scores.len() < k {
        return Err(OmogError::InvalidArgument(format!(
            "Hits@{k} needs at least {k} negatives, got {}",
            neg_scores.len()
        )));
    }
    if pos_scores.is_empty() {
        return Err(OmogError::InvalidArgument("no positive pairs".into()));
    }
    if pos_scores.iter().chain(neg_scores).any(|s| s.is_nan()) {
        return Err(OmogError::NonFinite("link score".into()));
    }
    let mut neg = neg_scores.to_vec();
    neg.sort_by(|a, b| b.total_cmp(a));
    let threshold = neg[k - 1];
    let hits = pos_scores.iter().filter(|&&s| s > threshold).count();
    Ok(hits as f64 / pos_scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn hits_threshold() {
        let mut neg: Vec<f64> = (0..150).map(|i| i as f64 / 1000.0).collect();
        neg.extend(std::iter::repeat_n(0.7, 100));
        // 100th largest negative is 0.7.
        assert_eq!(hits_at_k(&[0.9, 0.5], &neg, 100).unwrap(), 0.5);
        // Ties with the threshold do not count.
        assert_eq!(hits_at_k(&[0.7], &neg, 100).unwrap(), 0.0);
        assert!(hits_at_k(&[0.9], &neg[..99], 100).is_err());
    }
}
