use super::{softmax, NnError};

/// Cross-entropy of `softmax(logits)` against `true_class`, with its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], true_class: usize) -> Result<(f64, Vec<f64>), NnError> {
    if true_class >= logits.len() {
        return Err(NnError::IndexOutOfRange {
            index: true_class,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - logits[true_class];
    let mut grad = softmax(logits);
    grad[true_class] -= 1.0;
    Ok((loss, grad))
}
