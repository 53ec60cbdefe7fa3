use alloc::vec;
use alloc::vec::Vec;

use super::{check_finite, check_len, NnError, Result};

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| libm::exp(v - m)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Row-wise softmax over a `batch × classes` matrix.
pub fn softmax_rows(z: &[f64], classes: usize) -> Vec<f64> {
    z.chunks_exact(classes).flat_map(softmax).collect()
}

/// `−ln p[label]` for a probability vector.
pub fn cross_entropy(p: &[f64], label: usize) -> Result<f64> {
    if label >= p.len() {
        return Err(NnError::BadLabel { label, classes: p.len() });
    }
    Ok(-libm::log(p[label]))
}

/// Mean cross-entropy of softmax(logits) against integer labels. Returns the
/// loss, `dL/dlogits` and the probabilities.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let batch = labels.len();
    check_len("logits", batch * classes, logits.len())?;
    check_finite("logits", logits)?;
    let probs = softmax_rows(logits, classes);
    let mut grad = probs.clone();
    let mut loss = 0.0;
    let inv = 1.0 / batch as f64;
    for (b, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(NnError::BadLabel { label: y, classes });
        }
        let row = &probs[b * classes..(b + 1) * classes];
        // log-sum-exp form keeps the loss finite for saturated rows
        let z = &logits[b * classes..(b + 1) * classes];
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + libm::log(z.iter().map(|v| libm::exp(v - m)).sum::<f64>());
        loss += lse - z[y];
        let _ = row;
        grad[b * classes + y] -= 1.0;
    }
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad, probs))
}

/// Mean squared error over all elements, and its gradient.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len("mse", pred.len(), target.len())?;
    let n = pred.len().max(1) as f64;
    let mut grad = vec![0.0; pred.len()];
    let mut loss = 0.0;
    for ((g, p), t) in grad.iter_mut().zip(pred).zip(target) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("mse"));
    }
    Ok((loss, grad))
}
