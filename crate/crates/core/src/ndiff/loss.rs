use super::{Matrix, Real};
use crate::{Error, Result};

/// Mean cross-entropy of row-wise softmax against integer labels.
///
/// Returns the loss and its gradient with respect to `logits`,
/// `(softmax − onehot) / N`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(Real, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Index {
            op: "softmax_cross_entropy",
            index: bad,
            len: k,
        });
    }
    let mut grad = Matrix::zeros(n, k);
    if n == 0 {
        return Ok((0.0, grad));
    }
    let inv_n = 1.0 / n as Real;
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
        let sum: Real = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        let g = grad.row_mut(r);
        for (gj, v) in g.iter_mut().zip(row) {
            *gj = (v - log_z).exp() * inv_n;
        }
        g[label] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// Mean Huber-style loss with unit transition: `0.5d²` if `|d| < 1`,
/// else `|d| − 0.5`.
pub fn smooth_l1(pred: &Matrix, target: &Matrix) -> Result<(Real, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "smooth_l1",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    if pred.is_empty() {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / pred.len() as Real;
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        if d.abs() < 1.0 {
            loss += 0.5 * d * d;
            *g = d * inv;
        } else {
            loss += d.abs() - 0.5;
            *g = d.signum() * inv;
        }
    }
    Ok((loss * inv, grad))
}
