use super::Matrix;
use crate::error::{Error, Result};

/// Lower clip applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Allowed deviation of a distribution's total mass from 1.
pub const SIMPLEX_TOL: f64 = 1e-6;

pub fn check_simplex(what: &'static str, p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    if p.is_empty() || !sum.is_finite() || (sum - 1.0).abs() > SIMPLEX_TOL || min < -SIMPLEX_TOL {
        return Err(Error::NotSimplex { what, sum, min });
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax logits"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    if !logits.is_finite() {
        return Err(Error::NonFinite("softmax logits"));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// `-Σ target · ln(max(pred, ε))`. Targets may be soft.
pub fn cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: (1, pred.len()),
            right: (1, target.len()),
        });
    }
    check_simplex("prediction", pred)?;
    check_simplex("target", target)?;
    Ok(ce_unchecked(pred, target))
}

fn ce_unchecked(pred: &[f64], target: &[f64]) -> f64 {
    -pred
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * p.max(LOG_EPS).ln())
        .sum::<f64>()
}

/// Mean cross-entropy over the rows of a batch.
pub fn batch_cross_entropy(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if probs.shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "batch_cross_entropy",
            left: probs.shape(),
            right: targets.shape(),
        });
    }
    if probs.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for (p, t) in probs.iter_rows().zip(targets.iter_rows()) {
        total += cross_entropy(p, t)?;
    }
    Ok(total / probs.rows() as f64)
}

/// Gradient of mean softmax cross-entropy with respect to the logits:
/// `(probs − targets) / batch`.
pub fn softmax_ce_grad(probs: &Matrix, targets: &Matrix) -> Result<Matrix> {
    if probs.shape() != targets.shape() {
        return Err(Error::ShapeMismatch {
            op: "softmax_ce_grad",
            left: probs.shape(),
            right: targets.shape(),
        });
    }
    let inv = 1.0 / probs.rows().max(1) as f64;
    let data = probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * inv)
        .collect();
    Matrix::from_vec(probs.rows(), probs.cols(), data)
}
