//! Loss functions returning per-sample values plus the gradient of their mean.

use super::tensor::Tensor;
use crate::error::{config_err, Result};

/// Numerically stable log-softmax of one row of logits.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Cross-entropy of `[batch, classes]` logits against integer labels.
///
/// Returns per-sample losses and d(mean loss)/d logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Tensor)> {
    let n = logits.batch();
    let classes = logits.row_len();
    if labels.len() != n {
        return Err(config_err(format!("{} labels for batch of {n}", labels.len())));
    }
    let mut losses = Vec::with_capacity(n);
    let mut grad = Tensor::zeros(logits.shape());
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(config_err(format!("label {y} out of range for {classes} classes")));
        }
        let logp = log_softmax(logits.row(i));
        losses.push(-logp[y]);
        let g = grad.row_mut(i);
        for (gc, lp) in g.iter_mut().zip(&logp) {
            *gc = lp.exp() / n as f64;
        }
        g[y] -= 1.0 / n as f64;
    }
    Ok((losses, grad))
}

/// Squared L2 error per row of `prediction` against `target`, with the
/// gradient of the mean over rows.
pub fn squared_error(prediction: &Tensor, target: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    if prediction.shape() != target.shape() {
        return Err(config_err(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let n = prediction.batch().max(1);
    let mut losses = Vec::with_capacity(n);
    let mut grad = Tensor::zeros(prediction.shape());
    for i in 0..prediction.batch() {
        let (p, t) = (prediction.row(i), target.row(i));
        losses.push(p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum());
        for ((g, a), b) in grad.row_mut(i).iter_mut().zip(p).zip(t) {
            *g = 2.0 * (a - b) / n as f64;
        }
    }
    Ok((losses, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Tensor::zeros(&[1, 4]);
        let (l, _) = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!((l[0] - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_matches_closed_form() {
        let rows = [vec![0.3, -1.2, 2.5, 0.0], vec![-4.0, 7.5, 1.0, 1.0]];
        let logits = Tensor::from_rows(&rows).unwrap();
        let (l, g) = softmax_cross_entropy(&logits, &[1, 3]).unwrap();
        for (i, (row, y)) in rows.iter().zip([1usize, 3]).enumerate() {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            let want = -(row[y].exp() / z).ln();
            assert!((l[i] - want).abs() < 1e-10);
            for (c, v) in row.iter().enumerate() {
                let p = v.exp() / z;
                let indicator = if c == y { 1.0 } else { 0.0 };
                assert!((g.row(i)[c] - (p - indicator) / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_rows(&[vec![1000.0, -1000.0, 0.0]]).unwrap();
        let (l, g) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(l[0].is_finite() && (l[0] - 2000.0).abs() < 1e-9);
        assert!(g.is_finite());
    }

    #[test]
    fn rejects_out_of_range_label() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 3]), &[3]).is_err());
    }
}
