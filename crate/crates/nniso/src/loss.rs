//! Classification losses. Multi-class heads use mean softmax cross-entropy;
//! the single-output toy classifier uses binary cross-entropy on the output
//! normalized to the activation's range.

use crate::tensor::{Tensor, TensorError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{count} labels for a batch of {batch}")]
    BatchMismatch { count: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Mean softmax cross-entropy over the batch, stabilized by max-subtraction.
/// Returns the loss and `dLoss/dLogits`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), LossError> {
    let b = logits.shape()[0];
    let k = logits.shape()[1];
    if labels.len() != b {
        return Err(LossError::BatchMismatch {
            count: labels.len(),
            batch: b,
        });
    }
    let mut dlogits = Tensor::zeros(&[b, k]);
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    for i in 0..b {
        let label = labels[i];
        if label >= k {
            return Err(LossError::LabelOutOfRange { label, classes: k });
        }
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        loss += denom.ln() - (row[label] - max);
        let out = &mut dlogits.data_mut()[i * k..(i + 1) * k];
        for j in 0..k {
            let p = (row[j] - max).exp() / denom;
            let target = if j == label { 1.0 } else { 0.0 };
            out[j] = (p - target) * inv_b;
        }
    }
    Ok((loss * inv_b, dlogits))
}

/// Binary cross-entropy for a single-output head whose values live in
/// `[lo, hi]`. The output is normalized to `p` and fed to the usual
/// `-t ln p - (1-t) ln(1-p)`. When `p` lands exactly on 0 or 1 (the
/// activation output has rounded onto its asymptote) the computed loss is
/// locally constant, so the gradient there is zero — the loss can only see
/// the activation output, and a saturated output carries no signal.
pub fn binary_xent(
    outputs: &Tensor,
    labels: &[usize],
    range: (f64, f64),
) -> Result<(f64, Tensor), LossError> {
    let b = outputs.shape()[0];
    if labels.len() != b {
        return Err(LossError::BatchMismatch {
            count: labels.len(),
            batch: b,
        });
    }
    let (lo, hi) = range;
    let span = hi - lo;
    let tiny = 1e-300;
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut dout = Tensor::zeros(outputs.shape());
    for i in 0..b {
        let label = labels[i];
        if label > 1 {
            return Err(LossError::LabelOutOfRange { label, classes: 2 });
        }
        let t = label as f64;
        let p = (outputs.data()[i] - lo) / span;
        loss += -(t * p.max(tiny).ln() + (1.0 - t) * (1.0 - p).max(tiny).ln());
        dout.data_mut()[i] = if p <= 0.0 || p >= 1.0 {
            0.0
        } else {
            (p - t) / (p * (1.0 - p)) / span * inv_b
        };
    }
    Ok((loss * inv_b, dout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_loss_grad(
        logits: &Tensor,
        labels: &[usize],
        h: f64,
        f: impl Fn(&Tensor) -> f64,
    ) -> Tensor {
        let mut g = Tensor::zeros(logits.shape());
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[i] += h;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        let _ = labels;
        g
    }

    #[test]
    fn equal_logits_give_ln2() {
        let logits = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let (loss, _) = softmax_xent(&logits, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_is_cheap() {
        let logits = Tensor::from_rows(&[vec![10.0, -10.0]]).unwrap();
        let (loss, _) = softmax_xent(&logits, &[0]).unwrap();
        // ln(1 + e^-20), evaluated directly
        let expected = (1.0 + (-20.0_f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 2.061e-9).abs() < 1e-11);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits =
            Tensor::from_rows(&[vec![0.3, -0.7, 1.2], vec![-0.1, 0.4, 0.2]]).unwrap();
        let labels = [2, 0];
        let (_, grad) = softmax_xent(&logits, &labels).unwrap();
        let fd = fd_loss_grad(&logits, &labels, 1e-6, |l| {
            softmax_xent(l, &labels).unwrap().0
        });
        for (a, f) in grad.data().iter().zip(fd.data()) {
            assert!((a - f).abs() < 1e-6, "{a} vs {f}");
        }
    }

    #[test]
    fn binary_gradient_matches_finite_differences() {
        let range = (0.060, 1.005);
        let outputs = Tensor::new(vec![3, 1], vec![0.2, 0.6, 0.9]).unwrap();
        let labels = [0, 1, 1];
        let (_, grad) = binary_xent(&outputs, &labels, range).unwrap();
        let fd = fd_loss_grad(&outputs, &labels, 1e-7, |o| {
            binary_xent(o, &labels, range).unwrap().0
        });
        for (a, f) in grad.data().iter().zip(fd.data()) {
            assert!((a - f).abs() < 1e-5 * a.abs().max(1.0), "{a} vs {f}");
        }
    }

    #[test]
    fn label_out_of_range_rejected() {
        let logits = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            softmax_xent(&logits, &[2]),
            Err(LossError::LabelOutOfRange { .. })
        ));
    }
}
