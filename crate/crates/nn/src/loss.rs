//! Frame-level training criteria.

use crate::error::{NnError, Result};
use crate::matrix::Matrix;

/// Cross-entropy against one-hot frame targets, summed over frames.
///
/// `log_probs` holds log-probabilities (one row per frame). Returns the summed
/// loss `-sum_t log_probs[t][target_t]` and its gradient with respect to
/// `log_probs`, which is `-1` at each target entry and zero elsewhere.
pub fn ce_loss_sum(log_probs: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    if targets.len() != log_probs.rows() {
        return Err(NnError::Shape(format!(
            "{} targets for {} frames",
            targets.len(),
            log_probs.rows()
        )));
    }
    let classes = log_probs.cols();
    let mut grad = Matrix::zeros(log_probs.rows(), classes);
    let mut loss = 0.0;
    for (frame, &target) in targets.iter().enumerate() {
        if target >= classes {
            return Err(NnError::TargetOutOfRange {
                frame,
                index: target,
                classes,
            });
        }
        loss -= log_probs.get(frame, target);
        grad.set(frame, target, -1.0);
    }
    Ok((loss, grad))
}

/// Mean frame cross-entropy `-(1/T) sum_t log p(target_t)` and its gradient.
pub fn ce_loss(log_probs: &Matrix, targets: &[usize]) -> Result<(f64, Matrix)> {
    let (sum, mut grad) = ce_loss_sum(log_probs, targets)?;
    let t = log_probs.rows().max(1) as f64;
    grad.as_mut_slice().iter_mut().for_each(|g| *g /= t);
    Ok((sum / t, grad))
}

/// Mean squared error over all elements and its gradient.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(NnError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.as_slice().len().max(1) as f64;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ce_of_perfect_prediction_is_zero() {
        let lp = Matrix::from_rows(&[[0.0, f64::ln(1e-12)], [f64::ln(1e-12), 0.0]]).unwrap();
        let (l, _) = ce_loss(&lp, &[0, 1]).unwrap();
        assert!(l.abs() < 1e-12);
    }

    #[test]
    fn ce_of_uniform_is_log_classes() {
        let lp = Matrix::filled(3, 4, -(4f64.ln()));
        let (l, g) = ce_loss(&lp, &[0, 3, 2]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert_eq!(g.get(1, 3), -1.0 / 3.0);
        assert_eq!(g.get(1, 0), 0.0);
    }

    #[test]
    fn ce_hand_example() {
        let lp = Matrix::from_rows(&[
            [0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()],
            [0.7f64.ln(), 0.2f64.ln(), 0.1f64.ln()],
        ])
        .unwrap();
        let (l, _) = ce_loss(&lp, &[0, 1]).unwrap();
        // -(ln .7 + ln .2) / 2
        assert!((l - 0.983_056_428_186_416_4).abs() < 1e-12, "{l}");
    }

    #[test]
    fn ce_rejects_out_of_range_target() {
        let lp = Matrix::filled(2, 3, -1.0);
        assert!(matches!(
            ce_loss(&lp, &[0, 3]),
            Err(NnError::TargetOutOfRange { frame: 1, index: 3, .. })
        ));
        assert!(ce_loss(&lp, &[0]).is_err());
    }

    #[test]
    fn mse_cases() {
        let a = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        assert_eq!(mse_loss(&a, &b).unwrap().0, 1.0);
        assert!(mse_loss(&a, &Matrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn mse_matches_direct_summation() {
        let p = Matrix::from_fn(7, 3, |r, c| ((r * 3 + c) as f64 * 0.37).sin());
        let t = Matrix::from_fn(7, 3, |r, c| ((r + 5 * c) as f64 * 0.11).cos());
        let mut direct = 0.0;
        for r in 0..7 {
            for c in 0..3 {
                direct += (p.get(r, c) - t.get(r, c)).powi(2);
            }
        }
        direct /= 21.0;
        assert!((mse_loss(&p, &t).unwrap().0 - direct).abs() < 1e-12);
    }
}
