use super::matrix::{DenseMatrix, Real};
use crate::error::{Error, Result};

/// Row-wise softmax with max-shift.
pub fn softmax_rows<T: Real>(logits: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = 0.0f64;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += v.as_f64();
    }
    let inv = T::from_f64_lossy(1.0 / sum);
    row.iter_mut().for_each(|v| *v = *v * inv);
}

/// `Σ p ln p` with `0 ln 0 = 0` (the negative entropy, in nats).
pub fn negative_entropy<T: Real>(probs: &[T]) -> f64 {
    probs
        .iter()
        .map(|p| p.as_f64())
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum()
}

/// Mean cross-entropy over rows and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &DenseMatrix<T>,
    labels: &[usize],
) -> Result<(T, DenseMatrix<T>)> {
    let (rows, classes) = logits.shape();
    if labels.len() != rows {
        return Err(Error::shape("labels per logit row", rows, labels.len()));
    }
    if rows == 0 {
        return Err(Error::Batch("cross-entropy over zero rows".into()));
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Label {
            row,
            label,
            classes,
        });
    }
    let inv_batch = 1.0 / rows as f64;
    let mut grad = DenseMatrix::zeros(rows, classes);
    let mut loss = 0.0f64;
    for (r, &label) in labels.iter().enumerate() {
        let z = logits.row(r);
        let max = z.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let sum: f64 = z.iter().map(|v| (v.as_f64() - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - z[label].as_f64();
        let g = grad.row_mut(r);
        for (c, gc) in g.iter_mut().enumerate() {
            let p = (z[c].as_f64() - log_norm).exp();
            let onehot = if c == label { 1.0 } else { 0.0 };
            *gc = T::from_f64_lossy((p - onehot) * inv_batch);
        }
    }
    Ok((T::from_f64_lossy(loss * inv_batch), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn symmetric_logits() {
        let logits = DenseMatrix::<f64>::from_f64_rows(&[&[0.0, 0.0]]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert_abs_diff_eq!(loss, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_eq!(grad.values(), &[-0.5, 0.5]);

        let batch = DenseMatrix::<f64>::from_f64_rows(&[&[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        let (_, grad) = softmax_cross_entropy(&batch, &[0, 0]).unwrap();
        assert_eq!(grad.row(0), &[-0.25, 0.25]);
    }

    #[test]
    fn saturated_logits_do_not_overflow() {
        let logits = DenseMatrix::<f32>::from_f64_rows(&[&[1000.0, 0.0]]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-6);
        assert!(grad.is_finite());
    }

    #[test]
    fn direct_formula() {
        let logits = DenseMatrix::<f64>::from_f64_rows(&[&[1.0, 0.0]]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        let expected = (1.0f64 + 1.0f64.exp()).ln();
        assert_abs_diff_eq!(loss, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 1.3133, epsilon = 1e-4);
    }

    #[test]
    fn out_of_range_label() {
        let logits = DenseMatrix::<f32>::zeros(2, 3);
        let err = softmax_cross_entropy(&logits, &[0, 3]).unwrap_err();
        assert!(matches!(err, Error::Label { row: 1, label: 3, classes: 3 }));
    }

    #[test]
    fn entropy_convention() {
        assert_eq!(negative_entropy(&[1.0f64, 0.0]), 0.0);
        assert_abs_diff_eq!(
            negative_entropy(&[0.5f64, 0.5]),
            -std::f64::consts::LN_2,
            epsilon = 1e-12
        );
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_loss_nonnegative(
            row in prop::collection::vec(-50.0f32..50.0, 2..12),
            label_seed in 0usize..100,
        ) {
            let k = row.len();
            let p = softmax(&row);
            let s: f64 = p.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
            let logits = DenseMatrix::from_vec(1, k, row).unwrap();
            let (loss, _) = softmax_cross_entropy(&logits, &[label_seed % k]).unwrap();
            prop_assert!(loss >= 0.0);
        }
    }
}
