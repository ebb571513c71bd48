use ndarray::{Array2, ArrayView2, Axis};

use super::params::Real;
use crate::error::{Result, ZddaError};

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Real>(logits: ArrayView2<'_, T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean negative log-likelihood and its gradient `(softmax - onehot) / n`.
pub fn softmax_cross_entropy<T: Real>(logits: ArrayView2<'_, T>, labels: &[usize]) -> Result<(T, Array2<T>)> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(ZddaError::Consistency(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(ZddaError::Consistency(format!("label {bad} out of range for {k} classes")));
    }
    if n == 0 {
        return Ok((T::zero(), Array2::zeros((0, k))));
    }
    let inv_n = T::one() / T::from_f64(n as f64);
    let mut loss = T::zero();
    let mut grad = Array2::zeros((n, k));
    for (i, (row, &label)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for (j, &v) in row.iter().enumerate() {
            grad[[i, j]] = (v - log_z).exp() * inv_n;
        }
        grad[[i, label]] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

/// `(1/n) * sum_i |a_i - b_i|^2` with gradients w.r.t. `a` and `b`.
pub fn l2_alignment_loss<T: Real>(
    a: ArrayView2<'_, T>,
    b: ArrayView2<'_, T>,
) -> Result<(T, Array2<T>, Array2<T>)> {
    if a.dim() != b.dim() {
        return Err(ZddaError::Dimension(format!(
            "l2 loss on {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok((T::zero(), a.to_owned(), b.to_owned()));
    }
    let inv_n = T::one() / T::from_f64(n as f64);
    let diff = &a - &b;
    let loss = diff.iter().map(|&d| d * d).sum::<T>() * inv_n;
    let two = T::from_f64(2.0);
    let ga = diff.mapv(|d| two * d * inv_n);
    let gb = ga.mapv(|g| -g);
    Ok((loss, ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Array2::<f64>::zeros((3, 10));
        let (loss, grad) = softmax_cross_entropy(logits.view(), &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((grad[[0, 0]] - (0.1 - 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dominant_logit_gives_vanishing_loss() {
        let logits = arr2(&[[1000.0f64, 0.0, 0.0]]);
        let (loss, _) = softmax_cross_entropy(logits.view(), &[0]).unwrap();
        assert!(loss < 1e-12);
        assert!(softmax_cross_entropy(logits.view(), &[3]).is_err());
    }

    #[test]
    fn l2_pythagorean_case() {
        let a = arr2(&[[3.0f64, 4.0]]);
        let b = arr2(&[[0.0f64, 0.0]]);
        let (loss, ga, gb) = l2_alignment_loss(a.view(), b.view()).unwrap();
        assert_eq!(loss, 25.0);
        assert_eq!(ga, arr2(&[[6.0, 8.0]]));
        assert_eq!(gb, arr2(&[[-6.0, -8.0]]));
        let (zero, g, _) = l2_alignment_loss(a.view(), a.view()).unwrap();
        assert_eq!(zero, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(l2_alignment_loss(a.view(), arr2(&[[1.0f64]]).view()).is_err());
    }
}
