//! Cross-entropy and reconstruction losses with their gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before any log.
pub const PROB_FLOOR: f64 = 1e-12;

fn clamp_prob<S: Scalar>(p: S) -> S {
    let floor = S::from_f(PROB_FLOOR);
    if p < floor {
        floor
    } else if p > S::one() {
        S::one()
    } else {
        p
    }
}

fn check_labels(labels: &[usize], rows: usize, cols: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            rows
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
        return Err(Error::parameter(format!("label {bad} out of range for {cols} classes")));
    }
    Ok(())
}

/// Mean over the batch of `−log p[label]`.
pub fn cross_entropy_indices<S: Scalar>(probs: &Tensor<S>, labels: &[usize]) -> Result<S> {
    let (rows, cols) = probs.dims2()?;
    check_labels(labels, rows, cols)?;
    let mut acc = S::zero();
    for (r, &label) in labels.iter().enumerate() {
        acc = acc - clamp_prob(probs.at2(r, label)).ln();
    }
    Ok(acc / S::from_f(rows as f64))
}

/// Mean over the batch of `−Σ target·log p`.
pub fn cross_entropy_onehot<S: Scalar>(probs: &Tensor<S>, targets: &Tensor<S>) -> Result<S> {
    if probs.shape() != targets.shape() {
        return Err(Error::dimension(format!(
            "probabilities {:?} vs targets {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    let (rows, _) = probs.dims2()?;
    let mut acc = S::zero();
    for (&p, &t) in probs.data().iter().zip(targets.data()) {
        if t != S::zero() {
            acc = acc - t * clamp_prob(p).ln();
        }
    }
    Ok(acc / S::from_f(rows as f64))
}

/// Gradient of [`cross_entropy_indices`] with respect to the probabilities.
pub fn cross_entropy_grad_indices<S: Scalar>(
    probs: &Tensor<S>,
    labels: &[usize],
) -> Result<Tensor<S>> {
    let (rows, cols) = probs.dims2()?;
    check_labels(labels, rows, cols)?;
    let inv_n = S::one() / S::from_f(rows as f64);
    let mut grad = Tensor::zeros(probs.shape());
    for (r, &label) in labels.iter().enumerate() {
        *grad.at2_mut(r, label) = -inv_n / clamp_prob(probs.at2(r, label));
    }
    Ok(grad)
}

/// Gradient of [`cross_entropy_onehot`] with respect to the probabilities.
pub fn cross_entropy_grad_onehot<S: Scalar>(
    probs: &Tensor<S>,
    targets: &Tensor<S>,
) -> Result<Tensor<S>> {
    if probs.shape() != targets.shape() {
        return Err(Error::dimension("probability/target shape mismatch"));
    }
    let (rows, _) = probs.dims2()?;
    let inv_n = S::one() / S::from_f(rows as f64);
    let data = probs
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&p, &t)| if t == S::zero() { S::zero() } else { -t * inv_n / clamp_prob(p) })
        .collect();
    Tensor::new(probs.shape(), data)
}

/// Mean over the batch of the squared Euclidean distance per sample.
pub fn mse_per_sample<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<S> {
    if pred.shape() != target.shape() {
        return Err(Error::dimension(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (rows, _) = pred.dims2()?;
    let mut acc = S::zero();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        acc = acc + d * d;
    }
    Ok(acc / S::from_f(rows as f64))
}

/// Gradient of [`mse_per_sample`] with respect to the prediction.
pub fn mse_grad<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<Tensor<S>> {
    if pred.shape() != target.shape() {
        return Err(Error::dimension("prediction/target shape mismatch"));
    }
    let (rows, _) = pred.dims2()?;
    let scale = S::from_f(2.0 / rows as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    Tensor::new(pred.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_on_correct_class_is_zero() {
        let probs = Tensor::new(&[1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let ce = cross_entropy_indices(&probs, &[1]).unwrap();
        assert_eq!(ce, 0.0);
    }

    #[test]
    fn uniform_probs_give_ln_k() {
        let probs = Tensor::new(&[1, 10], vec![0.1; 10]).unwrap();
        let ce = cross_entropy_indices(&probs, &[7]).unwrap();
        assert!((ce - 10f64.ln()).abs() < 1e-12);
        assert!((ce - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn matches_direct_sum_oracle() {
        let probs = Tensor::new(&[2, 4], vec![0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25]).unwrap();
        let labels = [3usize, 0];
        let ce = cross_entropy_indices(&probs, &labels).unwrap();
        let oracle = -(0.4f64.ln() + 0.25f64.ln()) / 2.0;
        assert!((ce - oracle).abs() < 1e-12);

        // One-hot route agrees.
        let mut onehot = Tensor::zeros(&[2, 4]);
        *onehot.at2_mut(0, 3) = 1.0;
        *onehot.at2_mut(1, 0) = 1.0;
        let ce2 = cross_entropy_onehot(&probs, &onehot).unwrap();
        assert!((ce - ce2).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let probs = Tensor::new(&[1, 3], vec![0.2, 0.3, 0.5]).unwrap();
        assert!(matches!(
            cross_entropy_indices(&probs, &[3]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn clamping_keeps_zero_probability_finite() {
        let probs = Tensor::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        let ce = cross_entropy_indices(&probs, &[0]).unwrap();
        assert!(ce.is_finite());
        assert!((ce - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn mse_is_mean_of_per_sample_squared_norm() {
        let pred = Tensor::new(&[2, 2], vec![1.0, 2.0, 0.0, 0.0]).unwrap();
        let target = Tensor::new(&[2, 2], vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let got = mse_per_sample(&pred, &target).unwrap();
        assert!((got - (5.0 + 25.0) / 2.0).abs() < 1e-15);
    }
}
