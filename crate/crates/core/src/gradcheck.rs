//! Central-finite-difference gradient checking.
//!
//! Used both by the test suites and by the `gradcheck` experiment command.
//! Relative error is computed as `|a−b| / max(|a|, |b|, 1e-6)`, which keeps
//! near-zero gradient pairs from blowing up the ratio.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error between an analytic and a numeric derivative.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference of `loss` along every coordinate of `x`.
pub fn numeric_grad_input<S: Scalar>(
    x: &Tensor<S>,
    h: f64,
    mut loss: impl FnMut(&Tensor<S>) -> Result<S>,
) -> Result<Tensor<S>> {
    let h_s = S::from_f(h);
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h_s;
        let plus = loss(&probe)?;
        probe.data_mut()[i] = orig - h_s;
        let minus = loss(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (h_s + h_s);
    }
    Ok(grad)
}

/// Central difference with respect to one parameter tensor reachable through
/// `ctx`; `param` selects the tensor, `loss` re-evaluates the objective.
pub fn numeric_grad_param<C, S: Scalar>(
    ctx: &mut C,
    h: f64,
    mut param: impl FnMut(&mut C) -> &mut Tensor<S>,
    mut loss: impl FnMut(&C) -> Result<S>,
) -> Result<Tensor<S>> {
    let h_s = S::from_f(h);
    let n = param(ctx).len();
    let shape = param(ctx).shape().to_vec();
    let mut grad = Tensor::zeros(&shape);
    for i in 0..n {
        let orig = param(ctx).data()[i];
        param(ctx).data_mut()[i] = orig + h_s;
        let plus = loss(ctx)?;
        param(ctx).data_mut()[i] = orig - h_s;
        let minus = loss(ctx)?;
        param(ctx).data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (h_s + h_s);
    }
    Ok(grad)
}

/// Maximum relative error between two gradient tensors.
pub fn max_rel_err<S: Scalar>(analytic: &Tensor<S>, numeric: &Tensor<S>) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_err(a.to_f(), n.to_f()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f(x) = sum x_i^2, grad = 2x.
        let x = Tensor::from_vec(vec![0.5, -1.25, 2.0]);
        let num = numeric_grad_input(&x, 1e-5, |p| {
            Ok(p.data().iter().map(|v| v * v).sum::<f64>())
        })
        .unwrap();
        let analytic = x.scale(2.0);
        assert!(max_rel_err(&analytic, &num) < 1e-9);
    }

    #[test]
    fn rel_err_handles_near_zero() {
        assert!(rel_err(0.0, 1e-12) < 1e-5);
        assert!(rel_err(1.0, 1.0001) < 2e-4);
    }
}
