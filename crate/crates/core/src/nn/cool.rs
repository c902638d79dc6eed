//! Competitive overcomplete output layer (COOL).
//!
//! Each of the `K` target classes gets `omega` member units under one joint
//! softmax, so members of a class compete with every other unit for
//! probability mass. Classification aggregates members by sum (preserving the
//! softmax mass per class); the confidence score for class `k` is the
//! `omega^omega`-scaled member product
//!
//! `conf_k = Π_j (omega · a_{k,j})`,
//!
//! which equals `s^omega` when the members share the class mass `s` equally
//! and is strictly smaller otherwise. With `omega = 1` both channels reduce
//! exactly to plain softmax.

use crate::error::{Error, Result};
use crate::nn::layers::{Dense, Layer, LayerStack, StackGrads, Trace};
use crate::nn::loss::PROB_FLOOR;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Overcomplete head: a dense layer into `classes * omega` logits under a
/// joint softmax. Member `j` of class `k` is unit `k * omega + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoolHead<S> {
    pub omega: usize,
    pub classes: usize,
    pub stack: LayerStack<S>,
}

impl<S: Scalar> CoolHead<S> {
    pub fn init(rng: &mut Rng, features: usize, classes: usize, omega: usize) -> Result<Self> {
        if omega == 0 {
            return Err(Error::parameter("omega must be >= 1"));
        }
        if classes == 0 {
            return Err(Error::parameter("classes must be >= 1"));
        }
        let dense = Dense::init(rng, features, classes * omega);
        Ok(CoolHead {
            omega,
            classes,
            stack: LayerStack::new(vec![Layer::Dense(dense), Layer::Softmax]),
        })
    }

    /// Joint-softmax member activations, `[batch, classes * omega]`.
    pub fn members(&self, features: &Tensor<S>) -> Result<Tensor<S>> {
        self.stack.forward(features)
    }

    pub fn members_traced(&self, features: &Tensor<S>) -> Result<(Tensor<S>, Trace<S>)> {
        self.stack.forward_traced(features)
    }

    /// Aggregates member activations into per-class probabilities and
    /// confidences, each `[batch, classes]`.
    pub fn aggregate(&self, members: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        let (rows, cols) = members.dims2()?;
        if cols != self.classes * self.omega {
            return Err(Error::dimension(format!(
                "expected {} member units, got {cols}",
                self.classes * self.omega
            )));
        }
        let omega_s = S::from_f(self.omega as f64);
        let mut probs = vec![S::zero(); rows * self.classes];
        let mut conf = vec![S::zero(); rows * self.classes];
        for r in 0..rows {
            let row = members.row(r);
            for k in 0..self.classes {
                let group = &row[k * self.omega..(k + 1) * self.omega];
                let mut sum = S::zero();
                let mut prod = S::one();
                for &a in group {
                    sum = sum + a;
                    prod = prod * (omega_s * a);
                }
                probs[r * self.classes + k] = sum;
                conf[r * self.classes + k] = prod;
            }
        }
        Ok((
            Tensor::new(&[rows, self.classes], probs)?,
            Tensor::new(&[rows, self.classes], conf)?,
        ))
    }

    /// Backward pass for mean cross-entropy on the summed class
    /// probabilities; returns the feature gradient and head gradients.
    pub fn backward_ce(
        &self,
        trace: &Trace<S>,
        members: &Tensor<S>,
        labels: &[usize],
    ) -> Result<(Tensor<S>, StackGrads<S>)> {
        let (rows, _) = members.dims2()?;
        if labels.len() != rows {
            return Err(Error::dimension("label count does not match batch"));
        }
        let inv_n = S::one() / S::from_f(rows as f64);
        let floor = S::from_f(PROB_FLOOR);
        // dCE/dp_k = -1/(n p_k) fans out equally to the class members.
        let mut g_members = Tensor::zeros(members.shape());
        for (r, &label) in labels.iter().enumerate() {
            if label >= self.classes {
                return Err(Error::parameter(format!(
                    "label {label} out of range for {} classes",
                    self.classes
                )));
            }
            let group = &members.row(r)[label * self.omega..(label + 1) * self.omega];
            let mut p = S::zero();
            for &a in group {
                p = p + a;
            }
            let g = -inv_n / p.max(floor);
            for j in 0..self.omega {
                *g_members.at2_mut(r, label * self.omega + j) = g;
            }
        }
        self.stack.backward(trace, &g_members)
    }

    /// Backward pass for `−log conf_k` of a single sample (attack path).
    pub fn backward_neglog_conf(
        &self,
        trace: &Trace<S>,
        members: &Tensor<S>,
        class_k: usize,
    ) -> Result<(Tensor<S>, StackGrads<S>)> {
        let (rows, _) = members.dims2()?;
        if rows != 1 {
            return Err(Error::dimension("confidence attack expects a single sample"));
        }
        if class_k >= self.classes {
            return Err(Error::parameter(format!("class {class_k} out of range")));
        }
        let floor = S::from_f(PROB_FLOOR);
        // -log conf_k = -omega log omega - sum_j log a_{k,j}
        let mut g_members = Tensor::zeros(members.shape());
        for j in 0..self.omega {
            let a = members.at2(0, class_k * self.omega + j);
            *g_members.at2_mut(0, class_k * self.omega + j) = -S::one() / a.max(floor);
        }
        self.stack.backward(trace, &g_members)
    }
}

/// Class probabilities and confidences for a batch of feature vectors.
pub fn cool_forward<S: Scalar>(
    head: &CoolHead<S>,
    features: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let members = head.members(features)?;
    head.aggregate(&members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian;

    #[test]
    fn omega_one_reduces_to_plain_softmax() {
        let mut rng = Rng::seed_from(17);
        let head = CoolHead::<f64>::init(&mut rng, 6, 4, 1).unwrap();
        let feat = gaussian(&mut rng, &[3, 6], 0.0, 1.0).unwrap();
        let (probs, conf) = cool_forward(&head, &feat).unwrap();
        let members = head.members(&feat).unwrap();
        assert_eq!(probs, members);
        assert_eq!(conf, probs);
    }

    #[test]
    fn equal_logits_two_by_two() {
        // K=2, omega=2, all four logits equal: p = [0.5, 0.5], conf = s^omega = 0.25.
        let mut head = CoolHead::<f64>::init(&mut Rng::seed_from(1), 2, 2, 2).unwrap();
        if let Layer::Dense(d) = &mut head.stack.layers[0] {
            d.w = Tensor::zeros(&[2, 4]);
            d.b = Tensor::zeros(&[4]);
        }
        let feat = Tensor::new(&[1, 2], vec![0.3, -0.7]).unwrap();
        let (probs, conf) = cool_forward(&head, &feat).unwrap();
        assert!((probs.at2(0, 0) - 0.5).abs() < 1e-12);
        assert!((probs.at2(0, 1) - 0.5).abs() < 1e-12);
        assert!((conf.at2(0, 0) - 0.25).abs() < 1e-12);
        assert!((conf.at2(0, 1) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn class_probs_sum_to_one() {
        let mut rng = Rng::seed_from(23);
        let head = CoolHead::<f64>::init(&mut rng, 5, 3, 10).unwrap();
        let feat = gaussian(&mut rng, &[4, 5], 0.0, 2.0).unwrap();
        let (probs, _) = cool_forward(&head, &feat).unwrap();
        for r in 0..4 {
            let s: f64 = probs.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn confidence_bounded_by_class_prob_power() {
        // AM-GM: conf_k <= p_k^omega, equality iff members are equal.
        let mut rng = Rng::seed_from(29);
        let head = CoolHead::<f64>::init(&mut rng, 5, 3, 4).unwrap();
        let feat = gaussian(&mut rng, &[8, 5], 0.0, 2.0).unwrap();
        let (probs, conf) = cool_forward(&head, &feat).unwrap();
        for r in 0..8 {
            for k in 0..3 {
                let p = probs.at2(r, k);
                let c = conf.at2(r, k);
                assert!(c <= p.powi(4) + 1e-12);
                assert!(c <= 1.0 + 1e-12);
            }
        }
    }
}
