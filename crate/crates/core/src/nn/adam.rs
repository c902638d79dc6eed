//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam hyperparameters; defaults are eta 0.001, beta1 0.9, beta2 0.999,
/// epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams<S> {
    pub eta: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
}

impl<S: Scalar> Default for AdamParams<S> {
    fn default() -> Self {
        AdamParams {
            eta: S::from_f(1e-3),
            beta1: S::from_f(0.9),
            beta2: S::from_f(0.999),
            epsilon: S::from_f(1e-8),
        }
    }
}

impl<S: Scalar> AdamParams<S> {
    pub fn with_eta(eta: S) -> Self {
        AdamParams { eta, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta <= S::zero() {
            return Err(Error::parameter("adam eta must be > 0"));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if beta < S::zero() || beta >= S::one() {
                return Err(Error::parameter(format!("adam {name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Slot<S> {
    m: Tensor<S>,
    v: Tensor<S>,
}

/// Optimizer state: one first/second-moment slot per parameter tensor.
///
/// Parameters must be visited in the same order every step; slots are
/// allocated on the first step. Call [`Adam::begin_step`] once per update,
/// then [`Adam::update`] for each parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub params: AdamParams<S>,
    t: u64,
    slots: Vec<Slot<S>>,
    cursor: usize,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: AdamParams<S>) -> Self {
        Adam { params, t: 0, slots: Vec::new(), cursor: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn begin_step(&mut self) {
        self.t += 1;
        self.cursor = 0;
    }

    /// Applies one Adam update to `param` in place.
    pub fn update(&mut self, param: &mut Tensor<S>, grad: &Tensor<S>) -> Result<()> {
        if param.shape() != grad.shape() {
            return Err(Error::dimension(format!(
                "adam parameter {:?} vs gradient {:?}",
                param.shape(),
                grad.shape()
            )));
        }
        if self.t == 0 {
            return Err(Error::parameter("adam update before begin_step"));
        }
        if self.cursor == self.slots.len() {
            self.slots.push(Slot { m: param.zeros_like(), v: param.zeros_like() });
        }
        let slot = &mut self.slots[self.cursor];
        self.cursor += 1;
        if slot.m.shape() != param.shape() {
            return Err(Error::dimension("adam slot shape drifted from parameter"));
        }

        let AdamParams { eta, beta1, beta2, epsilon } = self.params;
        let one = S::one();
        let t = self.t as i32;
        let bc1 = one - beta1.powi(t);
        let bc2 = one - beta2.powi(t);
        for ((p, &g), (m, v)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(slot.m.data_mut().iter_mut().zip(slot.v.data_mut().iter_mut()))
        {
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - eta * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
