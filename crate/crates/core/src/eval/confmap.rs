//! Confidence fields over a regular 2-D grid, for the ring-task figures.

use crate::classifier::{JointModel, Variant};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Regular evaluation grid. Rows run bottom-up: row 0 is `y0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(lo: f64, hi: f64, n: usize) -> Self {
        GridSpec { x0: lo, x1: hi, y0: lo, y1: hi, nx: n, ny: n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.x1 <= self.x0 || self.y1 <= self.y0 {
            return Err(Error::parameter("grid bounds out of order"));
        }
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::parameter("grid needs at least 2 points per axis"));
        }
        Ok(())
    }

    pub fn x_at(&self, j: usize) -> f64 {
        self.x0 + (self.x1 - self.x0) * j as f64 / (self.nx - 1) as f64
    }

    pub fn y_at(&self, i: usize) -> f64 {
        self.y0 + (self.y1 - self.y0) * i as f64 / (self.ny - 1) as f64
    }
}

/// Scalar fields over the grid, each `[ny, nx]` in `f64`.
#[derive(Debug, Clone)]
pub struct ConfidenceField {
    pub grid: GridSpec,
    /// `exp(−alpha/D · recon_error)` alone.
    pub score_no_gate: Tensor<f64>,
    /// Curvature gate value.
    pub gate: Tensor<f64>,
    /// Full confidence score (product of the two fields).
    pub score: Tensor<f64>,
    /// Argmax class label as a real number.
    pub label: Tensor<f64>,
}

/// Evaluates the confidence score and classifier label over the grid.
///
/// Only meaningful for 2-D autoencoder-variant models.
pub fn confidence_map<S: Scalar>(
    model: &JointModel<S>,
    grid: &GridSpec,
) -> Result<ConfidenceField> {
    grid.validate()?;
    if model.spec.input_dim != 2 {
        return Err(Error::parameter(format!(
            "confidence map needs a 2-D model, input_dim is {}",
            model.spec.input_dim
        )));
    }
    if model.spec.variant != Variant::Dae {
        return Err(Error::parameter("confidence map needs the dae variant"));
    }
    let mut score_no_gate = Tensor::zeros(&[grid.ny, grid.nx]);
    let mut gate = Tensor::zeros(&[grid.ny, grid.nx]);
    let mut score = Tensor::zeros(&[grid.ny, grid.nx]);
    let mut label = Tensor::zeros(&[grid.ny, grid.nx]);
    for i in 0..grid.ny {
        for j in 0..grid.nx {
            let point =
                Tensor::new(&[1, 2], vec![S::from_f(grid.x_at(j)), S::from_f(grid.y_at(i))])?;
            let pred = model.predict_one(&point)?;
            let report = pred.report.expect("dae variant always carries a report");
            *score_no_gate.at2_mut(i, j) = report.score_no_gate.to_f();
            *gate.at2_mut(i, j) = report.gate.to_f();
            *score.at2_mut(i, j) = report.score.to_f();
            *label.at2_mut(i, j) = pred.argmax as f64;
        }
    }
    Ok(ConfidenceField { grid: grid.clone(), score_no_gate, gate, score, label })
}
