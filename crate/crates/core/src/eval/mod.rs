//! Dataset generators and evaluation protocols: the 2-D ring task, the
//! open-set and 1-class recognition benchmarks, and their metrics.

pub mod confmap;
pub mod metrics;
pub mod oneclass;
pub mod openset;
pub mod rings;
pub mod synth;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use confmap::{confidence_map, ConfidenceField, GridSpec};
pub use metrics::{average_rocs, f_measure, openness, roc_and_auc, RocCurve};
pub use oneclass::{one_class_campaign, one_class_run, OneClassOutcome};
pub use openset::{open_set_run, OpenSetTask, RepOutcome};
pub use rings::{annulus_distance, sample_background, sample_rings, RingSpec};
pub use synth::{synth_dataset, synth_digits, SynthSpec};

/// Train/test split with integer labels.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    pub train_x: Tensor<S>,
    pub train_y: Vec<usize>,
    pub test_x: Tensor<S>,
    pub test_y: Vec<usize>,
    pub classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn validate(&self) -> Result<()> {
        let (ntr, _) = self.train_x.dims2()?;
        let (nte, _) = self.test_x.dims2()?;
        if ntr != self.train_y.len() || nte != self.test_y.len() {
            return Err(Error::dimension("label counts do not match data"));
        }
        if self.train_y.iter().chain(&self.test_y).any(|&l| l >= self.classes) {
            return Err(Error::parameter("label out of range"));
        }
        Ok(())
    }

    /// Row indices of training samples whose label passes the filter.
    pub fn train_indices_with(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.train_y
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| keep(l).then_some(i))
            .collect()
    }
}
