//! 1-class recognition protocol: the open-set limit with a single training
//! class and no negative samples.
//!
//! Each per-class problem trains a fresh model on that class's training
//! samples only, scores the full test set with the model's confidence
//! channel, and reports the ROC curve with target-class samples as
//! positives. The campaign averages the ten curves vertically.

use crate::classifier::ModelFactory;
use crate::error::{Error, Result};
use crate::eval::metrics::{average_rocs, roc_and_auc, RocCurve};
use crate::eval::Dataset;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Campaign outcome over every class.
#[derive(Debug, Clone)]
pub struct OneClassOutcome {
    pub per_class: Vec<(usize, RocCurve)>,
    pub averaged: RocCurve,
}

/// Trains on `target_class` samples only and returns the test-set ROC.
pub fn one_class_run<S: Scalar>(
    factory: &ModelFactory<S>,
    data: &Dataset<S>,
    target_class: usize,
    train_limit: usize,
    rng: &mut Rng,
) -> Result<RocCurve> {
    data.validate()?;
    if target_class >= data.classes {
        return Err(Error::parameter(format!(
            "target class {target_class} out of range for {} classes",
            data.classes
        )));
    }
    let mut train_idx = data.train_indices_with(|l| l == target_class);
    if train_idx.is_empty() {
        return Err(Error::parameter("no training samples for the target class"));
    }
    rng.shuffle(&mut train_idx);
    if train_limit > 0 {
        train_idx.truncate(train_limit);
    }
    let train_x = data.train_x.gather_rows(&train_idx)?;
    let train_y = vec![target_class; train_idx.len()];
    let (model, _) = factory.train_on(&train_x, &train_y, rng)?;

    let preds = model.predict_batch(&data.test_x)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.confidence.to_f()).collect();
    let positives: Vec<bool> = data.test_y.iter().map(|&l| l == target_class).collect();
    roc_and_auc(&scores, &positives)
}

/// Runs every single-class problem with split seeds and averages the curves.
pub fn one_class_campaign<S: Scalar>(
    factory: &ModelFactory<S>,
    data: &Dataset<S>,
    train_limit: usize,
    rng: &mut Rng,
) -> Result<OneClassOutcome> {
    let mut per_class = Vec::with_capacity(data.classes);
    for class in 0..data.classes {
        let mut child = rng.split();
        let curve = one_class_run(factory, data, class, train_limit, &mut child)?;
        per_class.push((class, curve));
    }
    let averaged = average_rocs(&per_class.iter().map(|(_, c)| c.clone()).collect::<Vec<_>>())?;
    Ok(OneClassOutcome { per_class, averaged })
}
