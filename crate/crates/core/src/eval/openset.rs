//! Open-set recognition protocol.
//!
//! Each repetition draws a random subset of known classes, trains a fresh
//! model on known-class samples only (all ten output units stay allocated;
//! unseen-class targets are simply never active), and evaluates on the full
//! test set with a reject rule.
//!
//! Accounting: a sample is *accepted* when its confidence exceeds the
//! threshold and its argmax is a known class; anything else is a rejection.
//! True positive: accepted known-class sample with the correct label. False
//! positive: any other acceptance (unknown-class sample, or known-class
//! sample under a wrong known label). Recall divides true positives by the
//! number of known-class test samples; precision by all acceptances.

use crate::classifier::ModelFactory;
use crate::error::{Error, Result};
use crate::eval::metrics::f_measure;
use crate::eval::Dataset;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Task description for one openness level.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetTask {
    /// Number of known classes drawn per repetition.
    pub known_count: usize,
    pub repetitions: usize,
    /// Acceptance threshold on the confidence channel.
    pub threshold: f64,
    /// Cap on the total number of training samples (0 = no cap).
    pub train_limit: usize,
    /// Fixed known set; when present it overrides the random draw.
    pub fixed_known: Option<Vec<usize>>,
}

/// One repetition's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub known: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Runs all repetitions of one open-set task with split seeds.
pub fn open_set_run<S: Scalar>(
    factory: &ModelFactory<S>,
    data: &Dataset<S>,
    task: &OpenSetTask,
    rng: &mut Rng,
) -> Result<Vec<RepOutcome>> {
    data.validate()?;
    if task.known_count == 0 || task.known_count > data.classes {
        return Err(Error::parameter(format!(
            "known_count {} outside 1..={}",
            task.known_count, data.classes
        )));
    }
    if task.repetitions == 0 {
        return Err(Error::parameter("repetitions must be >= 1"));
    }
    if !(0.0..=1.0).contains(&task.threshold) {
        return Err(Error::parameter("threshold must be in [0, 1]"));
    }
    let mut outcomes = Vec::with_capacity(task.repetitions);
    for _ in 0..task.repetitions {
        let mut child = rng.split();
        let known = match &task.fixed_known {
            Some(k) => {
                let mut k = k.clone();
                k.sort_unstable();
                k
            }
            None => {
                let mut k = child.sample_distinct(data.classes, task.known_count);
                k.sort_unstable();
                k
            }
        };
        let is_known = |label: usize| known.binary_search(&label).is_ok();

        let mut train_idx = data.train_indices_with(is_known);
        if train_idx.is_empty() {
            return Err(Error::parameter("no training samples for the known classes"));
        }
        child.shuffle(&mut train_idx);
        if task.train_limit > 0 {
            train_idx.truncate(task.train_limit);
        }
        let train_x = data.train_x.gather_rows(&train_idx)?;
        let train_y: Vec<usize> = train_idx.iter().map(|&i| data.train_y[i]).collect();
        let (model, _) = factory.train_on(&train_x, &train_y, &mut child)?;

        let preds = model.predict_batch(&data.test_x)?;
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut known_total = 0usize;
        for (pred, &label) in preds.iter().zip(&data.test_y) {
            if is_known(label) {
                known_total += 1;
            }
            let accepted = pred.confidence.to_f() > task.threshold && is_known(pred.argmax);
            if accepted {
                if pred.argmax == label {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if known_total == 0 { 0.0 } else { tp as f64 / known_total as f64 };
        outcomes.push(RepOutcome { known, precision, recall, f: f_measure(precision, recall) });
    }
    Ok(outcomes)
}

/// Mean and (population) standard deviation of the repetition F-measures.
pub fn f_mean_std(outcomes: &[RepOutcome]) -> (f64, f64) {
    if outcomes.is_empty() {
        return (0.0, 0.0);
    }
    let n = outcomes.len() as f64;
    let mean = outcomes.iter().map(|o| o.f).sum::<f64>() / n;
    let var = outcomes.iter().map(|o| (o.f - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
