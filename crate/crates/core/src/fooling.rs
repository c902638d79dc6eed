//! Fooling attack harness.
//!
//! A Fooling Generator Network (FGN) — a single dense layer with sigmoid
//! output and equal input/output width, fed a fixed random input — is
//! optimized by plain SGD against a frozen target model until the target
//! assigns the attacked class a thresholdable signal above the configured
//! threshold. The sigmoid keeps generated samples in `(0, 1)` without any
//! explicit constraint.
//!
//! The success test always reads the target's confidence-scaled output for
//! the attacked class (`y` for plain models, the member-product channel for
//! COOL, `score · y` for the autoencoder variant): that is the signal a
//! fooling sample must push above the threshold to count as valid. The
//! `target` option selects which signal the attacker differentiates:
//! `UnscaledY` attacks the raw posteriors, `ScaledY` attacks the scaled
//! outputs directly. For the autoencoder variant the scaled loss
//! `−log(score·y_k)` splits into the posterior term plus
//! `alpha/D·‖r(x)−x‖₂`, whose input gradient is one extra reverse pass; the
//! curvature gate is treated as locally constant (its gradient is exactly
//! zero wherever `gamma ≤ 0`).

use crate::classifier::{Head, JointModel, Variant};
use crate::dae::{jacobian_diag_from_traces, score_from};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_grad_indices, Dense, Layer, LayerStack};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{uniform, Tensor};

/// Which signal the attack loss differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoolTarget {
    /// Cross-entropy on the raw class posteriors `y`.
    UnscaledY,
    /// Cross-entropy on the confidence-scaled outputs (`ỹ`).
    ScaledY,
}

/// Attack configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoolingConfig<S> {
    pub trials_per_class: usize,
    pub max_updates: usize,
    /// A trial succeeds when the scaled signal exceeds this value.
    pub threshold: S,
    /// SGD learning rate for the FGN updates.
    pub eta: S,
    pub target: FoolTarget,
}

impl<S: Scalar> FoolingConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.trials_per_class == 0 || self.max_updates == 0 {
            return Err(Error::parameter("trials and max_updates must be >= 1"));
        }
        if self.threshold <= S::zero() || self.threshold >= S::one() {
            return Err(Error::parameter("threshold must be in (0, 1)"));
        }
        if self.eta <= S::zero() {
            return Err(Error::parameter("eta must be > 0"));
        }
        Ok(())
    }
}

/// Fooling generator: dense `D → D` + sigmoid on a fixed random input.
#[derive(Debug, Clone)]
pub struct Fgn<S> {
    pub stack: LayerStack<S>,
    pub z: Tensor<S>,
}

impl<S: Scalar> Fgn<S> {
    /// Weights uniform in ±0.01 (outputs start near gray 0.5), zero bias,
    /// input drawn once from `U(0,1)^D`.
    pub fn init(dim: usize, rng: &mut Rng) -> Self {
        let limit = S::from_f(0.01);
        let w = uniform(rng, &[dim, dim], -limit, limit).expect("valid bounds");
        let dense = Dense::from_parts(w, Tensor::zeros(&[dim])).expect("square layer");
        let z = uniform(rng, &[1, dim], S::zero(), S::one()).expect("valid bounds");
        Fgn { stack: LayerStack::new(vec![Layer::Dense(dense), Layer::Sigmoid]), z }
    }

    /// Current generated sample, `[1, D]` strictly inside `(0, 1)`.
    pub fn generate(&self) -> Result<Tensor<S>> {
        self.stack.forward(&self.z)
    }

    /// One SGD step against an upstream gradient on the generated image.
    pub fn sgd_step(&mut self, g_image: &Tensor<S>, eta: S) -> Result<()> {
        let (_, trace) = self.stack.forward_traced(&self.z)?;
        let (_, grads) = self.stack.backward(&trace, g_image)?;
        for (layer, lg) in self.stack.layers.iter_mut().zip(&grads.per_layer) {
            if let (Layer::Dense(d), crate::nn::LayerGrads::Pair { w, b }) = (layer, lg) {
                for (p, &g) in d.w.data_mut().iter_mut().zip(w.data()) {
                    *p = *p - eta * g;
                }
                for (p, &g) in d.b.data_mut().iter_mut().zip(b.data()) {
                    *p = *p - eta * g;
                }
            }
        }
        Ok(())
    }
}

/// One attack attempt.
#[derive(Debug, Clone)]
pub struct AttemptRecord<S> {
    pub class: usize,
    pub trial: usize,
    pub success: bool,
    /// 1-based index of the success check that fired; a success at step 1
    /// required no updates. Failed attempts report `max_updates`.
    pub steps: usize,
    pub sample: Tensor<S>,
}

/// Campaign outcome.
#[derive(Debug, Clone)]
pub struct FoolingReport<S> {
    pub classes: usize,
    pub trials_per_class: usize,
    pub per_class_successes: Vec<usize>,
    pub rate: f64,
    /// Mean steps over successful attempts; absent when nothing succeeded.
    pub mean_steps: Option<f64>,
    pub attempts: Vec<AttemptRecord<S>>,
}

/// Attacks one class of a frozen target until the scaled signal crosses the
/// threshold or the update budget runs out.
pub fn fooling_attempt<S: Scalar>(
    target: &JointModel<S>,
    class_k: usize,
    cfg: &FoolingConfig<S>,
    rng: &mut Rng,
) -> Result<AttemptRecord<S>> {
    cfg.validate()?;
    let k = target.spec.classes;
    if class_k >= k {
        return Err(Error::parameter(format!("class {class_k} out of range for {k} classes")));
    }
    let dim = target.spec.input_dim;
    let mut fgn = Fgn::init(dim, rng);
    let alpha_over_d = target.conf.alpha / S::from_f(dim as f64);

    let mut last_sample = fgn.generate()?;
    for step in 1..=cfg.max_updates {
        let image = fgn.generate()?;
        last_sample = image.clone();

        let xin = target.dae.prep_input(&image)?;
        let (feat, enc_trace) = target.dae.encoder.forward_traced(&xin)?;

        // Head forward (traced so the attack gradient can reuse it).
        enum HeadPass<S> {
            Softmax { probs: Tensor<S>, trace: crate::nn::Trace<S> },
            Cool { members: Tensor<S>, probs: Tensor<S>, conf: Tensor<S>, trace: crate::nn::Trace<S> },
        }
        let pass = match &target.head {
            Head::Softmax(stack) => {
                let (probs, trace) = stack.forward_traced(&feat)?;
                HeadPass::Softmax { probs, trace }
            }
            Head::Cool(cool) => {
                let (members, trace) = cool.members_traced(&feat)?;
                let (probs, conf) = cool.aggregate(&members)?;
                HeadPass::Cool { members, probs, conf, trace }
            }
        };
        let y_k = match &pass {
            HeadPass::Softmax { probs, .. } => probs.at2(0, class_k),
            HeadPass::Cool { probs, .. } => probs.at2(0, class_k),
        };

        // Success test on the scaled signal. For the autoencoder variant
        // `scaled_k = score · y_k ≤ y_k`, so the expensive confidence is only
        // evaluated once the posterior alone clears the threshold.
        let mut dec_pass: Option<(Tensor<S>, crate::nn::Trace<S>)> = None;
        let crossed = match target.spec.variant {
            Variant::Plain => y_k > cfg.threshold,
            Variant::Cool => match &pass {
                HeadPass::Cool { conf, .. } => conf.at2(0, class_k) > cfg.threshold,
                _ => unreachable!("cool variant uses the cool head"),
            },
            Variant::Dae => {
                if y_k <= cfg.threshold {
                    false
                } else {
                    let (rec, dec_trace) = target.dae.decoder.forward_traced(&feat)?;
                    let recon_error = rec.sub(&image)?.l2_norm();
                    let diag = match jacobian_diag_from_traces(
                        &target.dae,
                        &enc_trace,
                        &dec_trace,
                        dim,
                    ) {
                        Some(result) => result?,
                        None => crate::dae::jacobian_diag_reverse(&target.dae, &image)?,
                    };
                    let gamma = diag.mean() - S::one();
                    let report = score_from(recon_error, gamma, &target.conf);
                    dec_pass = Some((rec, dec_trace));
                    report.score * y_k > cfg.threshold
                }
            }
        };
        if crossed {
            return Ok(AttemptRecord {
                class: class_k,
                trial: 0,
                success: true,
                steps: step,
                sample: image,
            });
        }
        if step == cfg.max_updates {
            break;
        }

        // Attack gradient on the image.
        let g_image = match (&pass, cfg.target) {
            (HeadPass::Softmax { probs, trace }, loss_target) => {
                let g_probs = cross_entropy_grad_indices(probs, &[class_k])?;
                let (g_feat, _) = target.head.stack().backward(trace, &g_probs)?;
                let (g_in, _) = target.dae.encoder.backward(&enc_trace, &g_feat)?;
                let mut g = g_in.reshaped(&[1, dim])?;
                if loss_target == FoolTarget::ScaledY && target.spec.variant == Variant::Dae {
                    // −log(score·y_k) adds alpha/D·‖r−x‖₂; its gradient is
                    // (Jᵀ−I)u with u the normalized residual.
                    let (rec, dec_trace) = match dec_pass.take() {
                        Some(pair) => pair,
                        None => target.dae.decoder.forward_traced(&feat)?,
                    };
                    let resid = rec.sub(&image)?;
                    let re = resid.l2_norm();
                    if re > S::zero() {
                        let u = resid.scale(S::one() / re);
                        let (g_feat_u, _) = target.dae.decoder.backward(&dec_trace, &u)?;
                        let (jt_u, _) = target.dae.encoder.backward(&enc_trace, &g_feat_u)?;
                        let re_grad = jt_u.reshaped(&[1, dim])?.sub(&u)?;
                        g = g.add(&re_grad.scale(alpha_over_d))?;
                    }
                }
                g
            }
            (HeadPass::Cool { members, trace, .. }, FoolTarget::UnscaledY) => {
                let (g_feat, _) = match &target.head {
                    Head::Cool(cool) => cool.backward_ce(trace, members, &[class_k])?,
                    _ => unreachable!(),
                };
                let (g_in, _) = target.dae.encoder.backward(&enc_trace, &g_feat)?;
                g_in.reshaped(&[1, dim])?
            }
            (HeadPass::Cool { members, trace, .. }, FoolTarget::ScaledY) => {
                let (g_feat, _) = match &target.head {
                    Head::Cool(cool) => cool.backward_neglog_conf(trace, members, class_k)?,
                    _ => unreachable!(),
                };
                let (g_in, _) = target.dae.encoder.backward(&enc_trace, &g_feat)?;
                g_in.reshaped(&[1, dim])?
            }
        };
        fgn.sgd_step(&g_image, cfg.eta)?;
    }
    Ok(AttemptRecord {
        class: class_k,
        trial: 0,
        success: false,
        steps: cfg.max_updates,
        sample: last_sample,
    })
}

/// Runs `trials_per_class` attempts against every class with split seeds and
/// aggregates the rate and mean steps (successes only).
pub fn fooling_campaign<S: Scalar>(
    target: &JointModel<S>,
    cfg: &FoolingConfig<S>,
    rng: &mut Rng,
) -> Result<FoolingReport<S>> {
    cfg.validate()?;
    let classes = target.spec.classes;
    let mut attempts = Vec::with_capacity(classes * cfg.trials_per_class);
    let mut per_class = vec![0usize; classes];
    for class_k in 0..classes {
        for trial in 0..cfg.trials_per_class {
            let mut child = rng.split();
            let mut record = fooling_attempt(target, class_k, cfg, &mut child)?;
            record.trial = trial;
            if record.success {
                per_class[class_k] += 1;
            }
            attempts.push(record);
        }
    }
    let successes: usize = per_class.iter().sum();
    let total = classes * cfg.trials_per_class;
    let mean_steps = if successes == 0 {
        None
    } else {
        let sum: usize = attempts.iter().filter(|a| a.success).map(|a| a.steps).sum();
        Some(sum as f64 / successes as f64)
    };
    Ok(FoolingReport {
        classes,
        trials_per_class: cfg.trials_per_class,
        per_class_successes: per_class,
        rate: successes as f64 / total as f64,
        mean_steps,
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ArchKind, ModelSpec};
    use crate::dae::{ConfidenceParams, DecoderMode, OutputActivation};

    fn small_cfg(target: FoolTarget) -> FoolingConfig<f64> {
        FoolingConfig {
            trials_per_class: 2,
            max_updates: 50,
            threshold: 0.9,
            eta: 1e-3,
            target,
        }
    }

    fn spec(variant: Variant, classes: usize) -> ModelSpec {
        ModelSpec {
            input_dim: 8,
            arch: ArchKind::Dense { hidden: vec![6] },
            classes,
            variant,
            omega: 2,
            decoder_mode: DecoderMode::Symmetric,
            out_activation: OutputActivation::Sigmoid,
        }
    }

    fn conf() -> ConfidenceParams<f64> {
        ConfidenceParams::new(8.0, 10.0, 8).unwrap()
    }

    #[test]
    fn pre_satisfied_target_succeeds_at_step_one() {
        let mut rng = Rng::seed_from(1);
        let mut model = spec(Variant::Plain, 3).build(conf(), 0.0, &mut rng).unwrap();
        // Head biased so class 1 always gets essentially all the mass.
        if let Head::Softmax(stack) = &mut model.head {
            if let Layer::Dense(d) = &mut stack.layers[0] {
                d.w = Tensor::zeros(&[6, 3]);
                d.b = Tensor::new(&[3], vec![0.0, 40.0, 0.0]).unwrap();
            }
        }
        let record = fooling_attempt(&model, 1, &small_cfg(FoolTarget::UnscaledY), &mut rng).unwrap();
        assert!(record.success);
        assert_eq!(record.steps, 1);
    }

    #[test]
    fn capped_signal_never_succeeds() {
        // Two classes, zero-weight head: y = [0.5, 0.5] forever, so the
        // scaled signal can never exceed 0.9.
        let mut rng = Rng::seed_from(2);
        let mut model = spec(Variant::Dae, 2).build(conf(), 0.0, &mut rng).unwrap();
        if let Head::Softmax(stack) = &mut model.head {
            if let Layer::Dense(d) = &mut stack.layers[0] {
                d.w = Tensor::zeros(&[6, 2]);
                d.b = Tensor::zeros(&[2]);
            }
        }
        let cfg = small_cfg(FoolTarget::ScaledY);
        let record = fooling_attempt(&model, 0, &cfg, &mut rng).unwrap();
        assert!(!record.success);
        assert_eq!(record.steps, cfg.max_updates);
    }

    #[test]
    fn fgn_outputs_stay_in_open_unit_interval() {
        let mut rng = Rng::seed_from(3);
        for _ in 0..20 {
            let mut fgn = Fgn::<f64>::init(16, &mut rng);
            // Random large-ish weights after a few arbitrary updates.
            let g = crate::tensor::gaussian(&mut rng, &[1, 16], 0.0, 1.0).unwrap();
            fgn.sgd_step(&g, 0.5).unwrap();
            let img = fgn.generate().unwrap();
            for &v in img.data() {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn campaign_is_deterministic_and_leaves_target_frozen() {
        let mut rng = Rng::seed_from(4);
        let model = spec(Variant::Plain, 3).build(conf(), 0.0, &mut rng).unwrap();
        let before = model.clone();
        let cfg = small_cfg(FoolTarget::UnscaledY);

        let mut rng_a = Rng::seed_from(99);
        let report_a = fooling_campaign(&model, &cfg, &mut rng_a).unwrap();
        let mut rng_b = Rng::seed_from(99);
        let report_b = fooling_campaign(&model, &cfg, &mut rng_b).unwrap();

        assert_eq!(model, before, "campaign must not mutate the target");
        assert_eq!(report_a.rate, report_b.rate);
        assert_eq!(report_a.mean_steps, report_b.mean_steps);
        for (a, b) in report_a.attempts.iter().zip(&report_b.attempts) {
            assert_eq!(a.steps, b.steps);
            assert_eq!(a.sample, b.sample);
        }
        assert_eq!(
            report_a.rate,
            report_a.per_class_successes.iter().sum::<usize>() as f64
                / (report_a.classes * report_a.trials_per_class) as f64
        );
    }

    #[test]
    fn zero_successes_have_no_mean_steps() {
        let mut rng = Rng::seed_from(5);
        let mut model = spec(Variant::Plain, 2).build(conf(), 0.0, &mut rng).unwrap();
        if let Head::Softmax(stack) = &mut model.head {
            if let Layer::Dense(d) = &mut stack.layers[0] {
                d.w = Tensor::zeros(&[6, 2]);
                d.b = Tensor::zeros(&[2]);
            }
        }
        let cfg = FoolingConfig { max_updates: 5, ..small_cfg(FoolTarget::UnscaledY) };
        let report = fooling_campaign(&model, &cfg, &mut rng).unwrap();
        assert_eq!(report.rate, 0.0);
        assert!(report.mean_steps.is_none());
    }
}
