//! Joint classifier + denoising-autoencoder models.
//!
//! The classifier head is a softmax layer attached to the top hidden layer
//! of the encoder. Three variants share that skeleton:
//!
//! - `plain`: head only; confidence is the max class posterior.
//! - `cool`: competitive overcomplete head; confidence is the member-product
//!   channel of the predicted class.
//! - `dae`: head plus decoder; confidence is the reconstruction score, and
//!   the published outputs are the scaled posteriors `ỹ = score · y`.

use crate::dae::{
    build_dense_decoder, build_dense_encoder, confidence, Batches, ConfidenceParams,
    ConfidenceReport, DaeModel, DecoderMode, JacobianMethod, OutputActivation, Schedule, TrainCfg,
};
use crate::error::{Error, Result};
use crate::nn::{
    cross_entropy_grad_indices, cross_entropy_indices, mse_grad, mse_per_sample, Adam, CoolHead,
    Dense, Layer, LayerStack, StackGrads,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Cool,
    Dae,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::Cool => "cool",
            Variant::Dae => "dae",
        }
    }
}

/// Network family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchKind {
    /// Dense encoder with the given hidden widths (ReLU after each).
    Dense { hidden: Vec<usize> },
    /// Fixed convolutional topology: Conv(c→32, 5x5), MaxPool, Conv(32→64,
    /// 5x5), MaxPool, Flatten, Dense(→400); ReLU after every layer.
    Conv { image: [usize; 3] },
}

/// Architecture descriptor; everything needed to rebuild a model skeleton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub arch: ArchKind,
    pub classes: usize,
    pub variant: Variant,
    pub omega: usize,
    pub decoder_mode: DecoderMode,
    pub out_activation: OutputActivation,
}

/// Classifier head: plain softmax stack or the overcomplete COOL head.
#[derive(Debug, Clone, PartialEq)]
pub enum Head<S> {
    Softmax(LayerStack<S>),
    Cool(CoolHead<S>),
}

impl<S: Scalar> Head<S> {
    pub fn stack(&self) -> &LayerStack<S> {
        match self {
            Head::Softmax(s) => s,
            Head::Cool(c) => &c.stack,
        }
    }

    pub fn stack_mut(&mut self) -> &mut LayerStack<S> {
        match self {
            Head::Softmax(s) => s,
            Head::Cool(c) => &mut c.stack,
        }
    }
}

/// Joint model: encoder (+ optional decoder) and classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel<S> {
    pub spec: ModelSpec,
    pub dae: DaeModel<S>,
    pub head: Head<S>,
    pub conf: ConfidenceParams<S>,
}

/// Per-sample prediction.
///
/// `scaled` is the model's thresholdable output: the posteriors for `plain`,
/// the per-class product confidences for `cool`, and `score · y` for `dae`.
#[derive(Debug, Clone)]
pub struct Prediction<S> {
    pub class_probs: Tensor<S>,
    pub scaled: Tensor<S>,
    pub confidence: S,
    pub argmax: usize,
    pub report: Option<ConfidenceReport<S>>,
}

impl ModelSpec {
    pub fn feature_width(&self) -> usize {
        match &self.arch {
            ArchKind::Dense { hidden } => *hidden.last().expect("validated non-empty"),
            ArchKind::Conv { .. } => 400,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::parameter("classes must be >= 1"));
        }
        if self.omega == 0 {
            return Err(Error::parameter("omega must be >= 1"));
        }
        match &self.arch {
            ArchKind::Dense { hidden } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::parameter("hidden widths must be positive"));
                }
            }
            ArchKind::Conv { image: [c, h, w] } => {
                if self.input_dim != c * h * w {
                    return Err(Error::parameter(format!(
                        "input_dim {} does not match image {c}x{h}x{w}",
                        self.input_dim
                    )));
                }
                for (side, name) in [(h, "height"), (w, "width")] {
                    let after_conv1 = side.checked_sub(4).unwrap_or(0);
                    if after_conv1 < 2 || after_conv1 % 2 != 0 {
                        return Err(Error::parameter(format!("conv arch cannot pool {name} {side}")));
                    }
                    let after_conv2 = (after_conv1 / 2).checked_sub(4).unwrap_or(0);
                    if after_conv2 < 2 || after_conv2 % 2 != 0 {
                        return Err(Error::parameter(format!("conv arch cannot pool {name} {side}")));
                    }
                }
                if self.variant == Variant::Dae && self.decoder_mode == DecoderMode::Symmetric {
                    return Err(Error::parameter(
                        "symmetric decoder requires a dense architecture",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds the model with seeded initialization. Draw order is encoder,
    /// decoder (asymmetric only; tied decoders draw nothing), head — so
    /// plain and symmetric-dae variants consume identical streams.
    pub fn build<S: Scalar>(
        &self,
        conf: ConfidenceParams<S>,
        sigma: S,
        rng: &mut Rng,
    ) -> Result<JointModel<S>> {
        self.validate()?;
        conf.validate()?;
        if conf.input_dim != self.input_dim {
            return Err(Error::parameter(format!(
                "confidence D = {} does not match input_dim {}",
                conf.input_dim, self.input_dim
            )));
        }
        let (encoder, decoder, image) = match &self.arch {
            ArchKind::Dense { hidden } => {
                let encoder = build_dense_encoder::<S>(self.input_dim, hidden, rng);
                let decoder = if self.variant == Variant::Dae {
                    build_dense_decoder(
                        &encoder,
                        self.input_dim,
                        hidden,
                        self.decoder_mode,
                        self.out_activation,
                        rng,
                    )?
                } else {
                    LayerStack::empty()
                };
                (encoder, decoder, None)
            }
            ArchKind::Conv { image } => {
                let [c, h, w] = *image;
                let (h2, w2) = ((h - 4) / 2 - 4, (w - 4) / 2 - 4);
                let flat = 64 * (h2 / 2) * (w2 / 2);
                let encoder = LayerStack::new(vec![
                    Layer::Conv2d(crate::nn::Conv2d::init(rng, c, 32, 5, 5)),
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    Layer::Conv2d(crate::nn::Conv2d::init(rng, 32, 64, 5, 5)),
                    Layer::Relu,
                    Layer::MaxPool2x2,
                    Layer::Flatten,
                    Layer::Dense(Dense::init(rng, flat, 400)),
                    Layer::Relu,
                ]);
                let decoder = if self.variant == Variant::Dae {
                    let mut layers = vec![Layer::Dense(Dense::init(rng, 400, self.input_dim))];
                    if self.out_activation == OutputActivation::Sigmoid {
                        layers.push(Layer::Sigmoid);
                    }
                    LayerStack::new(layers)
                } else {
                    LayerStack::empty()
                };
                (encoder, decoder, Some(*image))
            }
        };
        let feat = self.feature_width();
        let head = match self.variant {
            Variant::Cool => Head::Cool(CoolHead::init(rng, feat, self.classes, self.omega)?),
            _ => Head::Softmax(LayerStack::new(vec![
                Layer::Dense(Dense::init(rng, feat, self.classes)),
                Layer::Softmax,
            ])),
        };
        Ok(JointModel {
            spec: self.clone(),
            dae: DaeModel {
                encoder,
                decoder,
                mode: self.decoder_mode,
                sigma,
                image,
            },
            head,
            conf,
        })
    }
}

fn as_row<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    match x.rank() {
        1 => x.clone().reshaped(&[1, x.len()]),
        2 if x.shape()[0] == 1 => Ok(x.clone()),
        _ => Err(Error::dimension(format!(
            "expected a single sample, got {:?}",
            x.shape()
        ))),
    }
}

impl<S: Scalar> JointModel<S> {
    /// Encoder activations for a `[n, D]` batch.
    pub fn features(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let xin = self.dae.prep_input(x)?;
        self.dae.encoder.forward(&xin)
    }

    /// Class posteriors `[n, K]` (summed member activations for `cool`).
    pub fn class_probs(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let feat = self.features(x)?;
        match &self.head {
            Head::Softmax(stack) => stack.forward(&feat),
            Head::Cool(cool) => Ok(cool.aggregate(&cool.members(&feat)?)?.0),
        }
    }

    pub fn predict_one(&self, x: &Tensor<S>) -> Result<Prediction<S>> {
        let row = as_row(x)?;
        Ok(self.predict_batch(&row)?.pop().expect("one prediction per row"))
    }

    pub fn predict_batch(&self, x: &Tensor<S>) -> Result<Vec<Prediction<S>>> {
        let (n, _) = x.dims2()?;
        let feat = self.features(x)?;
        let (probs, cool_conf) = match &self.head {
            Head::Softmax(stack) => (stack.forward(&feat)?, None),
            Head::Cool(cool) => {
                let (p, c) = cool.aggregate(&cool.members(&feat)?)?;
                (p, Some(c))
            }
        };
        let k = self.spec.classes;
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            let y = Tensor::new(&[k], probs.row(r).to_vec())?;
            let argmax = y.argmax_flat();
            let pred = match self.spec.variant {
                Variant::Plain => Prediction {
                    confidence: y.data()[argmax],
                    scaled: y.clone(),
                    class_probs: y,
                    argmax,
                    report: None,
                },
                Variant::Cool => {
                    let conf_row = cool_conf.as_ref().expect("cool head");
                    let scaled = Tensor::new(&[k], conf_row.row(r).to_vec())?;
                    Prediction {
                        confidence: scaled.data()[argmax],
                        scaled,
                        class_probs: y,
                        argmax,
                        report: None,
                    }
                }
                Variant::Dae => {
                    let report = confidence(&self.dae, &x.row_tensor(r), &self.conf)?;
                    Prediction {
                        confidence: report.score,
                        scaled: y.scale(report.score),
                        class_probs: y,
                        argmax,
                        report: Some(report),
                    }
                }
            };
            out.push(pred);
        }
        Ok(out)
    }

    /// Fraction of samples classified correctly with confidence above the
    /// threshold.
    pub fn thresholded_accuracy(
        &self,
        x: &Tensor<S>,
        labels: &[usize],
        threshold: f64,
    ) -> Result<f64> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::parameter(format!("threshold {threshold} outside [0, 1]")));
        }
        let preds = self.predict_batch(x)?;
        if preds.len() != labels.len() {
            return Err(Error::dimension("label count does not match batch"));
        }
        let pairs: Vec<(usize, f64)> =
            preds.iter().map(|p| (p.argmax, p.confidence.to_f())).collect();
        Ok(thresholded_accuracy_counts(&pairs, labels, threshold))
    }
}

/// Counting rule shared with the protocol code: correct label AND
/// confidence strictly above the threshold.
pub fn thresholded_accuracy_counts(
    preds: &[(usize, f64)],
    labels: &[usize],
    threshold: f64,
) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|((argmax, conf), &label)| *argmax == label && *conf > threshold)
        .count();
    hits as f64 / preds.len() as f64
}

/// Trains the joint objective
/// `CE(y, label) + lambda_rec · ‖r(corrupt(x)) − x‖² + lambda_l2 · Σw²`.
///
/// Plain and cool variants have no reconstruction term. The classifier path
/// always sees clean inputs; corruption only feeds the reconstruction branch.
/// Returns the per-step total loss curve.
pub fn train_joint<S: Scalar>(
    model: &mut JointModel<S>,
    x: &Tensor<S>,
    labels: &[usize],
    cfg: &TrainCfg<S>,
    rng: &mut Rng,
) -> Result<Vec<S>> {
    let (n, _) = x.dims2()?;
    cfg.validate(n)?;
    if labels.len() != n {
        return Err(Error::dimension("label count does not match data"));
    }
    let k = model.spec.classes;
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::parameter(format!("label {bad} out of range for {k} classes")));
    }
    let shuffle_rng = rng.split();
    let mut noise_rng = rng.split();
    let mut adam = Adam::new(cfg.adam);
    let mut curve = Vec::new();
    let with_recon = model.spec.variant == Variant::Dae && cfg.lambda_rec > S::zero();
    let sigma = model.dae.sigma;

    let total = Batches::total_steps(n, cfg.batch, cfg.schedule);
    let mut batches = Batches::new(n, cfg.batch, shuffle_rng);
    for _ in 0..total {
        let idx = batches.next_chunk(cfg.schedule);
        let xb = x.gather_rows(&idx)?;
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();

        // Classification path on clean inputs.
        let xin = model.dae.prep_input(&xb)?;
        let (feat, enc_trace) = model.dae.encoder.forward_traced(&xin)?;
        let (ce, g_feat, head_grads) = match &model.head {
            Head::Softmax(stack) => {
                let (probs, head_trace) = stack.forward_traced(&feat)?;
                let ce = cross_entropy_indices(&probs, &yb)?;
                let g_probs = cross_entropy_grad_indices(&probs, &yb)?;
                let (g_feat, head_grads) = stack.backward(&head_trace, &g_probs)?;
                (ce, g_feat, head_grads)
            }
            Head::Cool(cool) => {
                let (members, head_trace) = cool.members_traced(&feat)?;
                let (class_probs, _) = cool.aggregate(&members)?;
                let ce = cross_entropy_indices(&class_probs, &yb)?;
                let (g_feat, head_grads) = cool.backward_ce(&head_trace, &members, &yb)?;
                (ce, g_feat, head_grads)
            }
        };
        let (_, mut enc_grads) = model.dae.encoder.backward(&enc_trace, &g_feat)?;

        // Reconstruction path on corrupted inputs, targeting the clean batch.
        let mut recon_loss = S::zero();
        let mut dec_grads = StackGrads::zeros_for(&model.dae.decoder);
        if with_recon {
            let corrupted = crate::dae::corrupt(&xb, sigma, &mut noise_rng)?;
            let cin = model.dae.prep_input(&corrupted)?;
            let (feat2, enc_trace2) = model.dae.encoder.forward_traced(&cin)?;
            let (rec, dec_trace) = model.dae.decoder.forward_traced(&feat2)?;
            recon_loss = mse_per_sample(&rec, &xb)?;
            let g_rec = mse_grad(&rec, &xb)?.scale(cfg.lambda_rec);
            let (g_feat2, dgrads) = model.dae.decoder.backward(&dec_trace, &g_rec)?;
            let (_, enc_grads2) = model.dae.encoder.backward(&enc_trace2, &g_feat2)?;
            enc_grads.add_assign(&enc_grads2)?;
            dec_grads = dgrads;
        }

        // L2 over the master weight list: encoder, asymmetric decoder, head.
        let mut l2_term = S::zero();
        let mut head_grads = head_grads;
        if cfg.lambda_l2 > S::zero() {
            let mut norm = model.dae.encoder.weight_norm_sq() + model.head.stack().weight_norm_sq();
            model.dae.encoder.add_weight_decay(&mut enc_grads, cfg.lambda_l2)?;
            model.head.stack().add_weight_decay(&mut head_grads, cfg.lambda_l2)?;
            if with_recon && model.dae.mode == DecoderMode::Asymmetric {
                norm = norm + model.dae.decoder.weight_norm_sq();
                model.dae.decoder.add_weight_decay(&mut dec_grads, cfg.lambda_l2)?;
            }
            l2_term = cfg.lambda_l2 * norm;
        }

        model.dae.fold_symmetric_grads(&mut enc_grads, &dec_grads)?;
        adam.begin_step();
        crate::dae::apply_stack_updates(&mut adam, &mut model.dae.encoder, &enc_grads, false)?;
        crate::dae::apply_stack_updates(
            &mut adam,
            &mut model.dae.decoder,
            &dec_grads,
            model.dae.mode == DecoderMode::Symmetric,
        )?;
        crate::dae::apply_stack_updates(&mut adam, model.head.stack_mut(), &head_grads, false)?;
        model.dae.resync_decoder()?;

        curve.push(ce + cfg.lambda_rec * recon_loss + l2_term);
    }
    Ok(curve)
}

/// Recipe for building and training fresh models inside the protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFactory<S> {
    pub spec: ModelSpec,
    pub sigma: S,
    pub alpha: S,
    pub beta: S,
    pub jacobian: JacobianMethod,
    pub fd_step: S,
    pub use_gate: bool,
    pub train: TrainCfg<S>,
}

impl<S: Scalar> ModelFactory<S> {
    pub fn conf_params(&self) -> Result<ConfidenceParams<S>> {
        let params = ConfidenceParams {
            alpha: self.alpha,
            beta: self.beta,
            input_dim: self.spec.input_dim,
            jacobian: self.jacobian,
            fd_step: self.fd_step,
            use_gate: self.use_gate,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn build(&self, rng: &mut Rng) -> Result<JointModel<S>> {
        self.spec.build(self.conf_params()?, self.sigma, rng)
    }

    pub fn train_on(
        &self,
        x: &Tensor<S>,
        labels: &[usize],
        rng: &mut Rng,
    ) -> Result<(JointModel<S>, Vec<S>)> {
        let mut model = self.build(rng)?;
        let curve = train_joint(&mut model, x, labels, &self.train, rng)?;
        Ok((model, curve))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_spec(variant: Variant) -> ModelSpec {
        ModelSpec {
            input_dim: 6,
            arch: ArchKind::Dense { hidden: vec![5] },
            classes: 3,
            variant,
            omega: 2,
            decoder_mode: DecoderMode::Symmetric,
            out_activation: OutputActivation::Linear,
        }
    }

    fn conf(d: usize) -> ConfidenceParams<f64> {
        ConfidenceParams::new(4.0, 5.0, d).unwrap()
    }

    #[test]
    fn plain_confidence_is_max_posterior() {
        // Zero-weight head with biases chosen so softmax gives [0.7, 0.3].
        let mut rng = Rng::seed_from(1);
        let spec = ModelSpec { classes: 2, ..dense_spec(Variant::Plain) };
        let mut model = spec.build(conf(6), 0.0, &mut rng).unwrap();
        if let Head::Softmax(stack) = &mut model.head {
            if let Layer::Dense(d) = &mut stack.layers[0] {
                d.w = Tensor::zeros(&[5, 2]);
                d.b = Tensor::new(&[2], vec![0.7f64.ln(), 0.3f64.ln()]).unwrap();
            }
        }
        let x = Tensor::new(&[1, 6], vec![0.1; 6]).unwrap();
        let pred = model.predict_one(&x).unwrap();
        assert!((pred.class_probs.data()[0] - 0.7).abs() < 1e-12);
        assert!((pred.confidence - 0.7).abs() < 1e-12);
        assert_eq!(pred.argmax, 0);
        assert_eq!(pred.scaled, pred.class_probs, "plain variant publishes y unscaled");
    }

    #[test]
    fn unit_confidence_leaves_outputs_unscaled() {
        // Identity autoencoder: recon error 0 and gamma 0, so score is 1.
        let mut rng = Rng::seed_from(2);
        let spec = ModelSpec {
            input_dim: 4,
            arch: ArchKind::Dense { hidden: vec![4] },
            classes: 2,
            variant: Variant::Dae,
            omega: 1,
            decoder_mode: DecoderMode::Asymmetric,
            out_activation: OutputActivation::Linear,
        };
        let mut model = spec.build(conf(4), 0.0, &mut rng).unwrap();
        let mut eye = Tensor::zeros(&[4, 4]);
        for i in 0..4 {
            *eye.at2_mut(i, i) = 1.0;
        }
        if let Layer::Dense(d) = &mut model.dae.encoder.layers[0] {
            *d = Dense::from_parts(eye.clone(), Tensor::zeros(&[4])).unwrap();
        }
        model.dae.encoder.layers[1] = Layer::Flatten; // drop the relu gate
        if let Layer::Dense(d) = &mut model.dae.decoder.layers[0] {
            *d = Dense::from_parts(eye, Tensor::zeros(&[4])).unwrap();
        }
        let x = Tensor::new(&[1, 4], vec![0.5, 0.25, 0.75, 0.1]).unwrap();
        let pred = model.predict_one(&x).unwrap();
        let report = pred.report.unwrap();
        assert_eq!(report.score, 1.0);
        assert_eq!(pred.scaled, pred.class_probs);
    }

    #[test]
    fn scaled_outputs_are_confidence_times_posteriors() {
        let mut rng = Rng::seed_from(3);
        let spec = ModelSpec { variant: Variant::Dae, ..dense_spec(Variant::Dae) };
        let model = spec.build(conf(6), 0.1, &mut rng).unwrap();
        let x = crate::tensor::gaussian(&mut rng, &[1, 6], 0.0, 1.0).unwrap();
        let pred = model.predict_one(&x).unwrap();
        let score = pred.report.unwrap().score;
        for (s, y) in pred.scaled.data().iter().zip(pred.class_probs.data()) {
            assert!((s - score * y).abs() < 1e-12);
        }
        // Scalar scaling preserves the argmax ordering.
        assert_eq!(pred.scaled.argmax_flat(), pred.class_probs.argmax_flat());
        let sum: f64 = pred.class_probs.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hand_scaled_prediction_matches_spec_arithmetic() {
        // score 0.5 against y = [0.8, 0.2] must publish [0.4, 0.1].
        let y = Tensor::from_vec(vec![0.8, 0.2]);
        let scaled = y.scale(0.5);
        assert_eq!(scaled.data(), &[0.4, 0.1]);
    }

    #[test]
    fn thresholded_accuracy_counting() {
        let preds = [(0, 0.95), (1, 0.92), (2, 0.99), (0, 0.50)];
        let labels = [0, 1, 2, 0];
        let acc = thresholded_accuracy_counts(&preds, &labels, 0.9);
        assert!((acc - 0.75).abs() < 1e-12);
        // Threshold 0 recovers ordinary accuracy; threshold 1 rejects all.
        assert_eq!(thresholded_accuracy_counts(&preds, &labels, 0.0), 1.0);
        assert_eq!(thresholded_accuracy_counts(&preds, &labels, 1.0), 0.0);
    }

    #[test]
    fn lambda_rec_zero_matches_plain_loss_curve() {
        let data_rng = &mut Rng::seed_from(100);
        let x = crate::tensor::gaussian::<f64>(data_rng, &[30, 6], 0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let mut cfg = TrainCfg::new(Schedule::Epochs(3), 8);
        cfg.lambda_rec = 0.0;

        let mut rng = Rng::seed_from(7);
        let mut plain = dense_spec(Variant::Plain).build(conf(6), 0.2, &mut rng).unwrap();
        let plain_curve = train_joint(&mut plain, &x, &labels, &cfg, &mut rng).unwrap();

        let mut rng = Rng::seed_from(7);
        let mut dae = dense_spec(Variant::Dae).build(conf(6), 0.2, &mut rng).unwrap();
        let dae_curve = train_joint(&mut dae, &x, &labels, &cfg, &mut rng).unwrap();

        assert_eq!(plain_curve, dae_curve);
    }

    #[test]
    fn training_same_seed_identical_parameters() {
        let run = || {
            let mut rng = Rng::seed_from(55);
            let x = crate::tensor::gaussian::<f64>(&mut rng, &[40, 6], 0.0, 1.0).unwrap();
            let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
            let mut model = dense_spec(Variant::Dae).build(conf(6), 0.2, &mut rng).unwrap();
            train_joint(&mut model, &x, &labels, &TrainCfg::new(Schedule::Epochs(2), 8), &mut rng)
                .unwrap();
            model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn out_of_range_label_is_a_parameter_error() {
        let mut rng = Rng::seed_from(9);
        let mut model = dense_spec(Variant::Plain).build(conf(6), 0.0, &mut rng).unwrap();
        let x = crate::tensor::gaussian::<f64>(&mut rng, &[4, 6], 0.0, 1.0).unwrap();
        let labels = vec![0, 1, 2, 3];
        assert!(matches!(
            train_joint(&mut model, &x, &labels, &TrainCfg::new(Schedule::Epochs(1), 2), &mut rng),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn cool_variant_confidence_uses_member_products() {
        let mut rng = Rng::seed_from(12);
        let model = dense_spec(Variant::Cool).build(conf(6), 0.0, &mut rng).unwrap();
        let x = crate::tensor::gaussian(&mut rng, &[1, 6], 0.0, 1.0).unwrap();
        let pred = model.predict_one(&x).unwrap();
        let Head::Cool(cool) = &model.head else { panic!() };
        let feat = model.features(&x).unwrap();
        let (probs, conf) = crate::nn::cool_forward(cool, &feat).unwrap();
        assert_eq!(pred.class_probs.data(), probs.row(0));
        assert_eq!(pred.scaled.data(), conf.row(0));
        assert_eq!(pred.confidence, conf.row(0)[pred.argmax]);
    }
}
