//! Denoising autoencoder training and the reconstruction-based confidence
//! score.
//!
//! A trained denoising autoencoder's reconstruction residual `r(x) − x`
//! behaves like a gradient of the data log-density: it is small near the
//! training manifold and large away from it. The confidence score combines
//! an exponential of the residual norm with a curvature gate,
//!
//! `score(x) = exp(−alpha/D · ‖r(x)−x‖₂) · gate(gamma(x))`,
//!
//! where `gamma(x) = (1/D) Σ_i (∂r_i/∂x_i − 1)` estimates the average
//! log-density curvature from the reconstruction Jacobian diagonal, and the
//! gate is 1 for `gamma ≤ 0` and `exp(−beta·gamma)` otherwise. The gate
//! filters out density minima and saddles that also reconstruct well.

use crate::error::{Error, Result};
use crate::nn::{
    mse_grad, mse_per_sample, Adam, AdamParams, Dense, Layer, LayerCache, LayerStack, StackGrads,
    Trace,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gaussian, Tensor};

/// Decoder weight handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderMode {
    /// Decoder dense weights are exact transposes of the encoder's, updated
    /// jointly; only the decoder biases are extra parameters.
    Symmetric,
    /// Decoder owns independent weights.
    Asymmetric,
}

/// Activation applied after the final decoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    /// For data in `[0, 1]` (images).
    Sigmoid,
    /// For unbounded data (2-D point sets).
    Linear,
}

/// Encoder/decoder pair with its corruption level.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeModel<S> {
    pub encoder: LayerStack<S>,
    pub decoder: LayerStack<S>,
    pub mode: DecoderMode,
    pub sigma: S,
    /// When set, flat `[n, D]` inputs are reshaped to `[n, c, h, w]` before
    /// the encoder (convolutional stacks).
    pub image: Option<[usize; 3]>,
}

impl<S: Scalar> DaeModel<S> {
    /// Reshapes flat input for the encoder when the stack is convolutional.
    pub fn prep_input(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        match self.image {
            None => Ok(x.clone()),
            Some([c, h, w]) => {
                let (n, d) = x.dims2()?;
                if d != c * h * w {
                    return Err(Error::dimension(format!(
                        "input width {d} does not match image {c}x{h}x{w}"
                    )));
                }
                x.clone().reshaped(&[n, c, h, w])
            }
        }
    }

    fn flatten_output(&self, r: Tensor<S>, n: usize) -> Result<Tensor<S>> {
        let d = r.len() / n.max(1);
        r.reshaped(&[n, d])
    }

    /// `r(x) = decoder(encoder(x))` on clean input; corruption is a
    /// training-time device only. Input and output are `[n, D]`.
    pub fn reconstruct(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (n, d) = x.dims2()?;
        let xin = self.prep_input(x)?;
        let rec = self.decoder.forward(&self.encoder.forward(&xin)?)?;
        let rec = self.flatten_output(rec, n)?;
        if rec.shape() != [n, d] {
            return Err(Error::dimension(format!(
                "decoder produced {:?} for input of width {d}",
                rec.shape()
            )));
        }
        Ok(rec)
    }

    /// Traced reconstruction for backward passes through both stacks.
    pub fn reconstruct_traced(
        &self,
        x: &Tensor<S>,
    ) -> Result<(Tensor<S>, Trace<S>, Trace<S>)> {
        let (n, d) = x.dims2()?;
        let xin = self.prep_input(x)?;
        let (feat, enc_trace) = self.encoder.forward_traced(&xin)?;
        let (rec, dec_trace) = self.decoder.forward_traced(&feat)?;
        let rec = self.flatten_output(rec, n)?;
        if rec.shape() != [n, d] {
            return Err(Error::dimension("decoder output does not match encoder input"));
        }
        Ok((rec, enc_trace, dec_trace))
    }

    /// `‖r(x) − x‖₂` for a single sample (`[D]` or `[1, D]`).
    pub fn recon_error(&self, x: &Tensor<S>) -> Result<S> {
        let row = as_row(x)?;
        let rec = self.reconstruct(&row)?;
        Ok(rec.sub(&row)?.l2_norm())
    }

    /// Encoder/decoder dense-layer pairs tied in symmetric mode:
    /// decoder dense `j` mirrors encoder dense `n−1−j`.
    pub fn tied_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let enc = self.encoder.dense_indices();
        let dec = self.decoder.dense_indices();
        if enc.len() != dec.len() {
            return Err(Error::dimension(format!(
                "symmetric tying needs matching dense counts, got {} vs {}",
                enc.len(),
                dec.len()
            )));
        }
        Ok(dec.iter().copied().zip(enc.into_iter().rev()).map(|(d, e)| (e, d)).collect())
    }

    /// Folds decoder weight gradients into the tied encoder weights
    /// (transposed) so the shared parameter sees both contributions.
    pub fn fold_symmetric_grads(
        &self,
        enc_grads: &mut StackGrads<S>,
        dec_grads: &StackGrads<S>,
    ) -> Result<()> {
        if self.mode != DecoderMode::Symmetric {
            return Ok(());
        }
        for (e, d) in self.tied_pairs()? {
            let dec_w = match &dec_grads.per_layer[d] {
                crate::nn::LayerGrads::Pair { w, .. } => w,
                _ => return Err(Error::dimension("missing decoder gradient")),
            };
            let folded = dec_w.transposed()?;
            match &mut enc_grads.per_layer[e] {
                crate::nn::LayerGrads::Pair { w, .. } => w.add_assign(&folded)?,
                _ => return Err(Error::dimension("missing encoder gradient")),
            }
        }
        Ok(())
    }

    /// Rewrites decoder weights as exact transposes of the encoder's.
    pub fn resync_decoder(&mut self) -> Result<()> {
        if self.mode != DecoderMode::Symmetric {
            return Ok(());
        }
        for (e, d) in self.tied_pairs()? {
            let enc_w = match &self.encoder.layers[e] {
                Layer::Dense(dense) => dense.w.transposed()?,
                _ => return Err(Error::dimension("tied pair is not dense")),
            };
            match &mut self.decoder.layers[d] {
                Layer::Dense(dense) => dense.w = enc_w,
                _ => return Err(Error::dimension("tied pair is not dense")),
            }
        }
        Ok(())
    }

    /// True when every decoder weight equals the tied encoder transpose
    /// exactly.
    pub fn symmetry_holds(&self) -> Result<bool> {
        for (e, d) in self.tied_pairs()? {
            let (Layer::Dense(enc), Layer::Dense(dec)) =
                (&self.encoder.layers[e], &self.decoder.layers[d])
            else {
                return Ok(false);
            };
            if enc.w.transposed()? != dec.w {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `x + N(0, sigma²)` elementwise, no clipping.
pub fn corrupt<S: Scalar>(x: &Tensor<S>, sigma: S, rng: &mut Rng) -> Result<Tensor<S>> {
    if sigma == S::zero() {
        return Ok(x.clone());
    }
    let noise = gaussian(rng, x.shape(), S::zero(), sigma)?;
    x.add(&noise)
}

/// Dense encoder: a dense + ReLU pair per hidden width.
pub fn build_dense_encoder<S: Scalar>(
    input_dim: usize,
    hidden: &[usize],
    rng: &mut Rng,
) -> LayerStack<S> {
    let mut enc_layers = Vec::new();
    let mut prev = input_dim;
    for &h in hidden {
        enc_layers.push(Layer::Dense(Dense::init(rng, prev, h)));
        enc_layers.push(Layer::Relu);
        prev = h;
    }
    LayerStack::new(enc_layers)
}

/// Mirrored dense decoder. Symmetric mode materializes the tied transposes
/// of the encoder weights (fresh zero biases, no extra draws); asymmetric
/// mode draws independent weights. ReLU between hidden layers, then the
/// requested output activation.
pub fn build_dense_decoder<S: Scalar>(
    encoder: &LayerStack<S>,
    input_dim: usize,
    hidden: &[usize],
    mode: DecoderMode,
    out_act: OutputActivation,
    rng: &mut Rng,
) -> Result<LayerStack<S>> {
    let mut dims: Vec<usize> = Vec::with_capacity(hidden.len() + 1);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    let mut dec_layers = Vec::new();
    for step in (1..dims.len()).rev() {
        let (from, to) = (dims[step], dims[step - 1]);
        let dense = match mode {
            DecoderMode::Asymmetric => Dense::init(rng, from, to),
            DecoderMode::Symmetric => {
                let enc_dense_idx = 2 * (step - 1);
                let Layer::Dense(enc_dense) = &encoder.layers[enc_dense_idx] else {
                    return Err(Error::dimension("encoder is not a dense/relu chain"));
                };
                Dense::from_parts(enc_dense.w.transposed()?, Tensor::zeros(&[to]))?
            }
        };
        dec_layers.push(Layer::Dense(dense));
        if step > 1 {
            dec_layers.push(Layer::Relu);
        }
    }
    if out_act == OutputActivation::Sigmoid {
        dec_layers.push(Layer::Sigmoid);
    }
    Ok(LayerStack::new(dec_layers))
}

/// Builds a dense denoising autoencoder: ReLU hidden layers, mirrored
/// decoder, and the requested output activation.
pub fn build_dense_dae<S: Scalar>(
    input_dim: usize,
    hidden: &[usize],
    mode: DecoderMode,
    out_act: OutputActivation,
    sigma: S,
    rng: &mut Rng,
) -> Result<DaeModel<S>> {
    if hidden.is_empty() {
        return Err(Error::parameter("autoencoder needs at least one hidden layer"));
    }
    let encoder = build_dense_encoder(input_dim, hidden, rng);
    let decoder = build_dense_decoder(&encoder, input_dim, hidden, mode, out_act, rng)?;
    Ok(DaeModel { encoder, decoder, mode, sigma, image: None })
}

// ---------------------------------------------------------------------------
// Confidence score
// ---------------------------------------------------------------------------

/// How the reconstruction Jacobian diagonal is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMethod {
    /// Exact reverse-mode derivatives. Stacks made of dense/activation
    /// layers use an algebraically identical chain evaluation that costs
    /// about as much as one forward pass; other stacks fall back to
    /// one-hot reverse passes over all `D` output coordinates.
    Exact,
    /// Central differences per coordinate with step [`ConfidenceParams::fd_step`].
    FiniteDiff,
}

/// Confidence hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams<S> {
    /// Sensitivity to the reconstruction error.
    pub alpha: S,
    /// Sensitivity to positive curvature.
    pub beta: S,
    /// Input dimensionality `D`.
    pub input_dim: usize,
    pub jacobian: JacobianMethod,
    pub fd_step: S,
    /// The curvature gate can be disabled for applications where it rejects
    /// too many valid samples; the report then uses gate = 1.
    pub use_gate: bool,
}

impl<S: Scalar> ConfidenceParams<S> {
    pub fn new(alpha: S, beta: S, input_dim: usize) -> Result<Self> {
        let params = ConfidenceParams {
            alpha,
            beta,
            input_dim,
            jacobian: JacobianMethod::Exact,
            fd_step: S::from_f(1e-4),
            use_gate: true,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= S::zero() {
            return Err(Error::parameter("alpha must be > 0"));
        }
        if self.beta <= S::zero() {
            return Err(Error::parameter("beta must be > 0"));
        }
        if self.fd_step <= S::zero() {
            return Err(Error::parameter("fd_step must be > 0"));
        }
        if self.input_dim == 0 {
            return Err(Error::parameter("input_dim must be >= 1"));
        }
        Ok(())
    }
}

/// Per-sample confidence evidence. `score == score_no_gate * gate` holds by
/// construction and is re-derivable from the stored fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceReport<S> {
    pub recon_error: S,
    pub gamma: S,
    pub gate: S,
    pub score_no_gate: S,
    pub score: S,
}

fn as_row<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    match x.rank() {
        1 => x.clone().reshaped(&[1, x.len()]),
        2 if x.shape()[0] == 1 => Ok(x.clone()),
        _ => Err(Error::dimension(format!(
            "expected a single sample [D] or [1, D], got {:?}",
            x.shape()
        ))),
    }
}

/// Vector of `∂r_i/∂x_i` for a single sample.
pub fn jacobian_diag<S: Scalar>(
    model: &DaeModel<S>,
    x: &Tensor<S>,
    params: &ConfidenceParams<S>,
) -> Result<Tensor<S>> {
    let row = as_row(x)?;
    match params.jacobian {
        JacobianMethod::Exact => jacobian_diag_exact(model, &row),
        JacobianMethod::FiniteDiff => jacobian_diag_fd(model, &row, params.fd_step),
    }
}

fn jacobian_diag_exact<S: Scalar>(model: &DaeModel<S>, row: &Tensor<S>) -> Result<Tensor<S>> {
    if model.image.is_none() && stacks_are_mlp(model) {
        let (_, enc_trace, dec_trace) = model.reconstruct_traced(row)?;
        chain_diag(model, &enc_trace, &dec_trace, row.len())
    } else {
        jacobian_diag_reverse(model, row)
    }
}

/// Exact diagonal from already-computed traces when the stack allows it;
/// `None` means the caller must fall back to the reverse route.
pub(crate) fn jacobian_diag_from_traces<S: Scalar>(
    model: &DaeModel<S>,
    enc_trace: &Trace<S>,
    dec_trace: &Trace<S>,
    d: usize,
) -> Option<Result<Tensor<S>>> {
    if model.image.is_none() && stacks_are_mlp(model) {
        Some(chain_diag(model, enc_trace, dec_trace, d))
    } else {
        None
    }
}

fn stacks_are_mlp<S>(model: &DaeModel<S>) -> bool {
    model
        .encoder
        .layers
        .iter()
        .chain(&model.decoder.layers)
        .all(|l| matches!(l, Layer::Dense(_) | Layer::Relu | Layer::Sigmoid | Layer::Flatten))
}

enum Stage<'a, S> {
    Mat(&'a Tensor<S>),
    Diag(Vec<S>),
}

fn stage_for<'a, S: Scalar>(layer: &'a Layer<S>, cache: &LayerCache<S>) -> Result<Option<Stage<'a, S>>> {
    match (layer, cache) {
        (Layer::Dense(d), _) => Ok(Some(Stage::Mat(&d.w))),
        (Layer::Relu, LayerCache::Input(x)) => Ok(Some(Stage::Diag(
            x.data().iter().map(|&v| if v > S::zero() { S::one() } else { S::zero() }).collect(),
        ))),
        (Layer::Sigmoid, LayerCache::Output(y)) => Ok(Some(Stage::Diag(
            y.data().iter().map(|&v| v * (S::one() - v)).collect(),
        ))),
        (Layer::Flatten, _) => Ok(None),
        _ => Err(Error::dimension("layer not supported by the chain Jacobian")),
    }
}

/// Exact Jacobian diagonal of an MLP reconstruction path by chaining
/// per-layer Jacobians right to left, extracting the diagonal at the final
/// dense layer instead of forming the full `D x D` product.
fn chain_diag<S: Scalar>(
    model: &DaeModel<S>,
    enc_trace: &Trace<S>,
    dec_trace: &Trace<S>,
    d: usize,
) -> Result<Tensor<S>> {
    let mut stages: Vec<Stage<S>> = Vec::new();
    for (layer, cache) in model
        .encoder
        .layers
        .iter()
        .zip(enc_trace.caches())
        .chain(model.decoder.layers.iter().zip(dec_trace.caches()))
    {
        if let Some(stage) = stage_for(layer, cache)? {
            stages.push(stage);
        }
    }

    let last_dense = stages.iter().rposition(|s| matches!(s, Stage::Mat(_)));
    let Some(last_dense) = last_dense else {
        // Pure elementwise map: the diagonal is the product of the stages.
        let mut diag = vec![S::one(); d];
        for stage in &stages {
            if let Stage::Diag(ds) = stage {
                for (o, &v) in diag.iter_mut().zip(ds) {
                    *o = *o * v;
                }
            }
        }
        return Tensor::new(&[d], diag);
    };

    // Running Jacobian of everything before the last dense layer, [width, D].
    // Activation diagonals before the first dense fold into `prediag`.
    let mut prediag = vec![S::one(); d];
    let mut running: Option<Tensor<S>> = None;
    for stage in &stages[..last_dense] {
        match stage {
            Stage::Diag(ds) => match &mut running {
                None => {
                    for (p, &v) in prediag.iter_mut().zip(ds) {
                        *p = *p * v;
                    }
                }
                Some(r) => {
                    let cols = r.shape()[1];
                    for (u, &v) in ds.iter().enumerate() {
                        for item in &mut r.data_mut()[u * cols..(u + 1) * cols] {
                            *item = *item * v;
                        }
                    }
                }
            },
            Stage::Mat(w) => {
                running = Some(match running.take() {
                    None => {
                        let (win, wout) = w.dims2()?;
                        if win != d {
                            return Err(Error::dimension("first dense width mismatch"));
                        }
                        let mut m = Tensor::zeros(&[wout, d]);
                        for o in 0..wout {
                            for (i, &p) in prediag.iter().enumerate() {
                                *m.at2_mut(o, i) = w.at2(i, o) * p;
                            }
                        }
                        m
                    }
                    Some(r) => w.matmul_tn(&r)?,
                });
            }
        }
    }

    let Stage::Mat(w_last) = &stages[last_dense] else { unreachable!() };
    let (win, wout) = w_last.dims2()?;
    if wout != d {
        return Err(Error::dimension("reconstruction output width mismatch"));
    }
    let mut diag = vec![S::zero(); d];
    match &running {
        None => {
            if win != d {
                return Err(Error::dimension("single dense layer must be square"));
            }
            for (i, v) in diag.iter_mut().enumerate() {
                *v = w_last.at2(i, i) * prediag[i];
            }
        }
        Some(r) => {
            for (i, v) in diag.iter_mut().enumerate() {
                let mut acc = S::zero();
                for u in 0..win {
                    acc = acc + w_last.at2(u, i) * r.at2(u, i);
                }
                *v = acc;
            }
        }
    }
    for stage in &stages[last_dense + 1..] {
        if let Stage::Diag(ds) = stage {
            for (v, &s) in diag.iter_mut().zip(ds) {
                *v = *v * s;
            }
        }
    }
    Tensor::new(&[d], diag)
}

/// Reference exact route: reverse-mode passes seeded with one-hot output
/// gradients, reading entry `i` of the input gradient. Batched in chunks to
/// amortize the matrix work; used directly for non-MLP stacks.
pub fn jacobian_diag_reverse<S: Scalar>(model: &DaeModel<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let row = as_row(x)?;
    let d = row.len();
    let chunk = 64.min(d);
    let mut diag = vec![S::zero(); d];
    let mut start = 0;
    while start < d {
        let b = chunk.min(d - start);
        let mut batch = Vec::with_capacity(b * d);
        for _ in 0..b {
            batch.extend_from_slice(row.data());
        }
        let batch = Tensor::new(&[b, d], batch)?;
        let xin = model.prep_input(&batch)?;
        let (feat, enc_trace) = model.encoder.forward_traced(&xin)?;
        let (rec, dec_trace) = model.decoder.forward_traced(&feat)?;
        let mut seed = Tensor::zeros(rec.shape());
        {
            let cols = d;
            for r in 0..b {
                seed.data_mut()[r * cols + start + r] = S::one();
            }
        }
        let (g_feat, _) = model.decoder.backward(&dec_trace, &seed)?;
        let (g_in, _) = model.encoder.backward(&enc_trace, &g_feat)?;
        for r in 0..b {
            diag[start + r] = g_in.data()[r * d + start + r];
        }
        start += b;
    }
    Tensor::new(&[d], diag)
}

fn jacobian_diag_fd<S: Scalar>(model: &DaeModel<S>, row: &Tensor<S>, h: S) -> Result<Tensor<S>> {
    let d = row.len();
    let mut probe = row.clone();
    let mut diag = vec![S::zero(); d];
    for (i, v) in diag.iter_mut().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = model.reconstruct(&probe)?.data()[i];
        probe.data_mut()[i] = orig - h;
        let minus = model.reconstruct(&probe)?.data()[i];
        probe.data_mut()[i] = orig;
        *v = (plus - minus) / (h + h);
    }
    Tensor::new(&[d], diag)
}

/// Average Jacobian-diagonal deviation from the identity,
/// `(1/D) Σ_i (∂r_i/∂x_i − 1)`.
pub fn curvature_gamma<S: Scalar>(
    model: &DaeModel<S>,
    x: &Tensor<S>,
    params: &ConfidenceParams<S>,
) -> Result<S> {
    let diag = jacobian_diag(model, x, params)?;
    Ok(diag.mean() - S::one())
}

/// Curvature gate: 1 on `gamma ≤ 0`, `exp(−beta·gamma)` above; continuous at 0.
pub fn gate<S: Scalar>(gamma: S, beta: S) -> S {
    if gamma <= S::zero() {
        S::one()
    } else {
        (-beta * gamma).exp()
    }
}

/// Score components from raw evidence; pure arithmetic shared by
/// [`confidence`] and the tests.
pub fn score_from<S: Scalar>(
    recon_error: S,
    gamma: S,
    params: &ConfidenceParams<S>,
) -> ConfidenceReport<S> {
    let score_no_gate =
        (-params.alpha / S::from_f(params.input_dim as f64) * recon_error).exp();
    let gate_value = if params.use_gate { gate(gamma, params.beta) } else { S::one() };
    ConfidenceReport {
        recon_error,
        gamma,
        gate: gate_value,
        score_no_gate,
        score: score_no_gate * gate_value,
    }
}

/// Full confidence report for a single sample.
pub fn confidence<S: Scalar>(
    model: &DaeModel<S>,
    x: &Tensor<S>,
    params: &ConfidenceParams<S>,
) -> Result<ConfidenceReport<S>> {
    params.validate()?;
    let row = as_row(x)?;
    if row.len() != params.input_dim {
        return Err(Error::dimension(format!(
            "input width {} does not match configured D = {}",
            row.len(),
            params.input_dim
        )));
    }
    let rec = model.reconstruct(&row)?;
    let recon_error = rec.sub(&row)?.l2_norm();
    let gamma = curvature_gamma(model, &row, params)?;
    Ok(score_from(recon_error, gamma, params))
}

/// `‖r(x)−x‖₂` together with its gradient with respect to the input,
/// `(Jᵀ−I)·u` with `u = (r(x)−x)/‖r(x)−x‖₂` (one reverse pass).
pub fn recon_error_with_input_grad<S: Scalar>(
    model: &DaeModel<S>,
    x: &Tensor<S>,
) -> Result<(S, Tensor<S>)> {
    let row = as_row(x)?;
    let (rec, enc_trace, dec_trace) = model.reconstruct_traced(&row)?;
    let resid = rec.sub(&row)?;
    let re = resid.l2_norm();
    if re == S::zero() {
        return Ok((re, Tensor::zeros(row.shape())));
    }
    let u = resid.scale(S::one() / re);
    let (g_feat, _) = model.decoder.backward(&dec_trace, &u)?;
    let (jt_u, _) = model.encoder.backward(&enc_trace, &g_feat)?;
    let jt_u = jt_u.clone().reshaped(row.shape())?;
    let grad = jt_u.sub(&u)?;
    Ok((re, grad))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Training duration: whole passes over the data or a fixed step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Epochs(usize),
    Steps(usize),
}

/// Shared training configuration for autoencoder and joint training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCfg<S> {
    pub schedule: Schedule,
    pub batch: usize,
    /// Weight of the reconstruction term in joint training.
    pub lambda_rec: S,
    /// L2 penalty `lambda·Σw²` over the master weight list.
    pub lambda_l2: S,
    pub adam: AdamParams<S>,
}

impl<S: Scalar> TrainCfg<S> {
    pub fn new(schedule: Schedule, batch: usize) -> Self {
        TrainCfg {
            schedule,
            batch,
            lambda_rec: S::one(),
            lambda_l2: S::zero(),
            adam: AdamParams::default(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::parameter("training data is empty"));
        }
        if self.batch == 0 {
            return Err(Error::parameter("batch size must be >= 1"));
        }
        self.adam.validate()
    }
}

/// Minibatch index stream: shuffled once per pass over the data.
///
/// Epoch schedules include the final partial batch of each pass; step
/// schedules always return full batches, reshuffling when the tail is too
/// short. Owning its RNG keeps batch order independent of other draws.
pub(crate) struct Batches {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: Rng,
}

impl Batches {
    pub(crate) fn new(n: usize, batch: usize, mut rng: Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        Batches { order, pos: 0, batch: batch.min(n), rng }
    }

    /// Total minibatch count implied by a schedule.
    pub(crate) fn total_steps(n: usize, batch: usize, schedule: Schedule) -> usize {
        match schedule {
            Schedule::Steps(s) => s,
            Schedule::Epochs(e) => e * n.div_ceil(batch.min(n).max(1)),
        }
    }

    /// Next chunk under epoch semantics (partial tail batches allowed).
    pub(crate) fn next_epoch_chunk(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let chunk = self.order[self.pos..end].to_vec();
        self.pos = end;
        chunk
    }

    /// Next chunk under step semantics (always a full batch).
    pub(crate) fn next_full_chunk(&mut self) -> Vec<usize> {
        if self.pos + self.batch > self.order.len() {
            self.rng.shuffle(&mut self.order);
            self.pos = 0;
        }
        let chunk = self.order[self.pos..self.pos + self.batch].to_vec();
        self.pos += self.batch;
        chunk
    }

    pub(crate) fn next_chunk(&mut self, schedule: Schedule) -> Vec<usize> {
        match schedule {
            Schedule::Epochs(_) => self.next_epoch_chunk(),
            Schedule::Steps(_) => self.next_full_chunk(),
        }
    }
}

/// Trains the autoencoder to reconstruct clean inputs from corrupted ones.
///
/// Loss per step: mean over the batch of `‖r(corrupt(x)) − x‖²` plus
/// `lambda_l2·Σw²`. Returns the per-step loss curve.
pub fn train_dae<S: Scalar>(
    model: &mut DaeModel<S>,
    data: &Tensor<S>,
    cfg: &TrainCfg<S>,
    rng: &mut Rng,
) -> Result<Vec<S>> {
    let (n, _) = data.dims2()?;
    cfg.validate(n)?;
    let shuffle_rng = rng.split();
    let mut noise_rng = rng.split();
    let mut adam = Adam::new(cfg.adam);
    let mut curve = Vec::new();
    let sigma = model.sigma;

    let total = Batches::total_steps(n, cfg.batch, cfg.schedule);
    let mut batches = Batches::new(n, cfg.batch, shuffle_rng);
    for _ in 0..total {
        let idx = batches.next_chunk(cfg.schedule);
        let clean = data.gather_rows(&idx)?;
        let corrupted = corrupt(&clean, sigma, &mut noise_rng)?;
        let xin = model.prep_input(&corrupted)?;
        let (feat, enc_trace) = model.encoder.forward_traced(&xin)?;
        let (rec, dec_trace) = model.decoder.forward_traced(&feat)?;
        let rec = model.flatten_output(rec, idx.len())?;
        let mut loss = mse_per_sample(&rec, &clean)?;
        let g_rec = mse_grad(&rec, &clean)?;
        let (g_feat, mut dec_grads) = model.decoder.backward(&dec_trace, &g_rec)?;
        let (_, mut enc_grads) = model.encoder.backward(&enc_trace, &g_feat)?;
        if cfg.lambda_l2 > S::zero() {
            let mut norm = model.encoder.weight_norm_sq();
            model.encoder.add_weight_decay(&mut enc_grads, cfg.lambda_l2)?;
            if model.mode == DecoderMode::Asymmetric {
                norm = norm + model.decoder.weight_norm_sq();
                model.decoder.add_weight_decay(&mut dec_grads, cfg.lambda_l2)?;
            }
            loss = loss + cfg.lambda_l2 * norm;
        }
        model.fold_symmetric_grads(&mut enc_grads, &dec_grads)?;
        adam.begin_step();
        apply_stack_updates(&mut adam, &mut model.encoder, &enc_grads, false)?;
        apply_stack_updates(
            &mut adam,
            &mut model.decoder,
            &dec_grads,
            model.mode == DecoderMode::Symmetric,
        )?;
        model.resync_decoder()?;
        curve.push(loss);
    }
    Ok(curve)
}

/// Adam-updates every parameter of a stack in canonical order;
/// `biases_only` skips weight tensors (tied symmetric decoders).
pub(crate) fn apply_stack_updates<S: Scalar>(
    adam: &mut Adam<S>,
    stack: &mut LayerStack<S>,
    grads: &StackGrads<S>,
    biases_only: bool,
) -> Result<()> {
    for (layer, lg) in stack.layers.iter_mut().zip(&grads.per_layer) {
        match (layer, lg) {
            (Layer::Dense(d), crate::nn::LayerGrads::Pair { w, b }) => {
                if !biases_only {
                    adam.update(&mut d.w, w)?;
                }
                adam.update(&mut d.b, b)?;
            }
            (Layer::Conv2d(c), crate::nn::LayerGrads::Pair { w, b }) => {
                if !biases_only {
                    adam.update(&mut c.w, w)?;
                }
                adam.update(&mut c.b, b)?;
            }
            _ => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dense(d: usize) -> Dense<f64> {
        let mut w = Tensor::zeros(&[d, d]);
        for i in 0..d {
            *w.at2_mut(i, i) = 1.0;
        }
        Dense::from_parts(w, Tensor::zeros(&[d])).unwrap()
    }

    fn linear_model(w: Tensor<f64>) -> DaeModel<f64> {
        let d = w.shape()[1];
        DaeModel {
            encoder: LayerStack::new(vec![Layer::Dense(
                Dense::from_parts(w, Tensor::zeros(&[d])).unwrap(),
            )]),
            decoder: LayerStack::empty(),
            mode: DecoderMode::Asymmetric,
            sigma: 0.0,
            image: None,
        }
    }

    #[test]
    fn corrupt_zero_sigma_is_identity() {
        let mut rng = Rng::seed_from(2);
        let x = Tensor::new(&[2, 3], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(corrupt(&x, 0.0, &mut rng).unwrap(), x);
    }

    #[test]
    fn corrupt_noise_std_matches_sigma() {
        let mut rng = Rng::seed_from(3);
        let x = Tensor::<f64>::zeros(&[1, 100_000]);
        let noisy = corrupt(&x, 0.2, &mut rng).unwrap();
        let mean = noisy.mean();
        let var = noisy.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (noisy.len() as f64 - 1.0);
        assert!((var.sqrt() - 0.2).abs() < 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn split_seed_corruptions_are_uncorrelated() {
        let mut master = Rng::seed_from(4);
        let mut rng_a = master.split();
        let mut rng_b = master.split();
        let x = Tensor::<f64>::zeros(&[1, 100_000]);
        let a = corrupt(&x, 1.0, &mut rng_a).unwrap();
        let b = corrupt(&x, 1.0, &mut rng_b).unwrap();
        let corr = a.dot(&b).unwrap() / (a.l2_norm() * b.l2_norm());
        assert!(corr.abs() < 0.01, "correlation {corr}");
    }

    #[test]
    fn zero_weight_sigmoid_decoder_outputs_half() {
        let enc = LayerStack::new(vec![Layer::Dense(
            Dense::from_parts(Tensor::zeros(&[4, 3]), Tensor::zeros(&[3])).unwrap(),
        )]);
        let dec = LayerStack::new(vec![
            Layer::Dense(Dense::from_parts(Tensor::zeros(&[3, 4]), Tensor::zeros(&[4])).unwrap()),
            Layer::Sigmoid,
        ]);
        let model = DaeModel {
            encoder: enc,
            decoder: dec,
            mode: DecoderMode::Asymmetric,
            sigma: 0.0,
            image: None,
        };
        let x = Tensor::new(&[1, 4], vec![0.9, 0.1, 0.4, 0.7]).unwrap();
        let r = model.reconstruct(&x).unwrap();
        assert_eq!(r.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn identity_autoencoder_reconstructs_exactly() {
        let model = linear_model({
            let mut w = Tensor::zeros(&[3, 3]);
            for i in 0..3 {
                *w.at2_mut(i, i) = 1.0;
            }
            w
        });
        let x = Tensor::new(&[1, 3], vec![0.3, -0.7, 2.0]).unwrap();
        assert_eq!(model.reconstruct(&x).unwrap(), x);
        assert_eq!(model.recon_error(&x).unwrap(), 0.0);
    }

    #[test]
    fn recon_error_pythagorean() {
        // Encoder maps anything to b = [3, 4]; input [0, 0] gives error 5.
        let enc = LayerStack::new(vec![Layer::Dense(
            Dense::from_parts(
                Tensor::zeros(&[2, 2]),
                Tensor::new(&[2], vec![3.0, 4.0]).unwrap(),
            )
            .unwrap(),
        )]);
        let model = DaeModel {
            encoder: enc,
            decoder: LayerStack::empty(),
            mode: DecoderMode::Asymmetric,
            sigma: 0.0,
            image: None,
        };
        let x = Tensor::new(&[1, 2], vec![0.0, 0.0]).unwrap();
        assert_eq!(model.recon_error(&x).unwrap(), 5.0);
    }

    #[test]
    fn recon_error_matches_composed_oracle() {
        let mut rng = Rng::seed_from(71);
        let model =
            build_dense_dae::<f64>(6, &[5], DecoderMode::Asymmetric, OutputActivation::Sigmoid, 0.1, &mut rng)
                .unwrap();
        let x = crate::tensor::gaussian(&mut rng, &[1, 6], 0.0, 1.0).unwrap();
        let re = model.recon_error(&x).unwrap();
        let oracle = model.reconstruct(&x).unwrap().sub(&x).unwrap().l2_norm();
        assert!((re - oracle).abs() < 1e-12);
    }

    #[test]
    fn jacobian_diag_of_linear_map_is_weight_diagonal() {
        let mut rng = Rng::seed_from(13);
        let w: Tensor<f64> = crate::tensor::gaussian(&mut rng, &[4, 4], 0.0, 1.0).unwrap();
        let model = linear_model(w.clone());
        let x = crate::tensor::gaussian(&mut rng, &[1, 4], 0.0, 1.0).unwrap();
        let params = ConfidenceParams::new(1.0, 1.0, 4).unwrap();
        let exact = jacobian_diag(&model, &x, &params).unwrap();
        for i in 0..4 {
            assert_eq!(exact.data()[i], w.at2(i, i), "exact mode reads the diagonal verbatim");
        }
        let fd_params = ConfidenceParams { jacobian: JacobianMethod::FiniteDiff, ..params };
        let fd = jacobian_diag(&model, &x, &fd_params).unwrap();
        for i in 0..4 {
            assert!((fd.data()[i] - w.at2(i, i)).abs() < 1e-6);
        }
    }

    #[test]
    fn jacobian_diag_identity_map_is_ones() {
        let model = linear_model({
            let mut w = Tensor::zeros(&[3, 3]);
            for i in 0..3 {
                *w.at2_mut(i, i) = 1.0;
            }
            w
        });
        let params = ConfidenceParams::new(1.0, 1.0, 3).unwrap();
        let x = Tensor::new(&[1, 3], vec![0.2, 0.4, 0.8]).unwrap();
        let diag = jacobian_diag(&model, &x, &params).unwrap();
        assert_eq!(diag.data(), &[1.0, 1.0, 1.0]);
        assert_eq!(curvature_gamma(&model, &x, &params).unwrap(), 0.0);
    }

    #[test]
    fn chain_diag_matches_reverse_and_fd_on_nonlinear_model() {
        let mut rng = Rng::seed_from(99);
        let model = build_dense_dae::<f64>(
            10,
            &[8, 6],
            DecoderMode::Asymmetric,
            OutputActivation::Sigmoid,
            0.0,
            &mut rng,
        )
        .unwrap();
        let x = crate::tensor::gaussian(&mut rng, &[1, 10], 0.0, 1.0).unwrap();
        let params = ConfidenceParams::new(1.0, 1.0, 10).unwrap();
        let chain = jacobian_diag(&model, &x, &params).unwrap();
        let reverse = jacobian_diag_reverse(&model, &x).unwrap();
        for (c, r) in chain.data().iter().zip(reverse.data()) {
            assert!((c - r).abs() < 1e-12, "chain {c} vs reverse {r}");
        }
        let fd_params = ConfidenceParams { jacobian: JacobianMethod::FiniteDiff, ..params };
        let fd = jacobian_diag(&model, &x, &fd_params).unwrap();
        for (c, f) in chain.data().iter().zip(fd.data()) {
            assert!(crate::gradcheck::rel_err(*c, *f) < 1e-4, "chain {c} vs fd {f}");
        }
    }

    #[test]
    fn gamma_of_contractive_map_is_closed_form() {
        let model = linear_model({
            let mut w = Tensor::zeros(&[5, 5]);
            for i in 0..5 {
                *w.at2_mut(i, i) = 0.5;
            }
            w
        });
        let params = ConfidenceParams::new(1.0, 1.0, 5).unwrap();
        let x = Tensor::new(&[1, 5], vec![0.1; 5]).unwrap();
        let g = curvature_gamma(&model, &x, &params).unwrap();
        assert!((g + 0.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_recomposition_oracle() {
        let mut rng = Rng::seed_from(55);
        let model = build_dense_dae::<f64>(
            7,
            &[6],
            DecoderMode::Symmetric,
            OutputActivation::Linear,
            0.0,
            &mut rng,
        )
        .unwrap();
        let x = crate::tensor::gaussian(&mut rng, &[1, 7], 0.0, 1.0).unwrap();
        let params = ConfidenceParams::new(1.0, 1.0, 7).unwrap();
        let g = curvature_gamma(&model, &x, &params).unwrap();
        let diag = jacobian_diag(&model, &x, &params).unwrap();
        let oracle = diag.data().iter().map(|v| v - 1.0).sum::<f64>() / 7.0;
        assert!((g - oracle).abs() < 1e-12);
    }

    #[test]
    fn gate_piecewise_values() {
        assert_eq!(gate(-0.3, 123.0), 1.0);
        assert_eq!(gate(0.0, 5.0), 1.0);
        assert!((gate(0.1, 10.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((gate(0.1, 10.0) - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn gate_is_continuous_at_zero() {
        for beta in [0.5, 5.0, 50.0] {
            let eps = 1e-12;
            assert!((gate(eps, beta) - gate(-eps, beta)).abs() < 1e-9);
        }
    }

    #[test]
    fn score_trivial_cases() {
        let params = ConfidenceParams::new(40.0, 5.0, 2).unwrap();
        let perfect = score_from(0.0, -0.1, &params);
        assert_eq!(perfect.score, 1.0);

        // recon_error = D/alpha with non-positive curvature gives e^-1.
        let d_over_alpha = 2.0 / 40.0;
        let r = score_from(d_over_alpha, 0.0, &params);
        assert!((r.score - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn score_factorization_identity() {
        let params = ConfidenceParams::new(7.0, 3.0, 4).unwrap();
        let mut rng = Rng::seed_from(12);
        for _ in 0..100 {
            let re = rng.next_f64() * 5.0;
            let gamma = rng.next_range(-1.0, 1.0);
            let report = score_from(re, gamma, &params);
            assert!((report.score - report.score_no_gate * report.gate).abs() < 1e-12);
            assert!(report.score > 0.0 && report.score <= 1.0);
        }
    }

    #[test]
    fn symmetric_mode_stays_tied_through_training() {
        let mut rng = Rng::seed_from(31);
        let mut model = build_dense_dae::<f64>(
            6,
            &[5, 4],
            DecoderMode::Symmetric,
            OutputActivation::Linear,
            0.1,
            &mut rng,
        )
        .unwrap();
        assert!(model.symmetry_holds().unwrap());
        let data = crate::tensor::gaussian(&mut rng, &[32, 6], 0.0, 1.0).unwrap();
        let cfg = TrainCfg::new(Schedule::Steps(25), 8);
        train_dae(&mut model, &data, &cfg, &mut rng).unwrap();
        assert!(model.symmetry_holds().unwrap());
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged() {
        let mut rng = Rng::seed_from(41);
        let mut model = build_dense_dae::<f64>(
            4,
            &[3],
            DecoderMode::Asymmetric,
            OutputActivation::Linear,
            0.1,
            &mut rng,
        )
        .unwrap();
        let before = model.clone();
        let data = crate::tensor::gaussian(&mut rng, &[8, 4], 0.0, 1.0).unwrap();
        let cfg = TrainCfg::new(Schedule::Epochs(0), 4);
        let curve = train_dae(&mut model, &data, &cfg, &mut rng).unwrap();
        assert!(curve.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let run = || {
            let mut rng = Rng::seed_from(2024);
            let mut model = build_dense_dae::<f64>(
                4,
                &[3],
                DecoderMode::Symmetric,
                OutputActivation::Linear,
                0.2,
                &mut rng,
            )
            .unwrap();
            let data = crate::tensor::gaussian(&mut rng, &[40, 4], 0.0, 1.0).unwrap();
            let cfg = TrainCfg::new(Schedule::Steps(30), 8);
            train_dae(&mut model, &data, &cfg, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_data_is_a_parameter_error() {
        let mut rng = Rng::seed_from(1);
        let mut model = build_dense_dae::<f64>(
            4,
            &[3],
            DecoderMode::Asymmetric,
            OutputActivation::Linear,
            0.1,
            &mut rng,
        )
        .unwrap();
        let data = Tensor::<f64>::zeros(&[0, 4]);
        let cfg = TrainCfg::new(Schedule::Epochs(1), 4);
        assert!(matches!(
            train_dae(&mut model, &data, &cfg, &mut rng),
            Err(Error::Parameter(_))
        ));
    }
}
