//! Layer kinds and the layer stack.
//!
//! Supported layers: dense, 2-D convolution (valid padding, stride 1),
//! 2x2 max pooling (stride 2), flatten, ReLU, sigmoid, and row-wise softmax.
//! Dense inputs are `[batch, features]`; convolution and pooling inputs are
//! `[batch, channels, height, width]`.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{uniform, Tensor};

/// Fully connected layer; `w` is `[in, out]`, `b` is `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

impl<S: Scalar> Dense<S> {
    /// Glorot-uniform weights in `±sqrt(6/(fan_in+fan_out))`, zero bias.
    pub fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Self {
        let limit = S::from_f((6.0 / (fan_in + fan_out) as f64).sqrt());
        let w = uniform(rng, &[fan_in, fan_out], -limit, limit).expect("valid bounds");
        Dense { w, b: Tensor::zeros(&[fan_out]) }
    }

    pub fn from_parts(w: Tensor<S>, b: Tensor<S>) -> Result<Self> {
        let (_, out) = w.dims2()?;
        if b.shape() != [out] {
            return Err(Error::dimension(format!(
                "dense bias {:?} does not match weight {:?}",
                b.shape(),
                w.shape()
            )));
        }
        Ok(Dense { w, b })
    }

    pub fn in_width(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_width(&self) -> usize {
        self.w.shape()[1]
    }
}

/// 2-D convolution; `w` is `[out_ch, in_ch, kh, kw]`, `b` is `[out_ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

impl<S: Scalar> Conv2d<S> {
    pub fn init(rng: &mut Rng, in_ch: usize, out_ch: usize, kh: usize, kw: usize) -> Self {
        let fan_in = in_ch * kh * kw;
        let fan_out = out_ch * kh * kw;
        let limit = S::from_f((6.0 / (fan_in + fan_out) as f64).sqrt());
        let w = uniform(rng, &[out_ch, in_ch, kh, kw], -limit, limit).expect("valid bounds");
        Conv2d { w, b: Tensor::zeros(&[out_ch]) }
    }
}

/// One layer of a [`LayerStack`].
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<S> {
    Dense(Dense<S>),
    Conv2d(Conv2d<S>),
    MaxPool2x2,
    Flatten,
    Relu,
    Sigmoid,
    Softmax,
}

impl<S> Layer<S> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2x2 => "maxpool2x2",
            Layer::Flatten => "flatten",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Softmax => "softmax",
        }
    }
}

/// Per-layer activation record kept by `forward_traced` for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache<S> {
    None,
    /// Layer input (dense, conv, relu).
    Input(Tensor<S>),
    /// Layer output (sigmoid, softmax).
    Output(Tensor<S>),
    /// Input shape only (flatten).
    Shape(Vec<usize>),
    /// Pooling: input shape plus the flat input index of each window maximum.
    Pool { in_shape: Vec<usize>, argmax: Vec<usize> },
}

/// Activations recorded during a traced forward pass.
///
/// A trace is only meaningful for the exact stack and input that produced it;
/// `backward` consumes it by reference, so one forward can back several
/// upstream gradients if needed.
#[derive(Debug, Clone)]
pub struct Trace<S> {
    caches: Vec<LayerCache<S>>,
}

impl<S> Trace<S> {
    /// Per-layer activation records, aligned with the stack's layers.
    pub fn caches(&self) -> &[LayerCache<S>] {
        &self.caches
    }
}

/// Parameter gradients for one layer.
#[derive(Debug, Clone)]
pub enum LayerGrads<S> {
    None,
    Pair { w: Tensor<S>, b: Tensor<S> },
}

/// Parameter gradients for a whole stack, aligned with its layers.
#[derive(Debug, Clone)]
pub struct StackGrads<S> {
    pub per_layer: Vec<LayerGrads<S>>,
}

impl<S: Scalar> StackGrads<S> {
    /// Zero gradients shaped like the stack's parameters.
    pub fn zeros_for(stack: &LayerStack<S>) -> Self {
        let per_layer = stack
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Dense(d) => {
                    LayerGrads::Pair { w: d.w.zeros_like(), b: d.b.zeros_like() }
                }
                Layer::Conv2d(c) => {
                    LayerGrads::Pair { w: c.w.zeros_like(), b: c.b.zeros_like() }
                }
                _ => LayerGrads::None,
            })
            .collect();
        StackGrads { per_layer }
    }

    pub fn add_assign(&mut self, other: &StackGrads<S>) -> Result<()> {
        if self.per_layer.len() != other.per_layer.len() {
            return Err(Error::dimension("gradient layer counts differ"));
        }
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            match (a, b) {
                (LayerGrads::None, LayerGrads::None) => {}
                (
                    LayerGrads::Pair { w: aw, b: ab },
                    LayerGrads::Pair { w: bw, b: bb },
                ) => {
                    aw.add_assign(bw)?;
                    ab.add_assign(bb)?;
                }
                _ => return Err(Error::dimension("gradient layer kinds differ")),
            }
        }
        Ok(())
    }

    /// Gradient tensors in parameter order (w then b per parameterized layer).
    pub fn flat(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        for lg in &self.per_layer {
            if let LayerGrads::Pair { w, b } = lg {
                out.push(w);
                out.push(b);
            }
        }
        out
    }
}

/// An ordered sequence of layers applied left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack<S> {
    pub layers: Vec<Layer<S>>,
}

impl<S: Scalar> LayerStack<S> {
    pub fn new(layers: Vec<Layer<S>>) -> Self {
        LayerStack { layers }
    }

    pub fn empty() -> Self {
        LayerStack { layers: Vec::new() }
    }

    /// Evaluation-mode forward; records nothing.
    pub fn forward(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, _) = forward_layer(layer, &cur, false)?;
            cur = next;
        }
        Ok(cur)
    }

    /// Training-mode forward; records the activations backward needs.
    pub fn forward_traced(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Trace<S>)> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = forward_layer(layer, &cur, true)?;
            caches.push(cache);
            cur = next;
        }
        Ok((cur, Trace { caches }))
    }

    /// Reverse-mode pass: exact gradients of the traced forward map.
    ///
    /// Returns the gradient with respect to the stack input along with the
    /// parameter gradients.
    pub fn backward(&self, trace: &Trace<S>, grad_out: &Tensor<S>) -> Result<(Tensor<S>, StackGrads<S>)> {
        if trace.caches.len() != self.layers.len() {
            return Err(Error::dimension("trace does not match stack"));
        }
        let mut grad = grad_out.clone();
        let mut per_layer = vec![LayerGrads::None; self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gin, lgrads) = backward_layer(layer, &trace.caches[i], &grad)?;
            per_layer[i] = lgrads;
            grad = gin;
        }
        Ok((grad, StackGrads { per_layer }))
    }

    /// Mutable references to every parameter tensor, in canonical order.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(&mut d.w);
                    out.push(&mut d.b);
                }
                Layer::Conv2d(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_tensors(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(&d.w);
                    out.push(&d.b);
                }
                Layer::Conv2d(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                _ => {}
            }
        }
        out
    }

    /// Indices of dense layers, in order (used for symmetric weight tying).
    pub fn dense_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, Layer::Dense(_)).then_some(i))
            .collect()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm_sq(&self) -> S {
        let mut acc = S::zero();
        for layer in &self.layers {
            let w = match layer {
                Layer::Dense(d) => &d.w,
                Layer::Conv2d(c) => &c.w,
                _ => continue,
            };
            for &v in w.data() {
                acc = acc + v * v;
            }
        }
        acc
    }

    /// Adds `2·lambda·w` to every weight gradient (L2 penalty `lambda·Σw²`).
    pub fn add_weight_decay(&self, grads: &mut StackGrads<S>, lambda: S) -> Result<()> {
        let two_lambda = lambda + lambda;
        for (layer, lg) in self.layers.iter().zip(grads.per_layer.iter_mut()) {
            let w = match layer {
                Layer::Dense(d) => &d.w,
                Layer::Conv2d(c) => &c.w,
                _ => continue,
            };
            match lg {
                LayerGrads::Pair { w: gw, .. } => {
                    for (g, &v) in gw.data_mut().iter_mut().zip(w.data()) {
                        *g = *g + two_lambda * v;
                    }
                }
                LayerGrads::None => {
                    return Err(Error::dimension("weight decay on gradient-less layer"))
                }
            }
        }
        Ok(())
    }
}

fn forward_layer<S: Scalar>(
    layer: &Layer<S>,
    x: &Tensor<S>,
    trace: bool,
) -> Result<(Tensor<S>, LayerCache<S>)> {
    match layer {
        Layer::Dense(d) => {
            let (_, cols) = x.dims2().map_err(|_| {
                Error::dimension(format!("dense layer expects [batch, in], got {:?}", x.shape()))
            })?;
            if cols != d.in_width() {
                return Err(Error::dimension(format!(
                    "dense layer expects width {}, got {}",
                    d.in_width(),
                    cols
                )));
            }
            let out = x.matmul(&d.w)?.add_row_vec(&d.b)?;
            let cache = if trace { LayerCache::Input(x.clone()) } else { LayerCache::None };
            Ok((out, cache))
        }
        Layer::Conv2d(c) => {
            let out = conv2d_forward(c, x)?;
            let cache = if trace { LayerCache::Input(x.clone()) } else { LayerCache::None };
            Ok((out, cache))
        }
        Layer::MaxPool2x2 => {
            let (out, argmax) = maxpool_forward(x)?;
            let cache = if trace {
                LayerCache::Pool { in_shape: x.shape().to_vec(), argmax }
            } else {
                LayerCache::None
            };
            Ok((out, cache))
        }
        Layer::Flatten => {
            if x.rank() < 2 {
                return Err(Error::dimension("flatten expects rank >= 2"));
            }
            let batch = x.shape()[0];
            let rest: usize = x.shape()[1..].iter().product();
            let out = x.clone().reshaped(&[batch, rest])?;
            let cache =
                if trace { LayerCache::Shape(x.shape().to_vec()) } else { LayerCache::None };
            Ok((out, cache))
        }
        Layer::Relu => {
            let out = x.map(|v| if v > S::zero() { v } else { S::zero() });
            let cache = if trace { LayerCache::Input(x.clone()) } else { LayerCache::None };
            Ok((out, cache))
        }
        Layer::Sigmoid => {
            let out = x.map(|v| S::one() / (S::one() + (-v).exp()));
            let cache = if trace { LayerCache::Output(out.clone()) } else { LayerCache::None };
            Ok((out, cache))
        }
        Layer::Softmax => {
            let out = softmax_rows(x)?;
            let cache = if trace { LayerCache::Output(out.clone()) } else { LayerCache::None };
            Ok((out, cache))
        }
    }
}

fn backward_layer<S: Scalar>(
    layer: &Layer<S>,
    cache: &LayerCache<S>,
    g: &Tensor<S>,
) -> Result<(Tensor<S>, LayerGrads<S>)> {
    match (layer, cache) {
        (Layer::Dense(d), LayerCache::Input(x)) => {
            let gw = x.matmul_tn(g)?;
            let gb = g.col_sum()?;
            let gin = g.matmul_nt(&d.w)?;
            Ok((gin, LayerGrads::Pair { w: gw, b: gb }))
        }
        (Layer::Conv2d(c), LayerCache::Input(x)) => {
            let (gin, gw, gb) = conv2d_backward(c, x, g)?;
            Ok((gin, LayerGrads::Pair { w: gw, b: gb }))
        }
        (Layer::MaxPool2x2, LayerCache::Pool { in_shape, argmax }) => {
            let mut gin = Tensor::zeros(in_shape);
            for (&src, &gv) in argmax.iter().zip(g.data()) {
                gin.data_mut()[src] = gin.data_mut()[src] + gv;
            }
            Ok((gin, LayerGrads::None))
        }
        (Layer::Flatten, LayerCache::Shape(in_shape)) => {
            Ok((g.clone().reshaped(in_shape)?, LayerGrads::None))
        }
        (Layer::Relu, LayerCache::Input(x)) => {
            let data = x
                .data()
                .iter()
                .zip(g.data())
                .map(|(&xv, &gv)| if xv > S::zero() { gv } else { S::zero() })
                .collect();
            Ok((Tensor::new(x.shape(), data)?, LayerGrads::None))
        }
        (Layer::Sigmoid, LayerCache::Output(y)) => {
            let data = y
                .data()
                .iter()
                .zip(g.data())
                .map(|(&yv, &gv)| gv * yv * (S::one() - yv))
                .collect();
            Ok((Tensor::new(y.shape(), data)?, LayerGrads::None))
        }
        (Layer::Softmax, LayerCache::Output(p)) => {
            let (rows, cols) = p.dims2()?;
            let mut out = vec![S::zero(); rows * cols];
            for r in 0..rows {
                let prow = p.row(r);
                let grow = g.row(r);
                let mut dot = S::zero();
                for (&pv, &gv) in prow.iter().zip(grow) {
                    dot = dot + pv * gv;
                }
                for j in 0..cols {
                    out[r * cols + j] = prow[j] * (grow[j] - dot);
                }
            }
            Ok((Tensor::new(p.shape(), out)?, LayerGrads::None))
        }
        _ => Err(Error::dimension(format!(
            "backward on {} without a matching trace",
            layer.kind_name()
        ))),
    }
}

/// Row-wise softmax of a `[batch, k]` tensor, max-shifted for stability.
pub fn softmax_rows<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (rows, cols) = x
        .dims2()
        .map_err(|_| Error::dimension(format!("softmax expects [batch, k], got {:?}", x.shape())))?;
    if cols == 0 {
        return Err(Error::dimension("softmax over zero columns"));
    }
    let mut out = vec![S::zero(); rows * cols];
    for r in 0..rows {
        let row = x.row(r);
        let mut max = row[0];
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let orow = &mut out[r * cols..(r + 1) * cols];
        let mut sum = S::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - max).exp();
            sum = sum + *o;
        }
        for o in orow.iter_mut() {
            *o = *o / sum;
        }
    }
    Tensor::new(&[rows, cols], out)
}

fn dims4<S: Scalar>(x: &Tensor<S>, what: &str) -> Result<(usize, usize, usize, usize)> {
    match x.shape() {
        &[n, c, h, w] => Ok((n, c, h, w)),
        other => Err(Error::dimension(format!("{what} expects [n, c, h, w], got {other:?}"))),
    }
}

fn conv2d_forward<S: Scalar>(conv: &Conv2d<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, ic, h, w) = dims4(x, "conv2d")?;
    let &[oc, wic, kh, kw] = conv.w.shape() else {
        return Err(Error::dimension("conv2d weight must be rank 4"));
    };
    if wic != ic {
        return Err(Error::dimension(format!("conv2d expects {wic} input channels, got {ic}")));
    }
    if kh > h || kw > w {
        return Err(Error::dimension(format!("kernel {kh}x{kw} larger than input {h}x{w}")));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let xd = x.data();
    let wd = conv.w.data();
    let bd = conv.b.data();
    let mut out = vec![S::zero(); n * oc * oh * ow];
    for b in 0..n {
        for o in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bd[o];
                    for c in 0..ic {
                        for u in 0..kh {
                            let xrow = (b * ic + c) * h * w + (i + u) * w + j;
                            let wrow = ((o * ic + c) * kh + u) * kw;
                            for v in 0..kw {
                                acc = acc + wd[wrow + v] * xd[xrow + v];
                            }
                        }
                    }
                    out[((b * oc + o) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, oc, oh, ow], out)
}

fn conv2d_backward<S: Scalar>(
    conv: &Conv2d<S>,
    x: &Tensor<S>,
    g: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let (n, ic, h, w) = dims4(x, "conv2d backward")?;
    let &[oc, _, kh, kw] = conv.w.shape() else {
        return Err(Error::dimension("conv2d weight must be rank 4"));
    };
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    if g.shape() != [n, oc, oh, ow] {
        return Err(Error::dimension(format!(
            "conv2d upstream gradient {:?}, expected {:?}",
            g.shape(),
            [n, oc, oh, ow]
        )));
    }
    let xd = x.data();
    let gd = g.data();
    let wd = conv.w.data();
    let mut gw = vec![S::zero(); conv.w.len()];
    let mut gb = vec![S::zero(); oc];
    let mut gin = vec![S::zero(); x.len()];
    for b in 0..n {
        for o in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let gv = gd[((b * oc + o) * oh + i) * ow + j];
                    gb[o] = gb[o] + gv;
                    for c in 0..ic {
                        for u in 0..kh {
                            let xrow = (b * ic + c) * h * w + (i + u) * w + j;
                            let wrow = ((o * ic + c) * kh + u) * kw;
                            for v in 0..kw {
                                gw[wrow + v] = gw[wrow + v] + gv * xd[xrow + v];
                                gin[xrow + v] = gin[xrow + v] + gv * wd[wrow + v];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape(), gin)?,
        Tensor::new(conv.w.shape(), gw)?,
        Tensor::new(&[oc], gb)?,
    ))
}

fn maxpool_forward<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, Vec<usize>)> {
    let (n, c, h, w) = dims4(x, "maxpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dimension(format!("maxpool2x2 needs even extents, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![S::zero(); n * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    for b in 0..n {
        for ch in 0..c {
            let plane = (b * c + ch) * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    // First maximum in row-major scan wins ties.
                    let mut best_idx = plane + (2 * i) * w + 2 * j;
                    let mut best = xd[best_idx];
                    for (du, dv) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = plane + (2 * i + du) * w + 2 * j + dv;
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                    let oidx = ((b * c + ch) * oh + i) * ow + j;
                    out[oidx] = best;
                    argmax[oidx] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::new(&[n, c, oh, ow], out)?, argmax))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_relu() {
        let mut eye = Tensor::zeros(&[2, 2]);
        *eye.at2_mut(0, 0) = 1.0;
        *eye.at2_mut(1, 1) = 1.0;
        let dense = Dense::from_parts(eye, Tensor::zeros(&[2])).unwrap();
        let stack = LayerStack::new(vec![Layer::Dense(dense), Layer::Relu]);
        let x = Tensor::new(&[1, 2], vec![1.0, -1.0]).unwrap();
        let y = stack.forward(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let x = Tensor::new(&[1, 3], vec![0.0, 0.0, 0.0]).unwrap();
        let y = softmax_rows(&x).unwrap();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_translation_invariance() {
        let x = Tensor::new(&[1, 4], vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let shifted = x.map(|v| v + 123.456);
        let a = softmax_rows(&x).unwrap();
        let b = softmax_rows(&shifted).unwrap();
        for (&u, &v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn two_layer_net_matches_straight_line_oracle() {
        let mut rng = Rng::seed_from(21);
        let d1 = Dense::<f64>::init(&mut rng, 4, 5);
        let d2 = Dense::<f64>::init(&mut rng, 5, 3);
        let x = crate::tensor::gaussian::<f64>(&mut rng, &[2, 4], 0.0, 1.0).unwrap();
        let stack = LayerStack::new(vec![
            Layer::Dense(d1.clone()),
            Layer::Relu,
            Layer::Dense(d2.clone()),
            Layer::Sigmoid,
        ]);
        let got = stack.forward(&x).unwrap();

        // Independent reimplementation with plain loops.
        for n in 0..2 {
            let mut h = vec![0.0; 5];
            for j in 0..5 {
                let mut acc = d1.b.data()[j];
                for i in 0..4 {
                    acc += x.at2(n, i) * d1.w.at2(i, j);
                }
                h[j] = acc.max(0.0);
            }
            for k in 0..3 {
                let mut acc = d2.b.data()[k];
                for j in 0..5 {
                    acc += h[j] * d2.w.at2(j, k);
                }
                let want = 1.0 / (1.0 + (-acc).exp());
                assert!((got.at2(n, k) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_backward_closed_form() {
        let mut rng = Rng::seed_from(33);
        let dense = Dense::<f64>::init(&mut rng, 3, 2);
        let stack = LayerStack::new(vec![Layer::Dense(dense.clone())]);
        let x = crate::tensor::gaussian::<f64>(&mut rng, &[1, 3], 0.0, 1.0).unwrap();
        let (_, trace) = stack.forward_traced(&x).unwrap();
        let g = Tensor::new(&[1, 2], vec![0.7, -0.2]).unwrap();
        let (gin, grads) = stack.backward(&trace, &g).unwrap();

        // grad_w = x^T g, grad_in = g W^T
        let LayerGrads::Pair { w: gw, b: gb } = &grads.per_layer[0] else { panic!() };
        for i in 0..3 {
            for j in 0..2 {
                assert!((gw.at2(i, j) - x.data()[i] * g.data()[j]).abs() < 1e-15);
            }
        }
        assert_eq!(gb.data(), g.data());
        for i in 0..3 {
            let want: f64 = (0..2).map(|j| g.data()[j] * dense.w.at2(i, j)).sum();
            assert!((gin.data()[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let stack = LayerStack::<f64>::new(vec![Layer::Relu]);
        let x = Tensor::new(&[1, 3], vec![2.0, -3.0, 0.0]).unwrap();
        let (_, trace) = stack.forward_traced(&x).unwrap();
        let g = Tensor::new(&[1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let (gin, _) = stack.backward(&trace, &g).unwrap();
        assert_eq!(gin.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_routes_to_first_maximum_on_ties() {
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let stack = LayerStack::<f64>::new(vec![Layer::MaxPool2x2]);
        let (y, trace) = stack.forward_traced(&x).unwrap();
        assert_eq!(y.data(), &[1.0]);
        let g = Tensor::new(&[1, 1, 1, 1], vec![5.0]).unwrap();
        let (gin, _) = stack.backward(&trace, &g).unwrap();
        assert_eq!(gin.data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_shapes_follow_valid_padding() {
        let mut rng = Rng::seed_from(5);
        let conv = Conv2d::<f64>::init(&mut rng, 1, 3, 5, 5);
        let x = crate::tensor::gaussian::<f64>(&mut rng, &[2, 1, 28, 28], 0.0, 1.0).unwrap();
        let stack = LayerStack::new(vec![Layer::Conv2d(conv), Layer::MaxPool2x2]);
        let y = stack.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 12, 12]);
    }

    #[test]
    fn backward_requires_matching_trace() {
        let stack = LayerStack::<f64>::new(vec![Layer::Relu]);
        let trace = Trace { caches: vec![] };
        let g = Tensor::new(&[1, 1], vec![1.0]).unwrap();
        assert!(stack.backward(&trace, &g).is_err());
    }
}
