//! Model checkpoints: a structured text header plus raw little-endian f64
//! parameter blobs.
//!
//! The header is line-oriented (`key value...`), diffable, and fully
//! describes the architecture; parameters follow in one binary blob in
//! canonical order (encoder, decoder, head; weight then bias per layer).
//! Symmetric decoders store only their biases — the tied weights are
//! reconstructed as transposes on load. Save → load → save is
//! byte-identical.

use std::fs;
use std::path::Path;

use crate::classifier::{ArchKind, Head, JointModel, ModelSpec, Variant};
use crate::dae::{ConfidenceParams, DecoderMode, JacobianMethod, OutputActivation};
use crate::error::{Error, Result};
use crate::io::csvout::fmt_f64;
use crate::nn::{Layer, LayerStack};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &str = "confidae-checkpoint";
const VERSION: &str = "v1";

/// Training provenance stored alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Human-readable schedule, e.g. `epochs 20` or `steps 10000`.
    pub schedule: String,
    /// Recorded loss curve (possibly downsampled by the caller).
    pub losses: Vec<f64>,
}

fn stack_params<'a, S: Scalar>(
    prefix: &str,
    stack: &'a LayerStack<S>,
    biases_only: bool,
    out: &mut Vec<(String, &'a Tensor<S>)>,
) {
    for (i, layer) in stack.layers.iter().enumerate() {
        let (w, b) = match layer {
            Layer::Dense(d) => (&d.w, &d.b),
            Layer::Conv2d(c) => (&c.w, &c.b),
            _ => continue,
        };
        if !biases_only {
            out.push((format!("{prefix}.{i}.w"), w));
        }
        out.push((format!("{prefix}.{i}.b"), b));
    }
}

fn model_params<S: Scalar>(model: &JointModel<S>) -> Vec<(String, &Tensor<S>)> {
    let mut out = Vec::new();
    stack_params("enc", &model.dae.encoder, false, &mut out);
    let tied = model.dae.mode == DecoderMode::Symmetric;
    stack_params("dec", &model.dae.decoder, tied, &mut out);
    stack_params("head", model.head.stack(), false, &mut out);
    out
}

fn stack_params_mut<'a, S: Scalar>(
    prefix: &str,
    stack: &'a mut LayerStack<S>,
    biases_only: bool,
    out: &mut Vec<(String, &'a mut Tensor<S>)>,
) {
    for (i, layer) in stack.layers.iter_mut().enumerate() {
        let (w, b) = match layer {
            Layer::Dense(d) => (&mut d.w, &mut d.b),
            Layer::Conv2d(c) => (&mut c.w, &mut c.b),
            _ => continue,
        };
        if !biases_only {
            out.push((format!("{prefix}.{i}.w"), w));
        }
        out.push((format!("{prefix}.{i}.b"), b));
    }
}

pub fn save_checkpoint<S: Scalar>(
    model: &JointModel<S>,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<()> {
    let spec = &model.spec;
    let mut header = String::new();
    header.push_str(&format!("{MAGIC} {VERSION}\n"));
    header.push_str(&format!("variant {}\n", spec.variant.name()));
    match &spec.arch {
        ArchKind::Dense { hidden } => {
            header.push_str("arch dense\n");
            let widths: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
            header.push_str(&format!("hidden {}\n", widths.join(" ")));
        }
        ArchKind::Conv { image: [c, h, w] } => {
            header.push_str("arch conv\n");
            header.push_str(&format!("image {c} {h} {w}\n"));
        }
    }
    header.push_str(&format!("input_dim {}\n", spec.input_dim));
    header.push_str(&format!("classes {}\n", spec.classes));
    header.push_str(&format!("omega {}\n", spec.omega));
    header.push_str(&format!(
        "decoder_mode {}\n",
        match spec.decoder_mode {
            DecoderMode::Symmetric => "symmetric",
            DecoderMode::Asymmetric => "asymmetric",
        }
    ));
    header.push_str(&format!(
        "out_activation {}\n",
        match spec.out_activation {
            OutputActivation::Sigmoid => "sigmoid",
            OutputActivation::Linear => "linear",
        }
    ));
    header.push_str(&format!("sigma {}\n", fmt_f64(model.dae.sigma.to_f())));
    header.push_str(&format!("alpha {}\n", fmt_f64(model.conf.alpha.to_f())));
    header.push_str(&format!("beta {}\n", fmt_f64(model.conf.beta.to_f())));
    header.push_str(&format!(
        "jacobian {}\n",
        match model.conf.jacobian {
            JacobianMethod::Exact => "exact",
            JacobianMethod::FiniteDiff => "finite_diff",
        }
    ));
    header.push_str(&format!("fd_step {}\n", fmt_f64(model.conf.fd_step.to_f())));
    header.push_str(&format!("use_gate {}\n", model.conf.use_gate));
    header.push_str(&format!("seed {}\n", meta.seed));
    header.push_str(&format!("schedule {}\n", meta.schedule));
    let losses: Vec<String> = meta.losses.iter().map(|&l| fmt_f64(l)).collect();
    header.push_str(&format!("losses {}\n", losses.join(" ")));

    let params = model_params(model);
    header.push_str(&format!("params {}\n", params.len()));
    let mut blob_len = 0usize;
    for (name, tensor) in &params {
        let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
        header.push_str(&format!("param {name} {} {}\n", tensor.rank(), dims.join(" ")));
        blob_len += tensor.len();
    }
    header.push_str(&format!("blob {blob_len}\n"));

    let mut bytes = header.into_bytes();
    bytes.reserve(blob_len * 8);
    for (_, tensor) in &params {
        for &v in tensor.data() {
            bytes.extend_from_slice(&v.to_f().to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

struct HeaderReader<'a> {
    lines: std::str::Lines<'a>,
    consumed: usize,
}

impl<'a> HeaderReader<'a> {
    fn next_kv(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| Error::format(format!("missing `{key}` line")))?;
        self.consumed += line.len() + 1;
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| Error::format(format!("expected `{key}`, found `{line}`")))?;
        Ok(rest.trim_start())
    }
}

fn parse_usize(value: &str, what: &str) -> Result<usize> {
    value.parse().map_err(|_| Error::format(format!("bad {what}: `{value}`")))
}

fn parse_f64(value: &str, what: &str) -> Result<f64> {
    value.parse().map_err(|_| Error::format(format!("bad {what}: `{value}`")))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<(JointModel<S>, CheckpointMeta)> {
    let bytes = fs::read(path)?;
    // Header is ASCII up to the blob line; find its end textually.
    let text_end = bytes.len();
    let text = std::str::from_utf8(&bytes[..text_end.min(1 << 20)])
        .unwrap_or_else(|e| std::str::from_utf8(&bytes[..e.valid_up_to()]).expect("valid prefix"));
    let mut reader = HeaderReader { lines: text.lines(), consumed: 0 };

    let magic = reader.next_kv(MAGIC)?;
    if magic != VERSION {
        return Err(Error::UnsupportedVersion { found: magic.to_string(), supported: VERSION });
    }
    let variant = match reader.next_kv("variant")? {
        "plain" => Variant::Plain,
        "cool" => Variant::Cool,
        "dae" => Variant::Dae,
        other => return Err(Error::format(format!("unknown variant `{other}`"))),
    };
    let arch_kind = reader.next_kv("arch")?;
    let arch = match arch_kind {
        "dense" => {
            let widths = reader.next_kv("hidden")?;
            let hidden: Vec<usize> = widths
                .split_whitespace()
                .map(|w| parse_usize(w, "hidden width"))
                .collect::<Result<_>>()?;
            ArchKind::Dense { hidden }
        }
        "conv" => {
            let dims = reader.next_kv("image")?;
            let parts: Vec<usize> = dims
                .split_whitespace()
                .map(|d| parse_usize(d, "image extent"))
                .collect::<Result<_>>()?;
            let [c, h, w] = parts.as_slice() else {
                return Err(Error::format("image needs three extents"));
            };
            ArchKind::Conv { image: [*c, *h, *w] }
        }
        other => return Err(Error::format(format!("unknown arch `{other}`"))),
    };
    let input_dim = parse_usize(reader.next_kv("input_dim")?, "input_dim")?;
    let classes = parse_usize(reader.next_kv("classes")?, "classes")?;
    let omega = parse_usize(reader.next_kv("omega")?, "omega")?;
    let decoder_mode = match reader.next_kv("decoder_mode")? {
        "symmetric" => DecoderMode::Symmetric,
        "asymmetric" => DecoderMode::Asymmetric,
        other => return Err(Error::format(format!("unknown decoder_mode `{other}`"))),
    };
    let out_activation = match reader.next_kv("out_activation")? {
        "sigmoid" => OutputActivation::Sigmoid,
        "linear" => OutputActivation::Linear,
        other => return Err(Error::format(format!("unknown out_activation `{other}`"))),
    };
    let sigma = parse_f64(reader.next_kv("sigma")?, "sigma")?;
    let alpha = parse_f64(reader.next_kv("alpha")?, "alpha")?;
    let beta = parse_f64(reader.next_kv("beta")?, "beta")?;
    let jacobian = match reader.next_kv("jacobian")? {
        "exact" => JacobianMethod::Exact,
        "finite_diff" => JacobianMethod::FiniteDiff,
        other => return Err(Error::format(format!("unknown jacobian `{other}`"))),
    };
    let fd_step = parse_f64(reader.next_kv("fd_step")?, "fd_step")?;
    let use_gate = match reader.next_kv("use_gate")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::format(format!("bad use_gate `{other}`"))),
    };
    let seed = reader
        .next_kv("seed")?
        .parse::<u64>()
        .map_err(|_| Error::format("bad seed"))?;
    let schedule = reader.next_kv("schedule")?.to_string();
    let losses: Vec<f64> = reader
        .next_kv("losses")?
        .split_whitespace()
        .map(|v| parse_f64(v, "loss"))
        .collect::<Result<_>>()?;

    let param_count = parse_usize(reader.next_kv("params")?, "params")?;
    let mut declared: Vec<(String, Vec<usize>)> = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        let line = reader.next_kv("param")?;
        let mut parts = parts_of(line);
        let name = parts
            .next()
            .ok_or_else(|| Error::format("param line missing name"))?
            .to_string();
        let rank = parse_usize(parts.next().unwrap_or(""), "param rank")?;
        let dims: Vec<usize> =
            parts.map(|d| parse_usize(d, "param dim")).collect::<Result<_>>()?;
        if dims.len() != rank {
            return Err(Error::format(format!("param {name} rank {rank} with {} dims", dims.len())));
        }
        declared.push((name, dims));
    }
    let blob_len = parse_usize(reader.next_kv("blob")?, "blob length")?;
    let blob_start = reader.consumed;
    let expected_bytes = blob_len * 8;
    if bytes.len() - blob_start != expected_bytes {
        return Err(Error::format_at(
            format!(
                "blob needs {expected_bytes} bytes, found {}",
                bytes.len() - blob_start
            ),
            bytes.len(),
        ));
    }

    let spec = ModelSpec {
        input_dim,
        arch,
        classes,
        variant,
        omega,
        decoder_mode,
        out_activation,
    };
    let conf = ConfidenceParams {
        alpha: S::from_f(alpha),
        beta: S::from_f(beta),
        input_dim,
        jacobian,
        fd_step: S::from_f(fd_step),
        use_gate,
    };
    // Scaffold with a throwaway seed; every parameter is overwritten below.
    let mut model = spec.build(conf, S::from_f(sigma), &mut Rng::seed_from(0))?;

    let mut entries: Vec<(String, &mut Tensor<S>)> = Vec::new();
    stack_params_mut("enc", &mut model.dae.encoder, false, &mut entries);
    let tied = decoder_mode == DecoderMode::Symmetric;
    stack_params_mut("dec", &mut model.dae.decoder, tied, &mut entries);
    let head_stack = match &mut model.head {
        Head::Softmax(s) => s,
        Head::Cool(c) => &mut c.stack,
    };
    stack_params_mut("head", head_stack, false, &mut entries);

    if entries.len() != declared.len() {
        return Err(Error::format(format!(
            "checkpoint declares {} params, architecture has {}",
            declared.len(),
            entries.len()
        )));
    }
    let mut cursor = blob_start;
    for ((name, dims), (expect_name, tensor)) in declared.iter().zip(entries.iter_mut()) {
        if name != expect_name || dims.as_slice() != tensor.shape() {
            return Err(Error::format(format!(
                "param mismatch: checkpoint has {name} {dims:?}, architecture expects {expect_name} {:?}",
                tensor.shape()
            )));
        }
        for v in tensor.data_mut() {
            let raw = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().expect("8 bytes"));
            *v = S::from_f(raw);
            cursor += 8;
        }
    }
    model.dae.resync_decoder()?;
    Ok((model, CheckpointMeta { seed, schedule, losses }))
}

fn parts_of(line: &str) -> impl Iterator<Item = &str> {
    line.split_whitespace()
}
