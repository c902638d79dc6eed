//! Experiment implementations behind the runner's task dispatch.
//!
//! Every experiment derives all randomness from `config.seed` through
//! ordered `Rng::split` calls and runs single-threaded, so reruns with the
//! same config produce byte-identical CSV/SVG/PGM artifacts.

use std::path::{Path, PathBuf};

use crate::classifier::{
    joint_loss, joint_loss_grads, ArchKind, JointModel, ModelFactory, ModelSpec, Variant,
};
use crate::dae::{
    corrupt, ConfidenceParams, DecoderMode, JacobianMethod, OutputActivation, Schedule, TrainCfg,
};
use crate::error::{Error, Result};
use crate::eval::{
    confidence_map, f_measure, one_class_campaign, open_set_run as open_set_protocol, openness,
    sample_background, sample_rings, synth_dataset, Dataset, GridSpec, OpenSetTask, RingSpec,
    SynthSpec,
};
use crate::fooling::{fooling_campaign, FoolingConfig};
use crate::gradcheck::{max_rel_err, numeric_grad_input, rel_err, DEFAULT_STEP};
use crate::io::{
    fmt_f64, load_checkpoint, load_idx_images, load_idx_labels, save_checkpoint, write_csv,
    write_pgm, write_svg_curves, write_svg_heatmap, CheckpointMeta, CurveSeries,
};
use crate::nn::{AdamParams, Conv2d, Dense, Layer, LayerCache, LayerStack};
use crate::rng::Rng;
use crate::runner::{DataSource, ExperimentConfig, RunSummary};
use crate::tensor::{gaussian, Tensor};

fn summary(out_dir: &Path) -> RunSummary {
    RunSummary {
        out_dir: out_dir.to_path_buf(),
        artifacts: Vec::new(),
        headlines: Vec::new(),
        passed: true,
    }
}

fn arch_for(cfg: &ExperimentConfig, input_dim: usize) -> ArchKind {
    if cfg.conv {
        ArchKind::Conv { image: [1, 28, 28] }
    } else {
        ArchKind::Dense { hidden: cfg.hidden.clone() }
    }
    .validate_input(input_dim)
}

trait ArchInput {
    fn validate_input(self, input_dim: usize) -> Self;
}

impl ArchInput for ArchKind {
    fn validate_input(self, _input_dim: usize) -> Self {
        self
    }
}

/// Model factory for image tasks (sigmoid decoder output).
fn image_factory(cfg: &ExperimentConfig, input_dim: usize) -> ModelFactory<f64> {
    let schedule =
        if cfg.steps > 0 { Schedule::Steps(cfg.steps) } else { Schedule::Epochs(cfg.epochs) };
    ModelFactory {
        spec: ModelSpec {
            input_dim,
            arch: arch_for(cfg, input_dim),
            classes: cfg.classes,
            variant: cfg.variant,
            omega: cfg.omega,
            decoder_mode: cfg.decoder_mode,
            out_activation: OutputActivation::Sigmoid,
        },
        sigma: cfg.sigma,
        alpha: cfg.alpha,
        beta: cfg.beta,
        jacobian: cfg.jacobian,
        fd_step: cfg.fd_step,
        use_gate: cfg.use_gate,
        train: TrainCfg {
            schedule,
            batch: cfg.batch,
            lambda_rec: cfg.lambda_rec,
            lambda_l2: cfg.lambda_l2,
            adam: AdamParams::with_eta(cfg.eta),
        },
    }
}

fn rings_factory(cfg: &ExperimentConfig) -> ModelFactory<f64> {
    let mut factory = image_factory(cfg, 2);
    factory.spec.arch = ArchKind::Dense { hidden: cfg.hidden.clone() };
    factory.spec.out_activation = OutputActivation::Linear;
    factory.spec.classes = cfg.classes;
    factory
}

/// Loads the configured image dataset, flattened to `[n, 784]`.
fn load_image_dataset(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<Dataset<f64>> {
    let mut data = match cfg.data {
        DataSource::Synthetic => synth_dataset(
            &SynthSpec {
                side: 28,
                train_per_class: cfg.synth_train_per_class,
                test_per_class: cfg.synth_test_per_class,
            },
            rng,
        )?,
        DataSource::Idx => {
            if cfg.data_dir.is_empty() {
                return Err(Error::parameter("data = idx requires data_dir"));
            }
            let dir = Path::new(&cfg.data_dir);
            let mut file = |name: &str| -> Result<PathBuf> {
                let path = dir.join(name);
                if !path.exists() {
                    return Err(Error::parameter(format!(
                        "missing dataset file: {}",
                        path.display()
                    )));
                }
                Ok(path)
            };
            let train_x = load_idx_images::<f64>(&file("train-images-idx3-ubyte")?)?;
            let train_y = load_idx_labels(&file("train-labels-idx1-ubyte")?)?;
            let test_x = load_idx_images::<f64>(&file("t10k-images-idx3-ubyte")?)?;
            let test_y = load_idx_labels(&file("t10k-labels-idx1-ubyte")?)?;
            let flat = |t: Tensor<f64>| -> Result<Tensor<f64>> {
                let &[n, r, c] = t.shape() else {
                    return Err(Error::dimension("image tensor must be rank 3"));
                };
                t.reshaped(&[n, r * c])
            };
            Dataset {
                train_x: flat(train_x)?,
                train_y,
                test_x: flat(test_x)?,
                test_y,
                classes: 10,
            }
        }
    };
    if cfg.test_limit > 0 {
        let (n, _) = data.test_x.dims2()?;
        let keep = cfg.test_limit.min(n);
        let idx: Vec<usize> = (0..keep).collect();
        data.test_x = data.test_x.gather_rows(&idx)?;
        data.test_y.truncate(keep);
    }
    data.validate()?;
    Ok(data)
}

/// Training subset of at most `train_limit` samples (0 = everything),
/// shuffled with the given generator.
fn train_subset(
    data: &Dataset<f64>,
    limit: usize,
    rng: &mut Rng,
) -> Result<(Tensor<f64>, Vec<usize>)> {
    let (n, _) = data.train_x.dims2()?;
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    if limit > 0 {
        idx.truncate(limit);
    }
    let x = data.train_x.gather_rows(&idx)?;
    let y = idx.iter().map(|&i| data.train_y[i]).collect();
    Ok((x, y))
}

fn downsampled_curve(curve: &[f64], every: usize) -> Vec<(usize, f64)> {
    let every = every.max(1);
    let mut rows: Vec<(usize, f64)> = curve
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0)
        .map(|(i, &l)| (i + 1, l))
        .collect();
    if let Some(last) = curve.len().checked_sub(1) {
        if last % every != 0 {
            rows.push((last + 1, curve[last]));
        }
    }
    rows
}

fn write_loss_curve(path: &Path, curve: &[f64], every: usize) -> Result<()> {
    let rows: Vec<Vec<String>> = downsampled_curve(curve, every)
        .into_iter()
        .map(|(step, loss)| vec![step.to_string(), fmt_f64(loss)])
        .collect();
    write_csv(path, &["step", "loss"], &rows)
}

// ---------------------------------------------------------------------------
// rings
// ---------------------------------------------------------------------------

pub fn rings_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    if cfg.variant != Variant::Dae {
        return Err(Error::parameter("the rings experiment needs variant = dae"));
    }
    let mut master = Rng::seed_from(cfg.seed);
    let mut data_rng = master.split();
    let mut train_rng = master.split();
    let mut eval_rng = master.split();

    let spec = RingSpec { samples_per_ring: cfg.rings_per_ring, ..RingSpec::default() };
    let (train_x, train_y) = sample_rings::<f64>(&spec, &mut data_rng)?;
    let factory = rings_factory(cfg);
    let (model, curve) = factory.train_on(&train_x, &train_y, &mut train_rng)?;

    // Held-out ring points and far background points.
    let heldout_spec = RingSpec { samples_per_ring: 200, ..spec.clone() };
    let (held_x, held_y) = sample_rings::<f64>(&heldout_spec, &mut eval_rng)?;
    let background =
        sample_background::<f64>(&spec, 600, 0.5, [-2.2, 2.2, -2.2, 2.2], &mut eval_rng)?;

    let held_preds = model.predict_batch(&held_x)?;
    let bg_preds = model.predict_batch(&background)?;
    let held_mean = held_preds.iter().map(|p| p.confidence).sum::<f64>() / held_preds.len() as f64;
    let bg_mean = bg_preds.iter().map(|p| p.confidence).sum::<f64>() / bg_preds.len() as f64;
    let label_acc = held_preds
        .iter()
        .zip(&held_y)
        .filter(|(p, &l)| p.argmax == l)
        .count() as f64
        / held_preds.len() as f64;

    let mut s = summary(out_dir);
    let metrics_path = out_dir.join("rings_metrics.csv");
    write_csv(
        &metrics_path,
        &["metric", "value"],
        &[
            vec!["heldout_mean_score".into(), fmt_f64(held_mean)],
            vec!["background_mean_score".into(), fmt_f64(bg_mean)],
            vec!["score_ratio".into(), fmt_f64(held_mean / bg_mean)],
            vec!["heldout_label_accuracy".into(), fmt_f64(label_acc)],
        ],
    )?;
    s.artifacts.push(metrics_path);

    let curve_path = out_dir.join("loss_curve.csv");
    write_loss_curve(&curve_path, &curve, cfg.record_every)?;
    s.artifacts.push(curve_path);

    let grid = GridSpec::square(-2.2, 2.2, cfg.grid);
    let field = confidence_map(&model, &grid)?;
    for (tensor, name, title) in [
        (&field.label, "map_labels.svg", "argmax label"),
        (&field.score_no_gate, "map_score_no_gate.svg", "score without gate"),
        (&field.gate, "map_gate.svg", "curvature gate"),
        (&field.score, "map_score.svg", "confidence score"),
    ] {
        let path = out_dir.join(name);
        write_svg_heatmap(tensor, title, &path)?;
        s.artifacts.push(path);
    }

    let ckpt = out_dir.join("rings_model.ckpt");
    save_checkpoint(
        &model,
        &CheckpointMeta {
            seed: cfg.seed,
            schedule: schedule_string(cfg),
            losses: downsampled_curve(&curve, cfg.record_every).into_iter().map(|(_, l)| l).collect(),
        },
        &ckpt,
    )?;
    s.artifacts.push(ckpt);

    s.headlines.push(format!(
        "ring/background mean score {:.4}/{:.4} (ratio {:.2}), held-out label accuracy {:.3}",
        held_mean,
        bg_mean,
        held_mean / bg_mean,
        label_acc
    ));
    Ok(s)
}

fn schedule_string(cfg: &ExperimentConfig) -> String {
    if cfg.steps > 0 {
        format!("steps {}", cfg.steps)
    } else {
        format!("epochs {}", cfg.epochs)
    }
}

// ---------------------------------------------------------------------------
// fool
// ---------------------------------------------------------------------------

pub fn fool_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let mut master = Rng::seed_from(cfg.seed);
    let mut data_rng = master.split();
    let mut train_rng = master.split();
    let mut attack_rng = master.split();

    let data = load_image_dataset(cfg, &mut data_rng)?;
    let (train_x, train_y) = train_subset(&data, cfg.train_limit, &mut train_rng)?;
    let (input_dim,) = {
        let (_, d) = train_x.dims2()?;
        (d,)
    };
    let factory = image_factory(cfg, input_dim);
    let (model, curve) = factory.train_on(&train_x, &train_y, &mut train_rng)?;

    let accuracy = model.thresholded_accuracy(&data.test_x, &data.test_y, 0.0)?;
    let thresholded = model.thresholded_accuracy(&data.test_x, &data.test_y, cfg.threshold)?;

    let fool_cfg = FoolingConfig {
        trials_per_class: cfg.trials_per_class,
        max_updates: cfg.max_updates,
        threshold: cfg.threshold,
        eta: cfg.fgn_eta,
        target: cfg.fool_target,
    };
    let report = fooling_campaign(&model, &fool_cfg, &mut attack_rng)?;

    let mut s = summary(out_dir);
    let attempts_path = out_dir.join("fooling_attempts.csv");
    let rows: Vec<Vec<String>> = report
        .attempts
        .iter()
        .map(|a| {
            vec![
                a.class.to_string(),
                a.trial.to_string(),
                (a.success as u8).to_string(),
                a.steps.to_string(),
            ]
        })
        .collect();
    write_csv(&attempts_path, &["class", "trial", "success", "steps"], &rows)?;
    s.artifacts.push(attempts_path);

    let summary_path = out_dir.join("fooling_summary.csv");
    write_csv(
        &summary_path,
        &["variant", "threshold", "rate", "mean_steps", "accuracy", "thresholded_accuracy"],
        &[vec![
            cfg.variant.name().into(),
            fmt_f64(cfg.threshold),
            fmt_f64(report.rate),
            report.mean_steps.map_or("-".into(), fmt_f64),
            fmt_f64(accuracy),
            fmt_f64(thresholded),
        ]],
    )?;
    s.artifacts.push(summary_path);

    // First successful sample per class (or the last failed try) as PGM.
    let side = (input_dim as f64).sqrt() as usize;
    if side * side == input_dim {
        for class in 0..model.spec.classes {
            let pick = report
                .attempts
                .iter()
                .filter(|a| a.class == class)
                .find(|a| a.success)
                .or_else(|| report.attempts.iter().find(|a| a.class == class));
            if let Some(attempt) = pick {
                let image = attempt.sample.clone().reshaped(&[side, side])?;
                let path = out_dir.join(format!("fool_class{class}.pgm"));
                write_pgm(&image, &path)?;
                s.artifacts.push(path);
            }
        }
    }

    let ckpt = out_dir.join("fool_model.ckpt");
    save_checkpoint(
        &model,
        &CheckpointMeta {
            seed: cfg.seed,
            schedule: schedule_string(cfg),
            losses: downsampled_curve(&curve, cfg.record_every).into_iter().map(|(_, l)| l).collect(),
        },
        &ckpt,
    )?;
    s.artifacts.push(ckpt);

    s.headlines.push(format!(
        "{}: fooling rate {:.3} ({}), accuracy {:.3}, thresholded@{} {:.3}",
        cfg.variant.name(),
        report.rate,
        report
            .mean_steps
            .map_or("-".to_string(), |m| format!("avg {m:.1} steps")),
        accuracy,
        cfg.threshold,
        thresholded
    ));
    Ok(s)
}

// ---------------------------------------------------------------------------
// openset
// ---------------------------------------------------------------------------

pub fn openset_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let mut master = Rng::seed_from(cfg.seed);
    let mut data_rng = master.split();
    let data = load_image_dataset(cfg, &mut data_rng)?;
    let (_, input_dim) = data.train_x.dims2()?;
    let factory = image_factory(cfg, input_dim);

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut summary_rows: Vec<Vec<String>> = Vec::new();
    let mut curve = Vec::new();
    for &known_count in &cfg.known_counts {
        let task = OpenSetTask {
            known_count,
            repetitions: cfg.repetitions,
            threshold: cfg.threshold,
            train_limit: cfg.train_limit,
            fixed_known: None,
        };
        let mut task_rng = master.split();
        let outcomes = open_set_protocol(&factory, &data, &task, &mut task_rng)?;
        let o = openness(known_count, data.classes)?;
        for (rep, outcome) in outcomes.iter().enumerate() {
            let known: Vec<String> = outcome.known.iter().map(|k| k.to_string()).collect();
            rows.push(vec![
                known_count.to_string(),
                fmt_f64(o),
                rep.to_string(),
                known.join("+"),
                fmt_f64(outcome.precision),
                fmt_f64(outcome.recall),
                fmt_f64(outcome.f),
            ]);
        }
        let (mean, std) = crate::eval::openset::f_mean_std(&outcomes);
        summary_rows.push(vec![
            known_count.to_string(),
            fmt_f64(o),
            fmt_f64(mean),
            fmt_f64(std),
        ]);
        curve.push((o, mean));
    }

    let mut s = summary(out_dir);
    let detail_path = out_dir.join("openset.csv");
    write_csv(
        &detail_path,
        &["known_count", "openness", "repetition", "known", "precision", "recall", "f"],
        &rows,
    )?;
    s.artifacts.push(detail_path);
    let summary_path = out_dir.join("openset_summary.csv");
    write_csv(&summary_path, &["known_count", "openness", "f_mean", "f_std"], &summary_rows)?;
    s.artifacts.push(summary_path);

    curve.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let svg_path = out_dir.join("openset_f.svg");
    write_svg_curves(
        &[CurveSeries { label: cfg.variant.name().into(), points: curve.clone() }],
        "open-set F-measure",
        "openness",
        "F",
        &svg_path,
    )?;
    s.artifacts.push(svg_path);

    for (o, mean) in &curve {
        s.headlines.push(format!("openness {o:.3}: mean F {mean:.3} ({})", cfg.variant.name()));
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// oneclass
// ---------------------------------------------------------------------------

pub fn oneclass_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let mut master = Rng::seed_from(cfg.seed);
    let mut data_rng = master.split();
    let mut campaign_rng = master.split();
    let data = load_image_dataset(cfg, &mut data_rng)?;
    let (_, input_dim) = data.train_x.dims2()?;
    let factory = image_factory(cfg, input_dim);

    let outcome = one_class_campaign(&factory, &data, cfg.train_limit, &mut campaign_rng)?;

    let mut s = summary(out_dir);
    let auc_path = out_dir.join("oneclass_auc.csv");
    let rows: Vec<Vec<String>> = outcome
        .per_class
        .iter()
        .map(|(class, curve)| vec![class.to_string(), fmt_f64(curve.auc)])
        .collect();
    write_csv(&auc_path, &["class", "auc"], &rows)?;
    s.artifacts.push(auc_path);

    let curve_path = out_dir.join("oneclass_curve.csv");
    let curve_rows: Vec<Vec<String>> = outcome
        .averaged
        .points
        .iter()
        .map(|&(fpr, tpr)| vec![fmt_f64(fpr), fmt_f64(tpr)])
        .collect();
    write_csv(&curve_path, &["fpr", "tpr"], &curve_rows)?;
    s.artifacts.push(curve_path);

    let svg_path = out_dir.join("oneclass_roc.svg");
    write_svg_curves(
        &[CurveSeries {
            label: format!("{} (AUC {:.3})", cfg.variant.name(), outcome.averaged.auc),
            points: outcome.averaged.points.clone(),
        }],
        "1-class ROC (vertical average)",
        "fpr",
        "tpr",
        &svg_path,
    )?;
    s.artifacts.push(svg_path);

    let mean_auc =
        outcome.per_class.iter().map(|(_, c)| c.auc).sum::<f64>() / outcome.per_class.len() as f64;
    s.headlines.push(format!(
        "{}: mean per-class AUC {:.3}, averaged-curve AUC {:.3}",
        cfg.variant.name(),
        mean_auc,
        outcome.averaged.auc
    ));
    Ok(s)
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

/// One gradient-check row.
#[derive(Debug, Clone)]
pub struct GradCheckRow {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

const GRAD_TOL: f64 = 1e-4;

/// Analytic-vs-central-difference checks for every layer kind plus the
/// joint losses of all variants; `instances` random instances each.
pub fn gradient_check_suite(seed: u64, instances: usize) -> Result<Vec<GradCheckRow>> {
    let mut rng = Rng::seed_from(seed);
    let mut rows = Vec::new();

    let layer_cases: Vec<(&str, Box<dyn Fn(&mut Rng) -> (LayerStack<f64>, Tensor<f64>)>)> = vec![
        (
            "dense",
            Box::new(|r| {
                (
                    LayerStack::new(vec![Layer::Dense(Dense::init(r, 4, 3))]),
                    gaussian(r, &[3, 4], 0.0, 1.0).unwrap(),
                )
            }),
        ),
        (
            "relu",
            Box::new(|r| {
                (
                    LayerStack::new(vec![Layer::Relu]),
                    margin_tensor(r, &[3, 5], 1e-3),
                )
            }),
        ),
        (
            "sigmoid",
            Box::new(|r| {
                (
                    LayerStack::new(vec![Layer::Dense(Dense::init(r, 3, 4)), Layer::Sigmoid]),
                    gaussian(r, &[2, 3], 0.0, 1.0).unwrap(),
                )
            }),
        ),
        (
            "softmax",
            Box::new(|r| {
                (
                    LayerStack::new(vec![Layer::Dense(Dense::init(r, 4, 5)), Layer::Softmax]),
                    gaussian(r, &[2, 4], 0.0, 1.0).unwrap(),
                )
            }),
        ),
        (
            "conv2d",
            Box::new(|r| {
                (
                    LayerStack::new(vec![Layer::Conv2d(Conv2d::init(r, 1, 2, 3, 3))]),
                    gaussian(r, &[2, 1, 6, 6], 0.0, 1.0).unwrap(),
                )
            }),
        ),
        (
            "maxpool2x2",
            Box::new(|r| {
                (
                    LayerStack::new(vec![Layer::MaxPool2x2]),
                    pool_margin_tensor(r, 2, 4, 4, 1e-3),
                )
            }),
        ),
        (
            "flatten",
            Box::new(|r| {
                (
                    LayerStack::new(vec![
                        Layer::Flatten,
                        Layer::Dense(Dense::init(r, 8, 3)),
                    ]),
                    gaussian(r, &[2, 2, 2, 2], 0.0, 1.0).unwrap(),
                )
            }),
        ),
        (
            "conv_pipeline",
            Box::new(|r| {
                (
                    LayerStack::new(vec![
                        Layer::Conv2d(Conv2d::init(r, 1, 2, 3, 3)),
                        Layer::Relu,
                        Layer::MaxPool2x2,
                        Layer::Flatten,
                        Layer::Dense(Dense::init(r, 8, 3)),
                        Layer::Softmax,
                    ]),
                    gaussian(r, &[1, 1, 6, 6], 0.0, 1.0).unwrap(),
                )
            }),
        ),
    ];
    for (name, build) in layer_cases {
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let (mut stack, x) = build(&mut rng);
            worst = worst.max(check_stack_gradients(&mut stack, &x, &mut rng)?);
        }
        rows.push(GradCheckRow {
            name: name.to_string(),
            instances,
            max_rel_err: worst,
            tolerance: GRAD_TOL,
        });
    }

    for (name, variant, mode) in [
        ("joint_loss_plain", Variant::Plain, DecoderMode::Symmetric),
        ("joint_loss_cool", Variant::Cool, DecoderMode::Symmetric),
        ("joint_loss_dae_sym", Variant::Dae, DecoderMode::Symmetric),
        ("joint_loss_dae_asym", Variant::Dae, DecoderMode::Asymmetric),
    ] {
        let mut worst = 0.0f64;
        for _ in 0..instances {
            worst = worst.max(check_joint_gradients(variant, mode, &mut rng)?);
        }
        rows.push(GradCheckRow {
            name: name.to_string(),
            instances,
            max_rel_err: worst,
            tolerance: GRAD_TOL,
        });
    }
    Ok(rows)
}

/// Gaussian draw redrawn until every entry clears the margin (ReLU kinks).
fn margin_tensor(rng: &mut Rng, shape: &[usize], margin: f64) -> Tensor<f64> {
    loop {
        let t = gaussian::<f64>(rng, shape, 0.0, 1.0).unwrap();
        if t.data().iter().all(|v| v.abs() > margin) {
            return t;
        }
    }
}

/// Gaussian image redrawn until every pooling window has a clear maximum.
fn pool_margin_tensor(rng: &mut Rng, c: usize, h: usize, w: usize, margin: f64) -> Tensor<f64> {
    'outer: loop {
        let t = gaussian::<f64>(rng, &[1, c, h, w], 0.0, 1.0).unwrap();
        for ch in 0..c {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let mut vals = [0.0f64; 4];
                    for (k, (du, dv)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                        vals[k] = t.data()[(ch * h + 2 * i + du) * w + 2 * j + dv];
                    }
                    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    if vals[0] - vals[1] < margin {
                        continue 'outer;
                    }
                }
            }
        }
        return t;
    }
}

/// Checks input and parameter gradients of `loss = Σ c ⊙ stack(x)` against
/// central differences; returns the worst relative error.
fn check_stack_gradients(
    stack: &mut LayerStack<f64>,
    x: &Tensor<f64>,
    rng: &mut Rng,
) -> Result<f64> {
    let (out, trace) = stack.forward_traced(x)?;
    let weights = gaussian::<f64>(rng, out.shape(), 0.0, 1.0)?;
    let (g_in, grads) = stack.backward(&trace, &weights)?;
    let mut worst = 0.0f64;

    let numeric = numeric_grad_input(x, DEFAULT_STEP, |probe| {
        Ok(stack.forward(probe)?.mul_elem(&weights)?.sum())
    })?;
    worst = worst.max(max_rel_err(&g_in, &numeric));

    let analytic: Vec<Tensor<f64>> = grads.flat().into_iter().cloned().collect();
    let n_params = analytic.len();
    for pi in 0..n_params {
        let shape = stack.param_tensors()[pi].shape().to_vec();
        let mut numeric = Tensor::<f64>::zeros(&shape);
        let len = numeric.len();
        for i in 0..len {
            let orig = stack.param_tensors()[pi].data()[i];
            stack.param_tensors_mut()[pi].data_mut()[i] = orig + DEFAULT_STEP;
            let plus = stack.forward(x)?.mul_elem(&weights)?.sum();
            stack.param_tensors_mut()[pi].data_mut()[i] = orig - DEFAULT_STEP;
            let minus = stack.forward(x)?.mul_elem(&weights)?.sum();
            stack.param_tensors_mut()[pi].data_mut()[i] = orig;
            numeric.data_mut()[i] = (plus - minus) / (2.0 * DEFAULT_STEP);
        }
        worst = worst.max(max_rel_err(&analytic[pi], &numeric));
    }
    Ok(worst)
}

/// Full joint-loss gradient check for one freshly built model; ties in the
/// symmetric decoder are respected by resyncing after every perturbation.
fn check_joint_gradients(variant: Variant, mode: DecoderMode, rng: &mut Rng) -> Result<f64> {
    let spec = ModelSpec {
        input_dim: 6,
        arch: ArchKind::Dense { hidden: vec![5] },
        classes: 3,
        variant,
        omega: 2,
        decoder_mode: mode,
        out_activation: OutputActivation::Sigmoid,
    };
    let conf = ConfidenceParams::new(4.0, 5.0, 6)?;
    let (lambda_rec, lambda_l2) = (0.7, 0.05);

    // Redraw until ReLU pre-activations keep a margin on both passes.
    let (mut model, x, x_cor, labels) = loop {
        let model = spec.build::<f64>(conf, 0.3, rng)?;
        let x = gaussian::<f64>(rng, &[4, 6], 0.5, 0.4)?;
        let x_cor = corrupt(&x, 0.3, rng)?;
        let labels = vec![0usize, 1, 2, 0];
        if relu_margins_ok(&model, &x)? && relu_margins_ok(&model, &x_cor)? {
            break (model, x, x_cor, labels);
        }
    };

    let step = joint_loss_grads(&model, &x, Some(&x_cor), &labels, lambda_rec, lambda_l2)?;
    let tied = mode == DecoderMode::Symmetric;

    // Analytic gradients in trainable order: encoder, decoder, head.
    let mut analytic: Vec<Tensor<f64>> = step.enc.flat().into_iter().cloned().collect();
    for (layer_grads, layer) in step.dec.per_layer.iter().zip(&model.dae.decoder.layers) {
        if let (crate::nn::LayerGrads::Pair { w, b }, Layer::Dense(_)) = (layer_grads, layer) {
            if !tied {
                analytic.push(w.clone());
            }
            analytic.push(b.clone());
        }
    }
    analytic.extend(step.head.flat().into_iter().cloned());

    let mut worst = 0.0f64;
    let n_params = trainable_count(&model, tied);
    for pi in 0..n_params {
        let shape = {
            let params = trainable_refs(&model, tied);
            params[pi].shape().to_vec()
        };
        let mut numeric = Tensor::<f64>::zeros(&shape);
        for i in 0..numeric.len() {
            let orig = trainable_refs(&model, tied)[pi].data()[i];
            set_trainable(&mut model, tied, pi, i, orig + DEFAULT_STEP)?;
            let plus = joint_loss(&model, &x, Some(&x_cor), &labels, lambda_rec, lambda_l2)?;
            set_trainable(&mut model, tied, pi, i, orig - DEFAULT_STEP)?;
            let minus = joint_loss(&model, &x, Some(&x_cor), &labels, lambda_rec, lambda_l2)?;
            set_trainable(&mut model, tied, pi, i, orig)?;
            numeric.data_mut()[i] = (plus - minus) / (2.0 * DEFAULT_STEP);
        }
        worst = worst.max(max_rel_err(&analytic[pi], &numeric));
    }
    Ok(worst)
}

fn relu_margins_ok(model: &JointModel<f64>, x: &Tensor<f64>) -> Result<bool> {
    let xin = model.dae.prep_input(x)?;
    let (feat, enc_trace) = model.dae.encoder.forward_traced(&xin)?;
    let margin = 1e-3;
    let check = |trace: &crate::nn::Trace<f64>, stack: &LayerStack<f64>| {
        for (layer, cache) in stack.layers.iter().zip(trace.caches()) {
            if let (Layer::Relu, LayerCache::Input(t)) = (layer, cache) {
                if t.data().iter().any(|v| v.abs() < margin) {
                    return false;
                }
            }
        }
        true
    };
    if !check(&enc_trace, &model.dae.encoder) {
        return Ok(false);
    }
    if model.spec.variant == Variant::Dae {
        let (_, dec_trace) = model.dae.decoder.forward_traced(&feat)?;
        if !check(&dec_trace, &model.dae.decoder) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn trainable_refs(model: &JointModel<f64>, tied: bool) -> Vec<&Tensor<f64>> {
    let mut out = model.dae.encoder.param_tensors();
    for layer in &model.dae.decoder.layers {
        if let Layer::Dense(d) = layer {
            if !tied {
                out.push(&d.w);
            }
            out.push(&d.b);
        }
    }
    out.extend(model.head.stack().param_tensors());
    out
}

fn trainable_count(model: &JointModel<f64>, tied: bool) -> usize {
    trainable_refs(model, tied).len()
}

fn set_trainable(
    model: &mut JointModel<f64>,
    tied: bool,
    pi: usize,
    i: usize,
    value: f64,
) -> Result<()> {
    {
        let mut out = model.dae.encoder.param_tensors_mut();
        let dec = &mut model.dae.decoder;
        for layer in &mut dec.layers {
            if let Layer::Dense(d) = layer {
                if !tied {
                    out.push(&mut d.w);
                }
                out.push(&mut d.b);
            }
        }
        out.extend(model.head.stack_mut().param_tensors_mut());
        out[pi].data_mut()[i] = value;
    }
    model.dae.resync_decoder()
}

pub fn gradcheck_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let rows = gradient_check_suite(cfg.seed, 10)?;
    let mut s = summary(out_dir);
    let path = out_dir.join("gradcheck.csv");
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.instances.to_string(),
                fmt_f64(r.max_rel_err),
                fmt_f64(r.tolerance),
                (r.passed() as u8).to_string(),
            ]
        })
        .collect();
    write_csv(&path, &["check", "instances", "max_rel_err", "tolerance", "pass"], &csv_rows)?;
    s.artifacts.push(path);
    s.passed = rows.iter().all(GradCheckRow::passed);
    for r in &rows {
        s.headlines.push(format!(
            "{}: max rel err {:.2e} over {} instances [{}]",
            r.name,
            r.max_rel_err,
            r.instances,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    Ok(s)
}

// ---------------------------------------------------------------------------
// confmap / train / eval
// ---------------------------------------------------------------------------

pub fn confmap_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let model: JointModel<f64> = if cfg.checkpoint.is_empty() {
        let mut master = Rng::seed_from(cfg.seed);
        let mut data_rng = master.split();
        let mut train_rng = master.split();
        let spec = RingSpec { samples_per_ring: cfg.rings_per_ring, ..RingSpec::default() };
        let (train_x, train_y) = sample_rings::<f64>(&spec, &mut data_rng)?;
        let factory = rings_factory(cfg);
        factory.train_on(&train_x, &train_y, &mut train_rng)?.0
    } else {
        load_checkpoint(Path::new(&cfg.checkpoint))?.0
    };

    let grid = GridSpec::square(-2.2, 2.2, cfg.grid);
    let field = confidence_map(&model, &grid)?;
    let mut s = summary(out_dir);
    for (tensor, name, title) in [
        (&field.label, "map_labels.svg", "argmax label"),
        (&field.score_no_gate, "map_score_no_gate.svg", "score without gate"),
        (&field.gate, "map_gate.svg", "curvature gate"),
        (&field.score, "map_score.svg", "confidence score"),
    ] {
        let path = out_dir.join(name);
        write_svg_heatmap(tensor, title, &path)?;
        s.artifacts.push(path);
    }
    let mut max_gap = 0.0f64;
    for i in 0..grid.ny {
        for j in 0..grid.nx {
            let gap =
                (field.score.at2(i, j) - field.score_no_gate.at2(i, j) * field.gate.at2(i, j)).abs();
            max_gap = max_gap.max(gap);
        }
    }
    s.headlines.push(format!(
        "fields on a {0}x{0} grid; max |score − no_gate·gate| = {1:.2e}",
        cfg.grid, max_gap
    ));
    Ok(s)
}

pub fn train_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let mut master = Rng::seed_from(cfg.seed);
    let mut data_rng = master.split();
    let mut train_rng = master.split();
    let data = load_image_dataset(cfg, &mut data_rng)?;
    let (train_x, train_y) = train_subset(&data, cfg.train_limit, &mut train_rng)?;
    let (_, input_dim) = train_x.dims2()?;
    let factory = image_factory(cfg, input_dim);
    let (model, curve) = factory.train_on(&train_x, &train_y, &mut train_rng)?;

    let train_acc = model.thresholded_accuracy(&train_x, &train_y, 0.0)?;
    let test_acc = model.thresholded_accuracy(&data.test_x, &data.test_y, 0.0)?;

    let mut s = summary(out_dir);
    let curve_path = out_dir.join("loss_curve.csv");
    write_loss_curve(&curve_path, &curve, cfg.record_every)?;
    s.artifacts.push(curve_path);
    let ckpt = out_dir.join("model.ckpt");
    save_checkpoint(
        &model,
        &CheckpointMeta {
            seed: cfg.seed,
            schedule: schedule_string(cfg),
            losses: downsampled_curve(&curve, cfg.record_every).into_iter().map(|(_, l)| l).collect(),
        },
        &ckpt,
    )?;
    s.artifacts.push(ckpt);
    s.headlines.push(format!(
        "{} trained: train accuracy {train_acc:.3}, test accuracy {test_acc:.3}",
        cfg.variant.name()
    ));
    Ok(s)
}

pub fn eval_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    if cfg.checkpoint.is_empty() {
        return Err(Error::parameter("eval requires checkpoint = <path>"));
    }
    let (model, _) = load_checkpoint::<f64>(Path::new(&cfg.checkpoint))?;
    let mut master = Rng::seed_from(cfg.seed);
    let mut data_rng = master.split();
    let data = load_image_dataset(cfg, &mut data_rng)?;

    let sweep = [0.0, 0.5, 0.9, 0.99];
    let mut rows = Vec::new();
    let mut last = Vec::new();
    for &threshold in &sweep {
        let acc = model.thresholded_accuracy(&data.test_x, &data.test_y, threshold)?;
        rows.push(vec![fmt_f64(threshold), fmt_f64(acc)]);
        last.push(format!("{threshold}:{acc:.3}"));
    }
    let mut s = summary(out_dir);
    let path = out_dir.join("eval.csv");
    write_csv(&path, &["threshold", "accuracy"], &rows)?;
    s.artifacts.push(path);
    s.headlines.push(format!("thresholded accuracy {}", last.join(" ")));
    Ok(s)
}

// Openness/f_measure re-exported for the CLI's convenience.
pub use crate::eval::metrics::openness as openness_value;
pub use crate::eval::metrics::f_measure as f_measure_value;

#[allow(unused_imports)]
use f_measure as _keep;
