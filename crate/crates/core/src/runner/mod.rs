//! Declarative experiment configuration and the runner.
//!
//! Configs are flat `key = value` text (one pair per line, `#` comments).
//! Every task has complete defaults; a config file and CLI flag overrides
//! both funnel through [`ExperimentConfig::set`], so unknown keys are
//! rejected everywhere and `parse(emit(config)) == config` holds.

pub mod experiments;

use std::path::PathBuf;

use crate::classifier::Variant;
use crate::dae::{DecoderMode, JacobianMethod};
use crate::error::{Error, Result};
use crate::fooling::FoolTarget;

/// Experiment selector; one subcommand each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Rings,
    Fool,
    Openset,
    Oneclass,
    Gradcheck,
    Confmap,
    Train,
    Eval,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Rings => "rings",
            Task::Fool => "fool",
            Task::Openset => "openset",
            Task::Oneclass => "oneclass",
            Task::Gradcheck => "gradcheck",
            Task::Confmap => "confmap",
            Task::Train => "train",
            Task::Eval => "eval",
        }
    }

    pub fn from_name(name: &str) -> Result<Task> {
        Ok(match name {
            "rings" => Task::Rings,
            "fool" => Task::Fool,
            "openset" => Task::Openset,
            "oneclass" => Task::Oneclass,
            "gradcheck" => Task::Gradcheck,
            "confmap" => Task::Confmap,
            "train" => Task::Train,
            "eval" => Task::Eval,
            other => return Err(Error::parameter(format!("unknown task `{other}`"))),
        })
    }
}

/// Where image data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// Deterministic synthetic glyph digits.
    Synthetic,
    /// IDX files in `data_dir` (`train-images-idx3-ubyte`, ...).
    Idx,
}

/// Full experiment description. Field defaults follow the reported
/// hyperparameters per task where they exist (alpha/beta/sigma per task,
/// batch 64, Adam eta 0.001, omega 10, FGN eta 1e-5); sizes marked "desk"
/// in the docs are reduced from the full-scale runs to bound runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub variant: Variant,
    /// Use the fixed convolutional architecture instead of the dense one.
    pub conv: bool,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub lambda_l2: f64,
    pub lambda_rec: f64,
    pub eta: f64,
    pub fgn_eta: f64,
    pub epochs: usize,
    pub steps: usize,
    pub batch: usize,
    pub omega: usize,
    pub threshold: f64,
    pub seed: u64,
    pub trials_per_class: usize,
    pub max_updates: usize,
    pub fool_target: FoolTarget,
    pub known_counts: Vec<usize>,
    pub repetitions: usize,
    pub train_limit: usize,
    pub test_limit: usize,
    pub data: DataSource,
    pub data_dir: String,
    pub synth_train_per_class: usize,
    pub synth_test_per_class: usize,
    pub decoder_mode: DecoderMode,
    pub use_gate: bool,
    pub jacobian: JacobianMethod,
    pub fd_step: f64,
    pub grid: usize,
    pub record_every: usize,
    pub rings_per_ring: usize,
    pub out_dir: String,
    pub checkpoint: String,
}

impl ExperimentConfig {
    /// Task-specific defaults.
    pub fn for_task(task: Task) -> Self {
        let mut cfg = ExperimentConfig {
            task,
            variant: Variant::Dae,
            conv: false,
            hidden: vec![400],
            classes: 10,
            alpha: 20.0,
            beta: 10.0,
            sigma: 0.2,
            lambda_l2: 0.0,
            lambda_rec: 1.0,
            eta: 1e-3,
            fgn_eta: 1e-5,
            epochs: 20,
            steps: 0,
            batch: 64,
            omega: 10,
            threshold: 0.9,
            seed: 42,
            trials_per_class: 5,
            max_updates: 2000,
            fool_target: FoolTarget::UnscaledY,
            known_counts: vec![1, 2, 4, 7, 10],
            repetitions: 5,
            train_limit: 2000,
            test_limit: 0,
            data: DataSource::Synthetic,
            data_dir: String::new(),
            synth_train_per_class: 200,
            synth_test_per_class: 100,
            decoder_mode: DecoderMode::Symmetric,
            use_gate: true,
            jacobian: JacobianMethod::Exact,
            fd_step: 1e-4,
            grid: 120,
            record_every: 50,
            rings_per_ring: 1000,
            out_dir: String::new(),
            checkpoint: String::new(),
        };
        match task {
            Task::Rings | Task::Confmap => {
                cfg.hidden = vec![200, 200];
                cfg.classes = 3;
                cfg.alpha = 40.0;
                cfg.beta = 5.0;
                cfg.sigma = 0.2;
                cfg.steps = 10_000;
                cfg.epochs = 0;
                cfg.train_limit = 0;
            }
            Task::Fool => {}
            Task::Openset => {
                cfg.threshold = 0.99;
                cfg.alpha = 3.0;
            }
            Task::Oneclass => {
                cfg.alpha = 3.0;
                cfg.sigma = 0.3;
                cfg.lambda_l2 = 10.0;
                cfg.train_limit = 600;
            }
            Task::Gradcheck | Task::Train | Task::Eval => {}
        }
        cfg
    }

    /// Applies one `key = value` assignment; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn usize_of(key: &str, value: &str) -> Result<usize> {
            value.parse().map_err(|_| Error::parameter(format!("bad {key}: `{value}`")))
        }
        fn f64_of(key: &str, value: &str) -> Result<f64> {
            value.parse().map_err(|_| Error::parameter(format!("bad {key}: `{value}`")))
        }
        fn list_of(key: &str, value: &str) -> Result<Vec<usize>> {
            value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim().parse().map_err(|_| Error::parameter(format!("bad {key}: `{value}`")))
                })
                .collect()
        }
        match key {
            "task" => {
                let task = Task::from_name(value)?;
                if task != self.task {
                    return Err(Error::parameter(format!(
                        "config is for task `{}` but `{}` was requested",
                        value,
                        self.task.name()
                    )));
                }
            }
            "variant" => {
                self.variant = match value {
                    "plain" => Variant::Plain,
                    "cool" => Variant::Cool,
                    "dae" => Variant::Dae,
                    other => return Err(Error::parameter(format!("unknown variant `{other}`"))),
                }
            }
            "conv" => {
                self.conv = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(Error::parameter(format!("bad conv: `{other}`"))),
                }
            }
            "hidden" => self.hidden = list_of(key, value)?,
            "classes" => self.classes = usize_of(key, value)?,
            "alpha" => self.alpha = f64_of(key, value)?,
            "beta" => self.beta = f64_of(key, value)?,
            "sigma" => self.sigma = f64_of(key, value)?,
            "lambda_l2" => self.lambda_l2 = f64_of(key, value)?,
            "lambda_rec" => self.lambda_rec = f64_of(key, value)?,
            "eta" => self.eta = f64_of(key, value)?,
            "fgn_eta" => self.fgn_eta = f64_of(key, value)?,
            "epochs" => self.epochs = usize_of(key, value)?,
            "steps" => self.steps = usize_of(key, value)?,
            "batch" => self.batch = usize_of(key, value)?,
            "omega" => self.omega = usize_of(key, value)?,
            "threshold" => self.threshold = f64_of(key, value)?,
            "seed" => {
                self.seed =
                    value.parse().map_err(|_| Error::parameter(format!("bad seed: `{value}`")))?
            }
            "trials_per_class" => self.trials_per_class = usize_of(key, value)?,
            "max_updates" => self.max_updates = usize_of(key, value)?,
            "fool_target" => {
                self.fool_target = match value {
                    "y" => FoolTarget::UnscaledY,
                    "scaled_y" => FoolTarget::ScaledY,
                    other => return Err(Error::parameter(format!("unknown fool_target `{other}`"))),
                }
            }
            "known_counts" => self.known_counts = list_of(key, value)?,
            "repetitions" => self.repetitions = usize_of(key, value)?,
            "train_limit" => self.train_limit = usize_of(key, value)?,
            "test_limit" => self.test_limit = usize_of(key, value)?,
            "data" => {
                self.data = match value {
                    "synthetic" => DataSource::Synthetic,
                    "idx" => DataSource::Idx,
                    other => return Err(Error::parameter(format!("unknown data source `{other}`"))),
                }
            }
            "data_dir" => self.data_dir = value.to_string(),
            "synth_train_per_class" => self.synth_train_per_class = usize_of(key, value)?,
            "synth_test_per_class" => self.synth_test_per_class = usize_of(key, value)?,
            "decoder_mode" => {
                self.decoder_mode = match value {
                    "symmetric" => DecoderMode::Symmetric,
                    "asymmetric" => DecoderMode::Asymmetric,
                    other => {
                        return Err(Error::parameter(format!("unknown decoder_mode `{other}`")))
                    }
                }
            }
            "use_gate" => {
                self.use_gate = match value {
                    "true" => true,
                    "false" => false,
                    other => return Err(Error::parameter(format!("bad use_gate: `{other}`"))),
                }
            }
            "jacobian" => {
                self.jacobian = match value {
                    "exact" => JacobianMethod::Exact,
                    "finite_diff" => JacobianMethod::FiniteDiff,
                    other => return Err(Error::parameter(format!("unknown jacobian `{other}`"))),
                }
            }
            "fd_step" => self.fd_step = f64_of(key, value)?,
            "grid" => self.grid = usize_of(key, value)?,
            "record_every" => self.record_every = usize_of(key, value)?,
            "rings_per_ring" => self.rings_per_ring = usize_of(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            "checkpoint" => self.checkpoint = value.to_string(),
            other => return Err(Error::parameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Builds a config from task defaults, an optional config file, and
    /// explicit overrides, in that precedence order.
    pub fn from_sources(
        task: Task,
        file_text: Option<&str>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut cfg = ExperimentConfig::for_task(task);
        if let Some(text) = file_text {
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::parameter(format!("config line {}: expected key = value", lineno + 1))
                })?;
                cfg.set(key.trim(), value.trim())?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    /// Canonical full dump; `from_sources(task, emit(cfg))` reproduces `cfg`.
    pub fn emit(&self) -> String {
        let list = |v: &[usize]| {
            v.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
        };
        let f = crate::io::csvout::fmt_f64;
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("task", self.task.name().into());
        push("variant", self.variant.name().into());
        push("conv", self.conv.to_string());
        push("hidden", list(&self.hidden));
        push("classes", self.classes.to_string());
        push("alpha", f(self.alpha));
        push("beta", f(self.beta));
        push("sigma", f(self.sigma));
        push("lambda_l2", f(self.lambda_l2));
        push("lambda_rec", f(self.lambda_rec));
        push("eta", f(self.eta));
        push("fgn_eta", f(self.fgn_eta));
        push("epochs", self.epochs.to_string());
        push("steps", self.steps.to_string());
        push("batch", self.batch.to_string());
        push("omega", self.omega.to_string());
        push("threshold", f(self.threshold));
        push("seed", self.seed.to_string());
        push("trials_per_class", self.trials_per_class.to_string());
        push("max_updates", self.max_updates.to_string());
        push(
            "fool_target",
            match self.fool_target {
                FoolTarget::UnscaledY => "y".into(),
                FoolTarget::ScaledY => "scaled_y".into(),
            },
        );
        push("known_counts", list(&self.known_counts));
        push("repetitions", self.repetitions.to_string());
        push("train_limit", self.train_limit.to_string());
        push("test_limit", self.test_limit.to_string());
        push(
            "data",
            match self.data {
                DataSource::Synthetic => "synthetic".into(),
                DataSource::Idx => "idx".into(),
            },
        );
        push("data_dir", self.data_dir.clone());
        push("synth_train_per_class", self.synth_train_per_class.to_string());
        push("synth_test_per_class", self.synth_test_per_class.to_string());
        push(
            "decoder_mode",
            match self.decoder_mode {
                DecoderMode::Symmetric => "symmetric".into(),
                DecoderMode::Asymmetric => "asymmetric".into(),
            },
        );
        push("use_gate", self.use_gate.to_string());
        push(
            "jacobian",
            match self.jacobian {
                JacobianMethod::Exact => "exact".into(),
                JacobianMethod::FiniteDiff => "finite_diff".into(),
            },
        );
        push("fd_step", f(self.fd_step));
        push("grid", self.grid.to_string());
        push("record_every", self.record_every.to_string());
        push("rings_per_ring", self.rings_per_ring.to_string());
        push("out_dir", self.out_dir.clone());
        push("checkpoint", self.checkpoint.clone());
        out
    }

    /// Output directory: explicit field, then `CONFIDAE_OUT`, then
    /// `./confidae-out/<task>`.
    pub fn resolve_out_dir(&self) -> PathBuf {
        if !self.out_dir.is_empty() {
            return PathBuf::from(&self.out_dir);
        }
        if let Ok(base) = std::env::var("CONFIDAE_OUT") {
            if !base.is_empty() {
                return PathBuf::from(base).join(self.task.name());
            }
        }
        PathBuf::from("confidae-out").join(self.task.name())
    }

    /// FNV-1a hash of the canonical dump, for run manifests.
    pub fn config_hash(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.emit().into_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x1000_0000_01b3);
        }
        hash
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub headlines: Vec<String>,
    /// False when the task itself found failures (gradient checks).
    pub passed: bool,
}

/// Executes the configured experiment and writes all artifacts plus a
/// `manifest.txt` recording the config, its hash, versions, and wall time.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    let started = std::time::Instant::now();
    let out_dir = config.resolve_out_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut summary = match config.task {
        Task::Rings => experiments::rings_run(config, &out_dir)?,
        Task::Fool => experiments::fool_run(config, &out_dir)?,
        Task::Openset => experiments::openset_run(config, &out_dir)?,
        Task::Oneclass => experiments::oneclass_run(config, &out_dir)?,
        Task::Gradcheck => experiments::gradcheck_run(config, &out_dir)?,
        Task::Confmap => experiments::confmap_run(config, &out_dir)?,
        Task::Train => experiments::train_run(config, &out_dir)?,
        Task::Eval => experiments::eval_run(config, &out_dir)?,
    };
    let manifest_path = out_dir.join("manifest.txt");
    let mut manifest = String::new();
    manifest.push_str(&format!("confidae {}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!("config_hash {:016x}\n", config.config_hash()));
    manifest.push_str(&format!("seed {}\n", config.seed));
    manifest.push_str(&format!("wall_seconds {:.3}\n", started.elapsed().as_secs_f64()));
    manifest.push_str("artifacts");
    for artifact in &summary.artifacts {
        manifest.push(' ');
        manifest.push_str(&artifact.file_name().unwrap_or_default().to_string_lossy());
    }
    manifest.push_str("\n-- config --\n");
    manifest.push_str(&config.emit());
    std::fs::write(&manifest_path, manifest)?;
    summary.artifacts.push(manifest_path);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emit_parse_round_trip_all_tasks() {
        for task in [
            Task::Rings,
            Task::Fool,
            Task::Openset,
            Task::Oneclass,
            Task::Gradcheck,
            Task::Confmap,
            Task::Train,
            Task::Eval,
        ] {
            let mut cfg = ExperimentConfig::for_task(task);
            cfg.seed = 1234;
            cfg.hidden = vec![32, 16];
            cfg.known_counts = vec![1, 3];
            let text = cfg.emit();
            let parsed = ExperimentConfig::from_sources(task, Some(&text), &[]).unwrap();
            assert_eq!(parsed, cfg);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_sources(
            Task::Fool,
            Some("alpa = 3\n"), // typo
            &[],
        )
        .unwrap_err();
        let Error::Parameter(msg) = err else { panic!("wrong error kind") };
        assert!(msg.contains("alpa"), "{msg}");
    }

    #[test]
    fn task_mismatch_is_rejected() {
        assert!(ExperimentConfig::from_sources(Task::Fool, Some("task = rings\n"), &[]).is_err());
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg = ExperimentConfig::from_sources(
            Task::Fool,
            Some("threshold = 0.5\n"),
            &[("threshold".into(), "0.99".into())],
        )
        .unwrap();
        assert_eq!(cfg.threshold, 0.99);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = ExperimentConfig::from_sources(
            Task::Fool,
            Some("# a comment\n\nthreshold = 0.8 # trailing\n"),
            &[],
        )
        .unwrap();
        assert_eq!(cfg.threshold, 0.8);
    }

    #[test]
    fn appendix_defaults_per_task() {
        let rings = ExperimentConfig::for_task(Task::Rings);
        assert_eq!((rings.alpha, rings.beta, rings.sigma), (40.0, 5.0, 0.2));
        assert_eq!(rings.batch, 64);
        let fool = ExperimentConfig::for_task(Task::Fool);
        assert_eq!((fool.alpha, fool.beta), (20.0, 10.0));
        assert_eq!(fool.fgn_eta, 1e-5);
        assert_eq!(fool.omega, 10);
        let openset = ExperimentConfig::for_task(Task::Openset);
        assert_eq!(openset.threshold, 0.99);
        let oneclass = ExperimentConfig::for_task(Task::Oneclass);
        assert_eq!((oneclass.sigma, oneclass.lambda_l2), (0.3, 10.0));
    }
}
