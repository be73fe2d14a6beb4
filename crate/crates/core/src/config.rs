//! Run configuration: a `key = value` file with dotted sections.
//!
//! ```text
//! # data.source = csv with data.path = series.csv also works
//! data.source = synth
//! synth.length = 5000
//! synth.noise_growth = 0.5
//! window.context_len = 48
//! window.pred_len = 24
//! model.arch = mlp1
//! model.hidden = 16
//! train.mode = constrained
//! train.primal_lr = 0.001
//! constraint.source = quantile
//! constraint.quantile = 0.5
//! constraint.erm_run = runs/erm
//! output.dir = runs/constrained
//! ```
//!
//! Unknown keys are rejected. Every omitted key takes the default listed in
//! [`RunConfig::default`].

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::{SplitSpec, SynthParams, WindowConfig};
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::predictor::{Arch, Dims};
use crate::record::{fmt_f64, fmt_list, parse_list, read_text, Record};
use crate::trainer::{DualEval, TrainConfig, TrainMode};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv { path: PathBuf, has_timestamps: bool },
    Synth(SynthParams),
}

/// Which ERM error profile feeds a derived constraint level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSplit {
    Train,
    Val,
}

impl ErrorSplit {
    pub fn name(self) -> &'static str {
        match self {
            ErrorSplit::Train => "train",
            ErrorSplit::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSource {
    None,
    Explicit(Vec<f64>),
    Quantile { q: f64, split: ErrorSplit },
    Exponential { split: ErrorSplit },
    Grid,
    Monotonic,
}

impl ConstraintSource {
    pub fn needs_erm_run(&self) -> bool {
        matches!(self, ConstraintSource::Quantile { .. } | ConstraintSource::Exponential { .. } | ConstraintSource::Grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitSpec,
    pub window: WindowConfig,
    pub arch: Arch,
    pub hidden: usize,
    /// Parameter-initialization seed; `train.seed` when unset.
    pub model_seed: Option<u64>,
    pub train: TrainConfig,
    pub constraint: ConstraintSource,
    pub alpha: f64,
    pub erm_run: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub dataset_label: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::Synth(SynthParams::new(5000, 1, 0.5, 0)),
            split: SplitSpec::default(),
            window: WindowConfig { context_len: 48, pred_len: 24, target_channel: None },
            arch: Arch::Mlp1,
            hidden: 32,
            model_seed: None,
            train: TrainConfig::default(),
            constraint: ConstraintSource::None,
            alpha: 1.0,
            erm_run: None,
            out_dir: PathBuf::from("runs/out"),
            dataset_label: "synth".into(),
        }
    }
}

fn parse_val<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::config(key, format!("cannot parse `{raw}`: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rec = Record::parse("config", text)?;
        let mut cfg = RunConfig::default();
        let mut synth = SynthParams::new(5000, 1, 0.5, 0);
        let mut source = "synth".to_string();
        let mut csv_path: Option<PathBuf> = None;
        let mut has_ts = false;
        let mut csource = "none".to_string();
        let mut quantile: Option<f64> = None;
        let mut csplit = ErrorSplit::Val;
        let mut explicit: Option<Vec<f64>> = None;
        let (mut beta1, mut beta2, mut adam_eps) = (0.9, 0.999, 1e-8);
        let mut optimizer = "adam".to_string();

        for (key, raw) in rec.entries() {
            let k = key.as_str();
            let raw = raw.as_str();
            match k {
                "data.source" => source = raw.to_string(),
                "data.path" => csv_path = Some(PathBuf::from(raw)),
                "data.has_timestamps" => has_ts = parse_val(k, raw)?,
                "data.target_channel" => cfg.window.target_channel = Some(parse_val(k, raw)?),
                "data.label" => cfg.dataset_label = raw.to_string(),
                "synth.length" => synth.length = parse_val(k, raw)?,
                "synth.channels" => synth.channels = parse_val(k, raw)?,
                "synth.noise_growth" => synth.noise_growth = parse_val(k, raw)?,
                "synth.seed" => synth.seed = parse_val(k, raw)?,
                "synth.period" => synth.period = parse_val(k, raw)?,
                "synth.amplitude" => synth.amplitude = parse_val(k, raw)?,
                "synth.ar_coef" => synth.ar_coef = parse_val(k, raw)?,
                "synth.ar_sigma" => synth.ar_sigma = parse_val(k, raw)?,
                "synth.noise_sigma" => synth.noise_sigma = parse_val(k, raw)?,
                "split.train" => cfg.split.train_fraction = parse_val(k, raw)?,
                "split.val" => cfg.split.val_fraction = parse_val(k, raw)?,
                "split.test" => cfg.split.test_fraction = parse_val(k, raw)?,
                "window.context_len" => cfg.window.context_len = parse_val(k, raw)?,
                "window.pred_len" => cfg.window.pred_len = parse_val(k, raw)?,
                "model.arch" => cfg.arch = raw.parse().map_err(|e: Error| Error::config(k, e.to_string()))?,
                "model.hidden" => cfg.hidden = parse_val(k, raw)?,
                "model.seed" => cfg.model_seed = Some(parse_val(k, raw)?),
                "train.mode" => cfg.train.mode = raw.parse().map_err(|e: Error| Error::config(k, e.to_string()))?,
                "train.primal_lr" => cfg.train.primal_lr = parse_val(k, raw)?,
                "train.dual_lr" => cfg.train.dual_lr = parse_val(k, raw)?,
                "train.slack_lr" => cfg.train.slack_lr = parse_val(k, raw)?,
                "train.epochs" => cfg.train.epochs = parse_val(k, raw)?,
                "train.batch_size" => cfg.train.batch_size = parse_val(k, raw)?,
                "train.dual_init" => cfg.train.dual_init = parse_val(k, raw)?,
                "train.optimizer" => optimizer = raw.to_string(),
                "train.adam_beta1" => beta1 = parse_val(k, raw)?,
                "train.adam_beta2" => beta2 = parse_val(k, raw)?,
                "train.adam_eps" => adam_eps = parse_val(k, raw)?,
                "train.early_stopping" => cfg.train.early_stopping = parse_val(k, raw)?,
                "train.patience" => cfg.train.patience = parse_val(k, raw)?,
                "train.seed" => cfg.train.seed = parse_val(k, raw)?,
                "train.dual_eval" => {
                    cfg.train.dual_eval = match raw {
                        "batch" => DualEval::Batch,
                        "full" => DualEval::Full,
                        _ => return Err(Error::config(k, "expected `batch` or `full`")),
                    }
                }
                "train.freeze_duals" => cfg.train.freeze_duals = parse_val(k, raw)?,
                "train.shuffle" => cfg.train.shuffle = parse_val(k, raw)?,
                "constraint.source" => csource = raw.to_string(),
                "constraint.epsilon" => {
                    explicit = Some(parse_list(k, raw).map_err(|e| Error::config(k, e.to_string()))?)
                }
                "constraint.quantile" => quantile = Some(parse_val(k, raw)?),
                "constraint.split" => {
                    csplit = match raw {
                        "train" => ErrorSplit::Train,
                        "val" => ErrorSplit::Val,
                        _ => return Err(Error::config(k, "expected `train` or `val`")),
                    }
                }
                "constraint.alpha" => cfg.alpha = parse_val(k, raw)?,
                "constraint.erm_run" => cfg.erm_run = Some(PathBuf::from(raw)),
                "output.dir" => cfg.out_dir = PathBuf::from(raw),
                other => return Err(Error::config(other, "unknown key")),
            }
        }

        cfg.data = match source.as_str() {
            "synth" => DataSource::Synth(synth),
            "csv" => DataSource::Csv {
                path: csv_path.ok_or_else(|| Error::config("data.path", "required when data.source = csv"))?,
                has_timestamps: has_ts,
            },
            _ => return Err(Error::config("data.source", "expected `synth` or `csv`")),
        };
        cfg.train.optimizer = match optimizer.as_str() {
            "adam" => OptimizerKind::Adam { beta1, beta2, eps: adam_eps },
            "sgd" => OptimizerKind::Sgd,
            _ => return Err(Error::config("train.optimizer", "expected `adam` or `sgd`")),
        };
        cfg.constraint = match csource.as_str() {
            "none" => ConstraintSource::None,
            "explicit" => ConstraintSource::Explicit(
                explicit.ok_or_else(|| Error::config("constraint.epsilon", "required for an explicit source"))?,
            ),
            "quantile" => ConstraintSource::Quantile {
                q: quantile.ok_or_else(|| Error::config("constraint.quantile", "required for a quantile source"))?,
                split: csplit,
            },
            "exponential" => ConstraintSource::Exponential { split: csplit },
            "grid" => ConstraintSource::Grid,
            "monotonic" => ConstraintSource::Monotonic,
            _ => return Err(Error::config("constraint.source", format!("unknown source `{csource}`"))),
        };
        Ok(cfg)
    }

    pub fn model_seed(&self) -> u64 {
        self.model_seed.unwrap_or(self.train.seed)
    }

    /// Overrides the training seed (and the model seed unless pinned).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self
    }

    pub fn dims(&self, channels: usize) -> Dims {
        Dims {
            context_len: self.window.context_len,
            pred_len: self.window.pred_len,
            input_channels: channels,
            output_channels: if self.window.target_channel.is_some() { 1 } else { channels },
            hidden: self.hidden,
        }
    }

    /// Checks internal consistency. `for_grid` allows the grid source.
    pub fn validate(&self, for_grid: bool) -> Result<()> {
        self.train.validate()?;
        self.split.validate().map_err(|e| Error::config("split", e.to_string()))?;
        self.window.validate().map_err(|e| Error::config("window", e.to_string()))?;
        if self.arch == Arch::Mlp1 && self.hidden == 0 {
            return Err(Error::config("model.hidden", "must be >= 1 for mlp1"));
        }
        match &self.data {
            DataSource::Csv { path, .. } if !path.exists() => {
                return Err(Error::config("data.path", format!("{} does not exist", path.display())));
            }
            DataSource::Synth(s) => {
                if s.length == 0 || s.channels == 0 {
                    return Err(Error::config("synth", "length and channels must be >= 1"));
                }
                if let Some(tc) = self.window.target_channel {
                    if tc >= s.channels {
                        return Err(Error::config("data.target_channel", "out of range"));
                    }
                }
            }
            _ => {}
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config("constraint.alpha", "must be positive"));
        }
        let mode = self.train.mode;
        match (&self.constraint, mode) {
            (ConstraintSource::None, TrainMode::Erm) => {}
            (ConstraintSource::None, m) => {
                return Err(Error::config("constraint.source", format!("mode {m} needs a constraint source")));
            }
            (_, TrainMode::Erm) => {
                return Err(Error::config("constraint.source", "ERM takes no constraints; set it to none"));
            }
            (ConstraintSource::Monotonic, TrainMode::Monotonic) => {}
            (ConstraintSource::Monotonic, _) | (_, TrainMode::Monotonic) => {
                return Err(Error::config("constraint.source", "monotonic source and train.mode = monotonic go together"));
            }
            (ConstraintSource::Grid, _) if !for_grid => {
                return Err(Error::config("constraint.source", "the grid source is only valid for `lshape grid`"));
            }
            (ConstraintSource::Explicit(eps), _) if eps.len() != self.window.pred_len => {
                return Err(Error::config(
                    "constraint.epsilon",
                    format!("{} levels for pred_len {}", eps.len(), self.window.pred_len),
                ));
            }
            (ConstraintSource::Quantile { q, .. }, _) if !(*q > 0.0 && *q < 1.0) => {
                return Err(Error::config("constraint.quantile", "must lie in (0, 1)"));
            }
            _ => {}
        }
        if for_grid && !matches!(self.constraint, ConstraintSource::Grid) {
            return Err(Error::config("constraint.source", "`lshape grid` needs constraint.source = grid"));
        }
        if self.constraint.needs_erm_run() {
            let dir = self.erm_run_dir();
            if !dir.join("train_report.txt").exists() || !dir.join("val_report.txt").exists() {
                return Err(Error::MissingErmTrace(dir));
            }
        }
        Ok(())
    }

    /// Where ERM reports are read from: `constraint.erm_run`, else `<output.dir>/erm`.
    pub fn erm_run_dir(&self) -> PathBuf {
        self.erm_run.clone().unwrap_or_else(|| self.out_dir.join("erm"))
    }

    /// Canonical rendering of every resolved setting except the output directory.
    pub fn canonical_string(&self) -> String {
        let mut rec = Record::new("config");
        match &self.data {
            DataSource::Synth(s) => {
                rec.push("data.source", "synth")
                    .push("synth.length", s.length)
                    .push("synth.channels", s.channels)
                    .push_f64("synth.noise_growth", s.noise_growth)
                    .push("synth.seed", s.seed)
                    .push_f64("synth.period", s.period)
                    .push_f64("synth.amplitude", s.amplitude)
                    .push_f64("synth.ar_coef", s.ar_coef)
                    .push_f64("synth.ar_sigma", s.ar_sigma)
                    .push_f64("synth.noise_sigma", s.noise_sigma);
            }
            DataSource::Csv { path, has_timestamps } => {
                rec.push("data.source", "csv")
                    .push("data.path", path.display())
                    .push("data.has_timestamps", has_timestamps);
            }
        }
        if let Some(tc) = self.window.target_channel {
            rec.push("data.target_channel", tc);
        }
        rec.push("data.label", &self.dataset_label)
            .push_f64("split.train", self.split.train_fraction)
            .push_f64("split.val", self.split.val_fraction)
            .push_f64("split.test", self.split.test_fraction)
            .push("window.context_len", self.window.context_len)
            .push("window.pred_len", self.window.pred_len)
            .push("model.arch", self.arch)
            .push("model.hidden", self.hidden)
            .push("model.seed", self.model_seed());
        let t = &self.train;
        rec.push("train.mode", t.mode)
            .push_f64("train.primal_lr", t.primal_lr)
            .push_f64("train.dual_lr", t.dual_lr)
            .push_f64("train.slack_lr", t.slack_lr)
            .push("train.epochs", t.epochs)
            .push("train.batch_size", t.batch_size)
            .push_f64("train.dual_init", t.dual_init);
        match t.optimizer {
            OptimizerKind::Sgd => rec.push("train.optimizer", "sgd"),
            OptimizerKind::Adam { beta1, beta2, eps } => rec
                .push("train.optimizer", "adam")
                .push_f64("train.adam_beta1", beta1)
                .push_f64("train.adam_beta2", beta2)
                .push_f64("train.adam_eps", eps),
        };
        rec.push("train.early_stopping", t.early_stopping)
            .push("train.patience", t.patience)
            .push("train.seed", t.seed)
            .push("train.dual_eval", if t.dual_eval == DualEval::Full { "full" } else { "batch" })
            .push("train.freeze_duals", t.freeze_duals)
            .push("train.shuffle", t.shuffle);
        match &self.constraint {
            ConstraintSource::None => rec.push("constraint.source", "none"),
            ConstraintSource::Explicit(e) => rec.push("constraint.source", "explicit").push("constraint.epsilon", fmt_list(e)),
            ConstraintSource::Quantile { q, split } => rec
                .push("constraint.source", "quantile")
                .push("constraint.quantile", fmt_f64(*q))
                .push("constraint.split", split.name()),
            ConstraintSource::Exponential { split } => {
                rec.push("constraint.source", "exponential").push("constraint.split", split.name())
            }
            ConstraintSource::Grid => rec.push("constraint.source", "grid"),
            ConstraintSource::Monotonic => rec.push("constraint.source", "monotonic"),
        };
        rec.push_f64("constraint.alpha", self.alpha);
        rec.render(None)
    }

    /// First 16 hex digits of the SHA-256 of [`canonical_string`](Self::canonical_string).
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("train.primal_lr = 0.005\nwindow.pred_len = 12\n# comment\n").unwrap();
        assert_eq!(cfg.train.primal_lr, 0.005);
        assert_eq!(cfg.window.pred_len, 12);
        assert_eq!(cfg.train.dual_lr, 0.01);
        assert_eq!(cfg.train.dual_init, 1.0);
        cfg.validate(false).unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let invalid = |text: &str| matches!(RunConfig::parse(text).and_then(|c| c.validate(false)), Err(Error::ConfigInvalid { .. }));
        assert!(invalid("train.mode = constrained\n"));
        assert!(invalid("train.mode = erm\nconstraint.source = explicit\nconstraint.epsilon = 1\n"));
        assert!(invalid("no.such_key = 1\n"));
        assert!(invalid("train.primal_lr = fast\n"));
        assert!(invalid("train.mode = constrained\nconstraint.source = explicit\nconstraint.epsilon = 1,2\n"));
        assert!(invalid("train.mode = monotonic\nconstraint.source = explicit\nconstraint.epsilon = 1\n"));
        assert!(invalid("data.source = csv\ndata.path = /no/such/file.csv\n"));
        assert!(invalid("train.mode = constrained\nconstraint.source = grid\n"));
        let missing = RunConfig::parse("train.mode = constrained\nconstraint.source = quantile\nconstraint.quantile = 0.5\nconstraint.erm_run = /no/such/run\n")
            .unwrap()
            .validate(false);
        assert!(matches!(missing, Err(Error::MissingErmTrace(_))));
    }

    #[test]
    fn canonical_form_round_trips_and_fingerprint_ignores_output() {
        let text = "train.mode = constrained\nconstraint.source = explicit\nconstraint.epsilon = 0.5,0.5,0.5\nwindow.pred_len = 3\nsynth.seed = 9\ntrain.optimizer = sgd\n";
        let cfg = RunConfig::parse(text).unwrap();
        let back = RunConfig::parse(&cfg.canonical_string()).unwrap();
        assert_eq!(back.canonical_string(), cfg.canonical_string());
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        let mut moved = cfg.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.fingerprint(), cfg.fingerprint());
        assert_ne!(cfg.clone().with_seed(4).fingerprint(), cfg.fingerprint());
        assert_eq!(cfg.fingerprint().len(), 16);
    }
}
