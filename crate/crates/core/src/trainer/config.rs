use std::path::PathBuf;

use crate::config::{fmt_f64, KvMap};
use crate::detection::{DecisionStrategy, DetectionConfig, EmOptions, TemperatureSchedule};
use crate::error::{NlabError, Result};
use crate::nn::{Architecture, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Plain cross-entropy, no rotation, no detection.
    Baseline,
    /// Rotated inputs, plain class cross-entropy.
    Augmentation,
    /// `CE_class + α(1 − λ)·CE_rot`.
    Regularization,
    /// `CE_class` when `λ ≥ c`, otherwise `CE_rot`.
    Separation,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Baseline => "baseline",
            TrainMode::Augmentation => "augmentation",
            TrainMode::Regularization => "regularization",
            TrainMode::Separation => "separation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(TrainMode::Baseline),
            "augmentation" => Ok(TrainMode::Augmentation),
            "regularization" => Ok(TrainMode::Regularization),
            "separation" => Ok(TrainMode::Separation),
            other => Err(NlabError::Config(format!("unknown training mode `{other}`"))),
        }
    }

    pub fn rotates(self) -> bool {
        self != TrainMode::Baseline
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, TrainMode::Regularization | TrainMode::Separation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Row label in reports.
    pub name: String,
    pub mode: TrainMode,
    pub decision: DecisionStrategy,
    /// α of the regularization objective.
    pub reg_weight: f64,
    /// c of the separation objective.
    pub cutoff: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    /// Noise rate of the prepared data; informational.
    pub noise_rate: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub alpha_epsilon: f64,
    pub sgd: SgdConfig,
    pub arch: Architecture,
    pub model_seed: u64,
    pub rotation_seed: u64,
    /// Prepared data directory.
    pub data_dir: Option<PathBuf>,
    /// Class-balanced prefix sizes; 0 keeps everything.
    pub subset: usize,
    pub val_subset: usize,
    pub test_subset: usize,
    pub evaluate_test: bool,
    pub normalize_loss: bool,
    pub em: EmOptions,
    /// Replaces detection with a constant λ.
    pub fixed_lambda: Option<f64>,
    /// Run detection passes even when they do not feed the objective.
    pub monitor_detection: bool,
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            name: String::new(),
            mode: TrainMode::Regularization,
            decision: DecisionStrategy::LossOnly,
            reg_weight: 1.0,
            cutoff: 0.5,
            warmup_epochs: 20,
            max_epochs: 150,
            noise_rate: 0.0,
            alpha_start: 0.05,
            alpha_end: -0.05,
            alpha_epsilon: 1e-3,
            sgd: SgdConfig::default(),
            arch: Architecture::default(),
            model_seed: 0,
            rotation_seed: 0,
            data_dir: None,
            subset: 0,
            val_subset: 0,
            test_subset: 0,
            evaluate_test: true,
            normalize_loss: true,
            em: EmOptions::default(),
            fixed_lambda: None,
            monitor_detection: false,
            eval_chunk: 256,
        }
    }
}

const KEYS: &[&str] = &[
    "name",
    "mode",
    "decision",
    "reg_weight",
    "cutoff",
    "warmup_epochs",
    "max_epochs",
    "noise_rate",
    "schedule.alpha_start",
    "schedule.alpha_end",
    "schedule.epsilon",
    "sgd.learning_rate",
    "sgd.momentum",
    "sgd.batch_size",
    "sgd.weight_decay",
    "sgd.seed",
    "model.arch",
    "model.seed",
    "train.rotation_seed",
    "data.dir",
    "data.subset",
    "data.val_subset",
    "data.test_subset",
    "eval.test",
    "eval.chunk",
    "detection.normalize_loss",
    "detection.fixed_lambda",
    "detection.monitor",
    "detection.em_max_iters",
    "detection.em_tol",
    "detection.variance_floor",
];

/// Key prefixes written into run manifests that are not settings.
const PASSIVE_PREFIXES: &[&str] = &["derived.", "prepare."];

impl TrainConfig {
    /// `name` if set, otherwise `mode` or `mode_decision`.
    pub fn display_name(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        if self.mode.uses_lambda() {
            format!("{}_{}", self.mode.as_str(), self.decision.as_str())
        } else {
            self.mode.as_str().to_string()
        }
    }

    /// Cosine schedule over the post-warm-up epochs.
    pub fn schedule(&self) -> TemperatureSchedule {
        TemperatureSchedule {
            alpha_start: self.alpha_start,
            alpha_end: self.alpha_end,
            total_epochs: self.max_epochs.saturating_sub(self.warmup_epochs).max(1),
            epsilon: self.alpha_epsilon,
        }
    }

    /// Whether λ comes from detection passes.
    pub fn lambda_from_detection(&self) -> bool {
        self.mode.uses_lambda() && self.fixed_lambda.is_none()
    }

    pub fn runs_detection(&self) -> bool {
        self.lambda_from_detection() || self.monitor_detection
    }

    pub fn detection_config(&self) -> DetectionConfig {
        DetectionConfig {
            strategy: self.decision,
            schedule: self.schedule(),
            normalize_loss: self.normalize_loss,
            em: self.em,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(NlabError::Config("max_epochs must be at least 1".into()));
        }
        if self.warmup_epochs > self.max_epochs {
            return Err(NlabError::Config(format!(
                "warmup_epochs {} exceeds max_epochs {}",
                self.warmup_epochs, self.max_epochs
            )));
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return Err(NlabError::Config(format!("cutoff {} outside [0, 1]", self.cutoff)));
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(NlabError::Config(format!(
                "reg_weight {} must be non-negative",
                self.reg_weight
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(NlabError::Config(format!(
                "noise_rate {} outside [0, 1]",
                self.noise_rate
            )));
        }
        if let Some(l) = self.fixed_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(NlabError::Config(format!("fixed_lambda {l} outside [0, 1]")));
            }
        }
        if self.eval_chunk == 0 {
            return Err(NlabError::Config("eval.chunk must be at least 1".into()));
        }
        if self.mode.rotates() && self.arch.input.height != self.arch.input.width {
            return Err(NlabError::Config("rotation modes need square inputs".into()));
        }
        self.schedule().validate()?;
        self.sgd.validate()?;
        self.arch.validate()
    }

    /// Every setting as `key = value`.
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("name", self.display_name());
        kv.set("mode", self.mode.as_str());
        kv.set("decision", self.decision.as_str());
        kv.set("reg_weight", fmt_f64(self.reg_weight));
        kv.set("cutoff", fmt_f64(self.cutoff));
        kv.set("warmup_epochs", self.warmup_epochs);
        kv.set("max_epochs", self.max_epochs);
        kv.set("noise_rate", fmt_f64(self.noise_rate));
        kv.set("schedule.alpha_start", fmt_f64(self.alpha_start));
        kv.set("schedule.alpha_end", fmt_f64(self.alpha_end));
        kv.set("schedule.epsilon", fmt_f64(self.alpha_epsilon));
        kv.set("sgd.learning_rate", fmt_f64(self.sgd.learning_rate));
        kv.set("sgd.momentum", fmt_f64(self.sgd.momentum));
        kv.set("sgd.batch_size", self.sgd.batch_size);
        kv.set("sgd.weight_decay", fmt_f64(self.sgd.weight_decay));
        kv.set("sgd.seed", self.sgd.seed);
        kv.set("model.arch", self.arch.describe());
        kv.set("model.seed", self.model_seed);
        kv.set("train.rotation_seed", self.rotation_seed);
        if let Some(d) = &self.data_dir {
            kv.set("data.dir", d.display());
        }
        kv.set("data.subset", self.subset);
        kv.set("data.val_subset", self.val_subset);
        kv.set("data.test_subset", self.test_subset);
        kv.set("eval.test", self.evaluate_test);
        kv.set("eval.chunk", self.eval_chunk);
        kv.set("detection.normalize_loss", self.normalize_loss);
        kv.set(
            "detection.fixed_lambda",
            self.fixed_lambda.map(fmt_f64).unwrap_or_else(|| "none".into()),
        );
        kv.set("detection.monitor", self.monitor_detection);
        kv.set("detection.em_max_iters", self.em.max_iters);
        kv.set("detection.em_tol", fmt_f64(self.em.tol));
        kv.set("detection.variance_floor", fmt_f64(self.em.variance_floor));
        kv
    }

    /// Reads settings from `kv`, defaulting missing keys. Unknown keys are
    /// an error so typos do not pass silently.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        for k in kv.keys() {
            if !KEYS.contains(&k) && !PASSIVE_PREFIXES.iter().any(|p| k.starts_with(p)) {
                return Err(NlabError::Config(format!("unknown setting `{k}`")));
            }
        }
        let d = TrainConfig::default();
        let mode = kv.get("mode").map(TrainMode::parse).transpose()?.unwrap_or(d.mode);
        let decision = kv
            .get("decision")
            .map(DecisionStrategy::parse)
            .transpose()?
            .unwrap_or(d.decision);
        let arch = kv
            .get("model.arch")
            .map(Architecture::parse)
            .transpose()?
            .unwrap_or(d.arch);
        let fixed_lambda = match kv.get("detection.fixed_lambda") {
            None | Some("none") | Some("") => None,
            Some(_) => kv.parse_opt("detection.fixed_lambda")?,
        };
        let cfg = TrainConfig {
            name: kv.get("name").unwrap_or("").to_string(),
            mode,
            decision,
            reg_weight: kv.parse_or("reg_weight", d.reg_weight)?,
            cutoff: kv.parse_or("cutoff", d.cutoff)?,
            warmup_epochs: kv.parse_or("warmup_epochs", d.warmup_epochs)?,
            max_epochs: kv.parse_or("max_epochs", d.max_epochs)?,
            noise_rate: kv.parse_or("noise_rate", d.noise_rate)?,
            alpha_start: kv.parse_or("schedule.alpha_start", d.alpha_start)?,
            alpha_end: kv.parse_or("schedule.alpha_end", d.alpha_end)?,
            alpha_epsilon: kv.parse_or("schedule.epsilon", d.alpha_epsilon)?,
            sgd: SgdConfig {
                learning_rate: kv.parse_or("sgd.learning_rate", d.sgd.learning_rate)?,
                momentum: kv.parse_or("sgd.momentum", d.sgd.momentum)?,
                batch_size: kv.parse_or("sgd.batch_size", d.sgd.batch_size)?,
                weight_decay: kv.parse_or("sgd.weight_decay", d.sgd.weight_decay)?,
                seed: kv.parse_or("sgd.seed", d.sgd.seed)?,
            },
            arch,
            model_seed: kv.parse_or("model.seed", d.model_seed)?,
            rotation_seed: kv.parse_or("train.rotation_seed", d.rotation_seed)?,
            data_dir: kv.get("data.dir").map(PathBuf::from),
            subset: kv.parse_or("data.subset", d.subset)?,
            val_subset: kv.parse_or("data.val_subset", d.val_subset)?,
            test_subset: kv.parse_or("data.test_subset", d.test_subset)?,
            evaluate_test: kv.parse_or("eval.test", d.evaluate_test)?,
            eval_chunk: kv.parse_or("eval.chunk", d.eval_chunk)?,
            normalize_loss: kv.parse_or("detection.normalize_loss", d.normalize_loss)?,
            em: EmOptions {
                max_iters: kv.parse_or("detection.em_max_iters", d.em.max_iters)?,
                tol: kv.parse_or("detection.em_tol", d.em.tol)?,
                variance_floor: kv.parse_or("detection.variance_floor", d.em.variance_floor)?,
            },
            fixed_lambda,
            monitor_detection: kv.parse_or("detection.monitor", d.monitor_detection)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets every seed to `seed`.
    pub fn set_all_seeds(&mut self, seed: u64) {
        self.sgd.seed = seed;
        self.model_seed = seed;
        self.rotation_seed = seed;
    }
}
