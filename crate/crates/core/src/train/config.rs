//! Training configuration and its `key = value` text form.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::SplitRatios;
use crate::error::{Error, Result};
use crate::model::{key_values, parse_num, ModelConfig};

use super::schedule::Schedule;

/// Training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Loss {
    #[default]
    Mse,
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(Self::Mse),
            other => Err(Error::Config(format!("loss: unknown loss {other:?} (expected mse)"))),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("mse")
    }
}

/// Input length and horizon, written `T_in-τ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub input_len: usize,
    pub horizon: usize,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("scenario: expected `T_in-horizon`, got {s:?}")))?;
        Ok(Self {
            input_len: parse_num("scenario", a)?,
            horizon: parse_num("scenario", b)?,
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.input_len, self.horizon)
    }
}

/// Everything a training run needs besides the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_epochs: usize,
    pub warmup_lr: f64,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub seed: u64,
    pub loss: Loss,
    pub split: SplitRatios,
    /// Stride between training window starts.
    pub train_stride: usize,
    /// Stride between validation and test window starts; `None` means τ.
    pub eval_stride: Option<usize>,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            batch_size: 16,
            warmup_epochs: 5,
            warmup_lr: 1e-5,
            peak_lr: 5e-4,
            min_lr: 1e-6,
            seed: 0,
            loss: Loss::Mse,
            split: SplitRatios::default(),
            train_stride: 1,
            eval_stride: None,
            dataset: PathBuf::from("data.smvs"),
            out_dir: PathBuf::from("run"),
            model: ModelConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "warmup_epochs",
    "warmup_lr",
    "peak_lr",
    "min_lr",
    "seed",
    "loss",
    "split",
    "train_stride",
    "eval_stride",
    "dataset",
    "out_dir",
];

impl TrainConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            epochs: self.epochs,
            warmup_epochs: self.warmup_epochs,
            warmup_lr: self.warmup_lr,
            peak_lr: self.peak_lr,
            min_lr: self.min_lr,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            input_len: self.model.input_len,
            horizon: self.model.horizon,
        }
    }

    pub fn eval_stride(&self) -> usize {
        self.eval_stride.unwrap_or(self.model.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_training()?;
        self.model.validate()
    }

    /// Checks the optimiser, schedule and window settings only.
    pub fn validate_training(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be below epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.train_stride == 0 || self.eval_stride == Some(0) {
            return Err(Error::Config("window strides must be at least 1".into()));
        }
        for (key, lr) in [("warmup_lr", self.warmup_lr), ("peak_lr", self.peak_lr), ("min_lr", self.min_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!("{key} must be a finite non-negative rate")));
            }
        }
        Ok(())
    }

    /// Sets one training or model key; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "warmup_epochs" => self.warmup_epochs = parse_num(key, value)?,
            "warmup_lr" => self.warmup_lr = parse_num(key, value)?,
            "peak_lr" => self.peak_lr = parse_num(key, value)?,
            "min_lr" => self.min_lr = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "loss" => self.loss = value.parse()?,
            "split" => self.split = value.parse()?,
            "train_stride" => self.train_stride = parse_num(key, value)?,
            "eval_stride" => {
                self.eval_stride = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "dataset" => self.dataset = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "scenario" => {
                let s: Scenario = value.parse()?;
                self.model.input_len = s.input_len;
                self.model.horizon = s.horizon;
            }
            _ => {
                if !self.model.set(key, value)? {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in key_values(text)? {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?}: expected key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "warmup_epochs" => self.warmup_epochs.to_string(),
            "warmup_lr" => self.warmup_lr.to_string(),
            "peak_lr" => self.peak_lr.to_string(),
            "min_lr" => self.min_lr.to_string(),
            "seed" => self.seed.to_string(),
            "loss" => self.loss.to_string(),
            "split" => self.split.to_string(),
            "train_stride" => self.train_stride.to_string(),
            "eval_stride" => self.eval_stride.map_or("auto".into(), |s| s.to_string()),
            "dataset" => self.dataset.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return self.model.get(key),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                out.push_str(&format!("{key} = {v}\n"));
            }
        }
        out.push_str(&self.model.to_text());
        out
    }
}
