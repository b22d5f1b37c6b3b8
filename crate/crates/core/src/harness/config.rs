//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::federation::{FedConfig, Mode};
use crate::harness::dataset::{FeatureNorm, Meta};
use crate::metrics::Reduction;
use crate::model::{Architecture, ModelKind, TrainParams, HIDDEN};

/// Keys in serialization order.
pub const KEYS: &[&str] = &[
    "dataset",
    "model",
    "mode",
    "lambda",
    "rounds",
    "seeds",
    "lr",
    "weight_decay",
    "dropout",
    "hidden",
    "heads",
    "feature_norm",
    "loss_reduction",
    "parallel",
    "out",
];

/// Unset `lr`, `dropout` and `heads` take the model's defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub model: ModelKind,
    pub mode: Mode,
    pub lambda: f64,
    pub rounds: u32,
    pub seeds: Vec<u64>,
    pub lr: Option<f64>,
    pub weight_decay: f64,
    pub dropout: Option<f64>,
    pub hidden: usize,
    pub heads: Option<usize>,
    pub feature_norm: FeatureNorm,
    pub loss_reduction: Reduction,
    pub parallel: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::from("data/cora"),
            model: ModelKind::Gcn,
            mode: Mode::Nfedgnn,
            lambda: 0.0,
            rounds: 200,
            seeds: vec![0, 1, 2],
            lr: None,
            weight_decay: 5e-4,
            dropout: None,
            hidden: HIDDEN,
            heads: None,
            feature_norm: FeatureNorm::Row,
            loss_reduction: Reduction::Sum,
            parallel: false,
            out: PathBuf::from("runs/default"),
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {want}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, want))
}

impl ExperimentConfig {
    pub fn lr(&self) -> f64 {
        self.lr.unwrap_or_else(|| self.model.default_lr())
    }

    pub fn dropout(&self) -> f64 {
        self.dropout.unwrap_or_else(|| self.model.default_dropout())
    }

    pub fn heads(&self) -> usize {
        self.heads.unwrap_or_else(|| self.model.default_heads())
    }

    /// Parses a config file body. Blank lines and `#` comments are skipped;
    /// unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let k = k.trim();
            if seen.contains(&k) {
                return Err(Error::Config(format!("line {}: duplicate key {k}", no + 1)));
            }
            seen.push(k);
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its text form. `auto` clears the model-dependent keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let auto = value == "auto";
        match key {
            "dataset" => self.dataset = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "model" => self.model = value.parse()?,
            "mode" => self.mode = value.parse()?,
            "lambda" => self.lambda = num(key, value, "a number")?,
            "rounds" => self.rounds = num(key, value, "a positive integer")?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| num(key, s.trim(), "comma-separated integers"))
                    .collect::<Result<_>>()?
            }
            "lr" => self.lr = if auto { None } else { Some(num(key, value, "a number or auto")?) },
            "weight_decay" => self.weight_decay = num(key, value, "a number")?,
            "dropout" => self.dropout = if auto { None } else { Some(num(key, value, "a number or auto")?) },
            "hidden" => self.hidden = num(key, value, "a positive integer")?,
            "heads" => self.heads = if auto { None } else { Some(num(key, value, "a positive integer or auto")?) },
            "feature_norm" => self.feature_norm = value.parse()?,
            "loss_reduction" => self.loss_reduction = value.parse()?,
            "parallel" => self.parallel = num(key, value, "true or false")?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Text form; [`ExperimentConfig::parse`] of the output reproduces `self`
    /// and serializes to the same bytes.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".to_string());
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "dataset" => self.dataset.display().to_string(),
                "model" => self.model.to_string(),
                "mode" => self.mode.to_string(),
                "lambda" => self.lambda.to_string(),
                "rounds" => self.rounds.to_string(),
                "seeds" => self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
                "lr" => opt(self.lr.map(|v| v.to_string())),
                "weight_decay" => self.weight_decay.to_string(),
                "dropout" => opt(self.dropout.map(|v| v.to_string())),
                "hidden" => self.hidden.to_string(),
                "heads" => opt(self.heads.map(|v| v.to_string())),
                "feature_norm" => self.feature_norm.as_str().to_string(),
                "loss_reduction" => self.loss_reduction.as_str().to_string(),
                "parallel" => self.parallel.to_string(),
                "out" => self.out.display().to_string(),
                _ => unreachable!("every key is handled"),
            };
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if !(self.lr() >= 0.0 && self.lr().is_finite()) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr())));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout()) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout())));
        }
        if self.hidden == 0 || self.heads() == 0 {
            return Err(Error::Config("hidden and heads must be >= 1".into()));
        }
        if self.model == ModelKind::Gcn && self.heads() != 1 {
            return Err(Error::Config("gcn uses a single head".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, meta: &Meta) -> Architecture {
        Architecture {
            kind: self.model,
            input_dim: meta.d,
            hidden: self.hidden,
            heads: self.heads(),
            classes: meta.c,
            dropout: self.dropout(),
        }
    }

    pub fn train_params(&self, seed: u64) -> TrainParams {
        TrainParams {
            rounds: self.rounds,
            lr: self.lr(),
            weight_decay: self.weight_decay,
            lambda: self.lambda,
            reduction: self.loss_reduction,
            seed,
        }
    }

    pub fn fed_config(&self, meta: &Meta, seed: u64) -> FedConfig {
        FedConfig {
            arch: self.architecture(meta),
            params: self.train_params(seed),
            mode: self.mode,
            parallel: self.parallel,
        }
    }
}
