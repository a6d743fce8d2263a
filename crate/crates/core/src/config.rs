//! Flat `key = value` run configuration. Blank lines and `#` comments are
//! ignored; the same keys serve as `--key value` overrides on the command
//! line.

use std::fmt::Display;
use std::str::FromStr;

use crate::data::SynthConfig;
use crate::model::{ModelConfig, TrainConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    Idx,
}

impl DataSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Idx => "idx",
        }
    }
}

impl FromStr for DataSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthetic" => Ok(DataSource::Synthetic),
            "idx" => Ok(DataSource::Idx),
            _ => Err("expected `synthetic` or `idx`".into()),
        }
    }
}

/// Where training items come from. Synthetic data has `model.dim`
/// dimensions; IDX data fixes the dimension itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub images: String,
    pub labels: String,
    /// Adds 90°, 180° and 270° rotations of every class as new classes.
    pub rotate: bool,
    pub synth_rho: f64,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth_seed: u64,
    pub synth_spacing: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            images: String::new(),
            labels: String::new(),
            rotate: false,
            synth_rho: 0.5,
            synth_classes: 100,
            synth_per_class: 40,
            synth_seed: 0,
            synth_spacing: 0.0,
        }
    }
}

impl DataConfig {
    pub fn synth(&self, dims: usize) -> SynthConfig {
        SynthConfig {
            rho: self.synth_rho,
            dims,
            classes: self.synth_classes,
            per_class: self.synth_per_class,
            seed: self.synth_seed,
            class_spacing: self.synth_spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    /// Write a checkpoint every this many iterations; 0 writes only the
    /// final one.
    pub checkpoint_every: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                dim: 8,
                ..ModelConfig::default()
            },
            train: TrainConfig::default(),
            data: DataConfig::default(),
            checkpoint_every: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl Config {
    pub const KEYS: &'static [&'static str] = &[
        "dim",
        "depth",
        "hidden",
        "weightnorm",
        "mode",
        "alpha",
        "num_levels",
        "dequantize",
        "init_nu",
        "init_v",
        "init_rho",
        "batch_size",
        "seq_len",
        "learning_rate",
        "process_lr_factor",
        "rms_decay",
        "rms_eps",
        "iterations",
        "lr_decay_every",
        "seed",
        "freeze_nu",
        "init_items",
        "outlier_every",
        "outlier_value",
        "data",
        "images",
        "labels",
        "rotate",
        "synth_rho",
        "synth_classes",
        "synth_per_class",
        "synth_seed",
        "synth_spacing",
        "checkpoint_every",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let (m, t, d) = (&mut self.model, &mut self.train, &mut self.data);
        match key {
            "dim" => m.dim = parse(key, value)?,
            "depth" => m.depth = parse(key, value)?,
            "hidden" => m.hidden = parse(key, value)?,
            "weightnorm" => m.weightnorm = parse(key, value)?,
            "mode" => m.mode = parse(key, value)?,
            "alpha" => m.preprocess.alpha = parse(key, value)?,
            "num_levels" => m.preprocess.num_levels = parse(key, value)?,
            "dequantize" => m.preprocess.dequantize = parse(key, value)?,
            "init_nu" => m.init_nu = parse(key, value)?,
            "init_v" => m.init_v = parse(key, value)?,
            "init_rho" => m.init_rho = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "seq_len" => t.seq_len = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "process_lr_factor" => t.process_lr_factor = parse(key, value)?,
            "rms_decay" => t.rms_decay = parse(key, value)?,
            "rms_eps" => t.rms_eps = parse(key, value)?,
            "iterations" => t.iterations = parse(key, value)?,
            "lr_decay_every" => t.lr_decay_every = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "freeze_nu" => t.freeze_nu = parse(key, value)?,
            "init_items" => t.init_items = parse(key, value)?,
            "outlier_every" => t.outlier_every = parse(key, value)?,
            "outlier_value" => t.outlier_value = parse(key, value)?,
            "data" => d.source = parse(key, value)?,
            "images" => d.images = value.into(),
            "labels" => d.labels = value.into(),
            "rotate" => d.rotate = parse(key, value)?,
            "synth_rho" => d.synth_rho = parse(key, value)?,
            "synth_classes" => d.synth_classes = parse(key, value)?,
            "synth_per_class" => d.synth_per_class = parse(key, value)?,
            "synth_seed" => d.synth_seed = parse(key, value)?,
            "synth_spacing" => d.synth_spacing = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (m, t, d) = (&self.model, &self.train, &self.data);
        Some(match key {
            "dim" => m.dim.to_string(),
            "depth" => m.depth.to_string(),
            "hidden" => m.hidden.to_string(),
            "weightnorm" => m.weightnorm.to_string(),
            "mode" => m.mode.as_str().into(),
            "alpha" => m.preprocess.alpha.to_string(),
            "num_levels" => m.preprocess.num_levels.to_string(),
            "dequantize" => m.preprocess.dequantize.to_string(),
            "init_nu" => m.init_nu.to_string(),
            "init_v" => m.init_v.to_string(),
            "init_rho" => m.init_rho.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "seq_len" => t.seq_len.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "process_lr_factor" => t.process_lr_factor.to_string(),
            "rms_decay" => t.rms_decay.to_string(),
            "rms_eps" => t.rms_eps.to_string(),
            "iterations" => t.iterations.to_string(),
            "lr_decay_every" => t.lr_decay_every.to_string(),
            "seed" => t.seed.to_string(),
            "freeze_nu" => t.freeze_nu.to_string(),
            "init_items" => t.init_items.to_string(),
            "outlier_every" => t.outlier_every.to_string(),
            "outlier_value" => t.outlier_value.to_string(),
            "data" => d.source.as_str().into(),
            "images" => d.images.clone(),
            "labels" => d.labels.clone(),
            "rotate" => d.rotate.to_string(),
            "synth_rho" => d.synth_rho.to_string(),
            "synth_classes" => d.synth_classes.to_string(),
            "synth_per_class" => d.synth_per_class.to_string(),
            "synth_seed" => d.synth_seed.to_string(),
            "synth_spacing" => d.synth_spacing.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.into(),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }
}
