//! Run configuration in a plain `key = value` text format.
//!
//! Lines are `key = value`; `#` starts a comment. Every key has a default, and
//! unknown keys are rejected. [`RunConfig::to_text`] writes every key, so the
//! echoed text reproduces a run.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{PartDecomposition, SynthConfig};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Config(format!("unknown precision {s:?}; expected f32 or f64"))),
        }
    }
}

/// Where samples come from: generated in memory or read from a manifest directory.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic,
    Directory(PathBuf),
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic => f.write_str("synthetic"),
            DataSource::Directory(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub precision: Precision,
    pub data: DataSource,
    /// Joints per frame in skeleton files.
    pub joints: usize,
    /// `cross-subject`, `cross-view` or `random:FRAC`.
    pub split: String,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth: SynthConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seed: 0,
            precision: Precision::F32,
            data: DataSource::Synthetic,
            joints: 25,
            split: "cross-subject".into(),
            synth_classes: 4,
            synth_per_class: 100,
            synth: SynthConfig::default(),
            out: PathBuf::from("runs"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "variant",
    "parts",
    "part_feature",
    "rgnn_hidden",
    "rgnn_steps",
    "spatial_output",
    "frames",
    "clip_len",
    "layers",
    "lstm_hidden",
    "head_hidden",
    "classes",
    "dropout",
    "epochs",
    "batch",
    "lr",
    "lr_decay",
    "lr_every",
    "seed",
    "precision",
    "data",
    "joints",
    "split",
    "synth_classes",
    "synth_per_class",
    "synth_frames",
    "synth_noise",
    "out",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "variant" => m.variant = value.parse()?,
            "parts" => m.parts = PartDecomposition::parse(value)?,
            "part_feature" => m.part_feature = parse_num(key, value)?,
            "rgnn_hidden" => m.rgnn_hidden = parse_num(key, value)?,
            "rgnn_steps" => m.rgnn_steps = parse_num(key, value)?,
            "spatial_output" => m.spatial_output = parse_num(key, value)?,
            "frames" => m.frames = parse_num(key, value)?,
            "clip_len" => m.clip_len = parse_num(key, value)?,
            "layers" => m.layers = parse_num(key, value)?,
            "lstm_hidden" => m.lstm_hidden = parse_num(key, value)?,
            "head_hidden" => m.head_hidden = parse_num(key, value)?,
            "classes" => m.classes = parse_num(key, value)?,
            "dropout" => m.dropout = parse_num(key, value)?,
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "batch" => self.train.batch_size = parse_num(key, value)?,
            "lr" => self.train.schedule.base = parse_num(key, value)?,
            "lr_decay" => self.train.schedule.decay = parse_num(key, value)?,
            "lr_every" => self.train.schedule.every = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "precision" => self.precision = value.parse()?,
            "data" => {
                self.data = if value == "synthetic" {
                    DataSource::Synthetic
                } else {
                    DataSource::Directory(PathBuf::from(value))
                }
            }
            "joints" => self.joints = parse_num(key, value)?,
            "split" => {
                crate::data::SplitProtocol::parse(value, 0)?;
                self.split = value.to_string();
            }
            "synth_classes" => self.synth_classes = parse_num(key, value)?,
            "synth_per_class" => self.synth_per_class = parse_num(key, value)?,
            "synth_frames" => self.synth.frames = parse_num(key, value)?,
            "synth_noise" => self.synth.noise = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies the lines of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Defaults overridden by `text`, then validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.synth_classes == 0 || self.synth_classes > 8 {
            return Err(Error::Config(format!(
                "synth_classes {} outside 1..=8",
                self.synth_classes
            )));
        }
        if self.data == DataSource::Synthetic && self.synth_classes > self.model.classes {
            return Err(Error::Config(format!(
                "synthetic data has {} classes but the model has {}",
                self.synth_classes, self.model.classes
            )));
        }
        if self.model.parts.joint_count() != self.joints {
            return Err(Error::Config(format!(
                "part decomposition covers {} joints, data has {}",
                self.model.parts.joint_count(),
                self.joints
            )));
        }
        Ok(())
    }

    /// Split protocol; the random protocol draws from the run seed.
    pub fn split_protocol(&self) -> Result<crate::data::SplitProtocol> {
        crate::data::SplitProtocol::parse(&self.split, self.seed)
    }

    /// Every key with its resolved value, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let s = &self.train.schedule;
        let values: Vec<String> = vec![
            m.variant.to_string(),
            m.parts.spec(),
            m.part_feature.to_string(),
            m.rgnn_hidden.to_string(),
            m.rgnn_steps.to_string(),
            m.spatial_output.to_string(),
            m.frames.to_string(),
            m.clip_len.to_string(),
            m.layers.to_string(),
            m.lstm_hidden.to_string(),
            m.head_hidden.to_string(),
            m.classes.to_string(),
            format!("{:?}", m.dropout),
            self.train.epochs.to_string(),
            self.train.batch_size.to_string(),
            format!("{:?}", s.base),
            format!("{:?}", s.decay),
            s.every.to_string(),
            self.seed.to_string(),
            self.precision.to_string(),
            self.data.to_string(),
            self.joints.to_string(),
            self.split.clone(),
            self.synth_classes.to_string(),
            self.synth_per_class.to_string(),
            self.synth.frames.to_string(),
            format!("{:?}", self.synth.noise),
            self.out.display().to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
