//! Flat `key = value` experiment configs.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Keys are `train.*`, `data.*` and `model.layer_dims`. Absent keys take the
//! defaults of [`TrainConfig`] and [`DatasetSpec`]. Schedule keys accept
//! `auto`, which derives the value from the run length.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{DatasetKind, DatasetSpec};
use crate::error::{Error, Result};
use crate::model::MlpSpec;
use crate::quantize::Norm;
use crate::train::{Algorithm, StartMode, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub data: DatasetSpec,
    /// `None` means [`MlpSpec::default_for`] the dataset.
    pub model: Option<MlpSpec>,
}

impl ExperimentConfig {
    pub fn model_spec(&self) -> MlpSpec {
        self.model
            .clone()
            .unwrap_or_else(|| MlpSpec::default_for(self.data.dim, self.data.num_classes))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.data.validate()?;
        let spec = self.model_spec();
        spec.validate()?;
        if spec.input_dim() != self.data.dim || spec.output_dim() < self.data.num_classes {
            return Err(Error::invalid(format!(
                "model.layer_dims {:?} does not fit data.dim = {} and data.num_classes = {}",
                spec.layer_dims, self.data.dim, self.data.num_classes
            )));
        }
        Ok(())
    }
}

/// Reads and validates a config file. Relative paths inside it resolve
/// against the file's directory.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.train.warm_source, &mut cfg.data.path]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            key: content.to_string(),
            message: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config {
                line,
                key: key.into(),
                message: "key given twice".into(),
            });
        }
        set(&mut cfg, line, key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn typed<T: FromStr>(line: usize, key: &str, value: &str, what: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        key: key.into(),
        message: format!("expected {what}, got `{value}`"),
    })
}

fn auto<T: FromStr>(line: usize, key: &str, value: &str, what: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        typed(line, key, value, what).map(Some)
    }
}

fn list(line: usize, key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| typed(line, key, v.trim(), "a comma-separated list of integers"))
        .collect()
}

fn set(cfg: &mut ExperimentConfig, line: usize, key: &str, v: &str) -> Result<()> {
    let t = &mut cfg.train;
    let d = &mut cfg.data;
    const REAL: &str = "a real number";
    const INT: &str = "a nonnegative integer";
    match key {
        "train.algorithm" => {
            t.algorithm = typed::<Algorithm>(line, key, v, "bc, median_bc, br or none")?
        }
        "train.blend_rho" => t.blend_rho = typed(line, key, v, REAL)?,
        "train.lr" => t.lr = typed(line, key, v, REAL)?,
        "train.lr_drop_factor" => t.lr_drop_factor = typed(line, key, v, REAL)?,
        "train.lr_drop_at" => {
            t.lr_drop_at = if v == "auto" {
                None
            } else {
                Some(list(line, key, v)?)
            }
        }
        "train.momentum" => t.momentum = typed(line, key, v, REAL)?,
        "train.weight_decay" => t.weight_decay = typed(line, key, v, REAL)?,
        "train.br_gamma" => t.br_gamma = typed(line, key, v, REAL)?,
        "train.br_lambda0" => t.br_lambda0 = typed(line, key, v, REAL)?,
        "train.br_phase2_start" => t.br_phase2_start = auto(line, key, v, INT)?,
        "train.br_lambda_every" => t.br_lambda_every = auto(line, key, v, INT)?,
        "train.br_hard_projector" => t.br_hard_projector = typed::<Norm>(line, key, v, "l1 or l2")?,
        "train.epochs" => t.epochs = typed(line, key, v, INT)?,
        "train.batch_size" => t.batch_size = typed(line, key, v, INT)?,
        "train.seed" => t.seed = typed(line, key, v, INT)?,
        "train.start" => t.start = typed::<StartMode>(line, key, v, "cold or warm")?,
        "train.warm_source" => t.warm_source = Some(PathBuf::from(v)),
        "data.kind" => {
            d.kind = typed::<DatasetKind>(line, key, v, "gaussian_blobs, two_spirals or file")?
        }
        "data.num_classes" => d.num_classes = typed(line, key, v, INT)?,
        "data.dim" => d.dim = typed(line, key, v, INT)?,
        "data.samples_per_class" => d.samples_per_class = typed(line, key, v, INT)?,
        "data.class_separation" => d.class_separation = typed(line, key, v, REAL)?,
        "data.noise_sigma" => d.noise_sigma = typed(line, key, v, REAL)?,
        "data.seed" => d.seed = typed(line, key, v, INT)?,
        "data.train_fraction" => d.train_fraction = typed(line, key, v, REAL)?,
        "data.path" => d.path = Some(PathBuf::from(v)),
        "data.has_header" => d.has_header = typed(line, key, v, "true or false")?,
        "model.layer_dims" => {
            cfg.model = if v == "auto" {
                None
            } else {
                Some(MlpSpec {
                    layer_dims: list(line, key, v)?,
                })
            }
        }
        _ => {
            return Err(Error::UnknownKey {
                line,
                key: key.into(),
            })
        }
    }
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn or_auto(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".into(), |x| x.to_string())
}

/// Renders every key; [`parse_config_str`] reads it back to an equal value.
pub fn to_config_string(cfg: &ExperimentConfig) -> String {
    let t = &cfg.train;
    let d = &cfg.data;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("train.algorithm", t.algorithm.to_string());
    kv("train.blend_rho", format!("{:?}", t.blend_rho));
    kv("train.lr", format!("{:?}", t.lr));
    kv("train.lr_drop_factor", format!("{:?}", t.lr_drop_factor));
    kv(
        "train.lr_drop_at",
        t.lr_drop_at.as_deref().map_or_else(|| "auto".into(), join),
    );
    kv("train.momentum", format!("{:?}", t.momentum));
    kv("train.weight_decay", format!("{:?}", t.weight_decay));
    kv("train.br_gamma", format!("{:?}", t.br_gamma));
    kv("train.br_lambda0", format!("{:?}", t.br_lambda0));
    kv("train.br_phase2_start", or_auto(t.br_phase2_start));
    kv("train.br_lambda_every", or_auto(t.br_lambda_every));
    kv("train.br_hard_projector", t.br_hard_projector.to_string());
    kv("train.epochs", t.epochs.to_string());
    kv("train.batch_size", t.batch_size.to_string());
    kv("train.seed", t.seed.to_string());
    kv("train.start", t.start.to_string());
    if let Some(p) = &t.warm_source {
        kv("train.warm_source", p.display().to_string());
    }
    kv("data.kind", d.kind.to_string());
    kv("data.num_classes", d.num_classes.to_string());
    kv("data.dim", d.dim.to_string());
    kv("data.samples_per_class", d.samples_per_class.to_string());
    kv("data.class_separation", format!("{:?}", d.class_separation));
    kv("data.noise_sigma", format!("{:?}", d.noise_sigma));
    kv("data.seed", d.seed.to_string());
    kv("data.train_fraction", format!("{:?}", d.train_fraction));
    if let Some(p) = &d.path {
        kv("data.path", p.display().to_string());
    }
    kv("data.has_header", d.has_header.to_string());
    kv(
        "model.layer_dims",
        cfg.model
            .as_ref()
            .map_or_else(|| "auto".into(), |m| join(&m.layer_dims)),
    );
    out
}
