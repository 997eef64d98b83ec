//! Flat `key = value` experiment files.
//!
//! ```text
//! # comment
//! preset = cifar10lt-style
//! epochs = 60
//! hidden = 64,64
//! ```
//! Unknown keys are rejected. Keys that are absent fall back to the preset,
//! then to built-in defaults; each fallback is logged.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use sha2::{Digest, Sha256};

use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::objectives::RegConfig;
use crate::trainkit::{Buckets, CrtConfig, LossKind, LrSchedule, TrainConfig, DEFAULT_SIGMAS};

const KEYS: &[&str] = &[
    "preset",
    "epochs",
    "batch_size",
    "schedule",
    "lr",
    "milestones",
    "gamma",
    "momentum",
    "weight_decay",
    "lambda1",
    "lambda2",
    "start_epoch",
    "drw_epoch",
    "drw_beta",
    "crt_epochs",
    "crt_lr",
    "loss",
    "hidden",
    "feature_dim",
    "data",
    "classes",
    "dim",
    "head_per_class",
    "imbalance_ratio",
    "test_per_class",
    "separation",
    "spread",
    "data_seed",
    "train_images",
    "train_labels",
    "test_images",
    "test_labels",
    "many_above",
    "few_below",
    "noise_sigmas",
    "out_dir",
];

/// Regularizer settings shipped as named presets. `start_epoch` is given as
/// a fraction of the configured epochs.
pub fn preset_values(name: &str) -> Result<(f64, f64, f64)> {
    match name {
        "cifar10lt-style" => Ok((0.01, 0.1, 0.0)),
        "cifar100lt-style" => Ok((0.01, 0.5, 0.5)),
        "imagenetlt-style" => Ok((0.05, 1.0, 0.5)),
        other => Err(Error::Config(format!("unknown preset: {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(TaskSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<String>,
    pub train: TrainConfig,
    pub data: DataSource,
    pub buckets: Buckets,
    pub noise_sigmas: Vec<f64>,
    pub out_dir: Option<PathBuf>,
}

struct Entry {
    value: String,
    line: usize,
}

struct Doc {
    entries: BTreeMap<String, Entry>,
}

impl Doc {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            let key = key.trim().to_string();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key: {key}")));
            }
            let value = value.trim().to_string();
            if entries.insert(key.clone(), Entry { value, line }).is_some() {
                return Err(Error::Config(format!("line {line}: duplicate key {key}")));
            }
        }
        Ok(Self { entries })
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn get<T>(&self, key: &str, default: impl FnOnce() -> T) -> Result<T>
    where
        T: FromStr + Display,
    {
        match self.raw(key) {
            Some(e) => e
                .value
                .parse()
                .map_err(|_| type_error(key, e, std::any::type_name::<T>())),
            None => {
                let v = default();
                info!("{key} not set, using {v}");
                Ok(v)
            }
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: impl FnOnce() -> Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            Some(e) if e.value.is_empty() => Ok(Vec::new()),
            Some(e) => e
                .value
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| type_error(key, e, "list")))
                .collect(),
            None => {
                info!("{key} not set, using default");
                Ok(default())
            }
        }
    }

    /// Integer or `none`.
    fn optional(&self, key: &str, default: Option<usize>) -> Result<Option<usize>> {
        match self.raw(key) {
            Some(e) if e.value == "none" => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| type_error(key, e, "integer or none")),
            None => {
                info!("{key} not set, using {default:?}");
                Ok(default)
            }
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.raw(key)
            .map(|e| PathBuf::from(&e.value))
            .ok_or_else(|| Error::Config(format!("missing key: {key}")))
    }
}

fn type_error(key: &str, e: &Entry, expected: &str) -> Error {
    let expected = expected.rsplit("::").next().unwrap_or(expected);
    Error::Config(format!(
        "line {}: expected {expected} for {key}, got `{}`",
        e.line, e.value
    ))
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let doc = Doc::parse(text)?;
        let preset = doc.raw("preset").map(|e| e.value.clone());
        let (p_l1, p_l2, p_start) = match &preset {
            Some(p) => preset_values(p)?,
            None => (0.0, 0.0, 0.0),
        };

        let mut t = TrainConfig::desk_default();
        t.epochs = doc.get("epochs", || t.epochs)?;
        t.batch_size = doc.get("batch_size", || t.batch_size)?;
        let lr: f64 = doc.get("lr", || 0.05)?;
        let kind: String = doc.get("schedule", || "step".to_string())?;
        t.schedule = match kind.as_str() {
            "step" => {
                let epochs = t.epochs;
                let LrSchedule::MultiStep { milestones, .. } = LrSchedule::step_default(lr, epochs)
                else {
                    unreachable!()
                };
                LrSchedule::MultiStep {
                    base: lr,
                    milestones: doc.list("milestones", || milestones)?,
                    gamma: doc.get("gamma", || 0.1)?,
                }
            }
            "cosine" => LrSchedule::Cosine { base: lr },
            other => {
                let e = doc.raw("schedule").expect("present");
                return Err(Error::Config(format!(
                    "line {}: schedule must be step or cosine, got `{other}`",
                    e.line
                )));
            }
        };
        t.momentum = doc.get("momentum", || t.momentum)?;
        t.weight_decay = doc.get("weight_decay", || t.weight_decay)?;
        let epochs = t.epochs;
        t.reg = RegConfig {
            lambda1: doc.get("lambda1", || p_l1)?,
            lambda2: doc.get("lambda2", || p_l2)?,
            start_epoch: doc.get("start_epoch", || (p_start * epochs as f64).round() as usize)?,
        };
        t.drw_epoch = match doc.raw("drw_epoch") {
            Some(e) if e.value == "auto" => Some(TrainConfig::default_drw_epoch(epochs)),
            _ => doc.optional("drw_epoch", None)?,
        };
        t.drw_beta = doc.get("drw_beta", || t.drw_beta)?;
        let crt_lr: f64 = doc.get("crt_lr", || CrtConfig::new(0).lr)?;
        t.crt = doc.optional("crt_epochs", None)?.map(|n| CrtConfig {
            lr: crt_lr,
            ..CrtConfig::new(n)
        });
        let loss: String = doc.get("loss", || "ce".to_string())?;
        t.loss = match loss.as_str() {
            "ce" => LossKind::CrossEntropy,
            "mse" => LossKind::Mse,
            other => {
                let e = doc.raw("loss").expect("present");
                return Err(Error::Config(format!(
                    "line {}: loss must be ce or mse, got `{other}`",
                    e.line
                )));
            }
        };
        t.hidden = doc.list("hidden", || t.hidden.clone())?;
        t.feature_dim = doc.get("feature_dim", || t.feature_dim)?;
        t.validate()?;

        let source: String = doc.get("data", || "synthetic".to_string())?;
        let data = match source.as_str() {
            "synthetic" => {
                let d = TaskSpec::default();
                DataSource::Synthetic(TaskSpec {
                    num_classes: doc.get("classes", || d.num_classes)?,
                    dim: doc.get("dim", || d.dim)?,
                    head_per_class: doc.get("head_per_class", || d.head_per_class)?,
                    imbalance_ratio: doc.get("imbalance_ratio", || d.imbalance_ratio)?,
                    test_per_class: doc.get("test_per_class", || d.test_per_class)?,
                    separation: doc.get("separation", || d.separation)?,
                    spread: doc.get("spread", || d.spread)?,
                    seed: doc.get("data_seed", || d.seed)?,
                })
            }
            "idx" => DataSource::Idx {
                train_images: doc.path("train_images")?,
                train_labels: doc.path("train_labels")?,
                test_images: doc.path("test_images")?,
                test_labels: doc.path("test_labels")?,
            },
            other => {
                let e = doc.raw("data").expect("present");
                return Err(Error::Config(format!(
                    "line {}: data must be synthetic or idx, got `{other}`",
                    e.line
                )));
            }
        };
        let buckets = Buckets {
            many_above: doc.get("many_above", || 100)?,
            few_below: doc.get("few_below", || 20)?,
        };
        let noise_sigmas = doc.list("noise_sigmas", || DEFAULT_SIGMAS.to_vec())?;
        let out_dir = doc.raw("out_dir").map(|e| PathBuf::from(&e.value));
        Ok(Self {
            preset,
            train: t,
            data,
            buckets,
            noise_sigmas,
            out_dir,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    /// Every resolved setting except the seed and output directory, one
    /// `key = value` per line in key order. Parsing it gives back the same
    /// configuration.
    pub fn canonical(&self) -> String {
        let t = &self.train;
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        if let Some(p) = &self.preset {
            kv.insert("preset", p.clone());
        }
        kv.insert("epochs", t.epochs.to_string());
        kv.insert("batch_size", t.batch_size.to_string());
        match &t.schedule {
            LrSchedule::MultiStep {
                base,
                milestones,
                gamma,
            } => {
                kv.insert("schedule", "step".into());
                kv.insert("lr", base.to_string());
                kv.insert("milestones", join(milestones));
                kv.insert("gamma", gamma.to_string());
            }
            LrSchedule::Cosine { base } => {
                kv.insert("schedule", "cosine".into());
                kv.insert("lr", base.to_string());
            }
        }
        kv.insert("momentum", t.momentum.to_string());
        kv.insert("weight_decay", t.weight_decay.to_string());
        kv.insert("lambda1", t.reg.lambda1.to_string());
        kv.insert("lambda2", t.reg.lambda2.to_string());
        kv.insert("start_epoch", t.reg.start_epoch.to_string());
        kv.insert("drw_epoch", opt(t.drw_epoch));
        kv.insert("drw_beta", t.drw_beta.to_string());
        kv.insert("crt_epochs", opt(t.crt.as_ref().map(|c| c.epochs)));
        if let Some(c) = &t.crt {
            kv.insert("crt_lr", c.lr.to_string());
        }
        kv.insert(
            "loss",
            match t.loss {
                LossKind::CrossEntropy => "ce",
                LossKind::Mse => "mse",
            }
            .into(),
        );
        kv.insert("hidden", join(&t.hidden));
        kv.insert("feature_dim", t.feature_dim.to_string());
        match &self.data {
            DataSource::Synthetic(s) => {
                kv.insert("data", "synthetic".into());
                kv.insert("classes", s.num_classes.to_string());
                kv.insert("dim", s.dim.to_string());
                kv.insert("head_per_class", s.head_per_class.to_string());
                kv.insert("imbalance_ratio", s.imbalance_ratio.to_string());
                kv.insert("test_per_class", s.test_per_class.to_string());
                kv.insert("separation", s.separation.to_string());
                kv.insert("spread", s.spread.to_string());
                kv.insert("data_seed", s.seed.to_string());
            }
            DataSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                kv.insert("data", "idx".into());
                kv.insert("train_images", train_images.display().to_string());
                kv.insert("train_labels", train_labels.display().to_string());
                kv.insert("test_images", test_images.display().to_string());
                kv.insert("test_labels", test_labels.display().to_string());
            }
        }
        kv.insert("many_above", self.buckets.many_above.to_string());
        kv.insert("few_below", self.buckets.few_below.to_string());
        kv.insert("noise_sigmas", join(&self.noise_sigmas));
        kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex-encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}
