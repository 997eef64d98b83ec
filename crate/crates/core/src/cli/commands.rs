use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig};
use super::svg::angle_heatmap;
use crate::analytic::run_verifiers;
use crate::collapse::{nc_report, NcReport};
use crate::data::{
    build_task, feature_range, load_idx, quantize_range, write_idx, Dataset, TaskSpec,
};
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::trainkit::{derive_seed, evaluate, noise_robustness, train, EpochRecord, TrainState};

const NOISE_STREAM: u64 = 7 << 32;

pub const METRICS_HEADER: &str =
    "epoch,lr,loss_total,loss_sup,loss_lw,loss_lb,train_acc,nc1,nc2_cos_dev,nc2_norm_cv,nc3_align,nc4_agree";

/// Training and test sets described by a config.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Synthetic(spec) => build_task(spec),
        DataSource::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train = load_idx(train_images, train_labels)?;
            let test = load_idx(test_images, test_labels)?;
            if train.num_classes() != test.num_classes() {
                return Err(Error::Format(format!(
                    "train has {} classes, test has {}",
                    train.num_classes(),
                    test.num_classes()
                )));
            }
            Ok((train, test))
        }
    }
}

/// Metric log with a `# config_hash=... seed=...` first line. Floats use
/// Rust's shortest round-trip formatting, so equal runs give equal bytes.
pub fn metrics_csv(log: &[EpochRecord], config_hash: &str, seed: u64) -> String {
    let mut s = format!("# config_hash={config_hash} seed={seed}\n{METRICS_HEADER}\n");
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.lr,
            r.loss_total,
            r.loss_sup,
            r.loss_lw,
            r.loss_lb,
            r.train_acc,
            r.nc.nc1,
            r.nc.nc2_cos_dev,
            r.nc.nc2_norm_cv,
            r.nc.nc3_align,
            r.nc.nc4_agree
        );
    }
    s
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Named data-generation presets.
pub fn data_preset(name: &str) -> Result<TaskSpec> {
    match name {
        "synth10-lt" => Ok(TaskSpec::default()),
        "synth10-balanced" => Ok(TaskSpec {
            imbalance_ratio: 1.0,
            ..TaskSpec::default()
        }),
        other => Err(Error::Config(format!("unknown data preset: {other}"))),
    }
}

/// Writes the train and test splits as IDX files (one `1 x D` image per
/// sample) plus `manifest.json`. Both splits share one quantization range.
pub fn gen_data(spec: &TaskSpec, spec_text: &str, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let (train, test) = build_task(spec)?;
    let (lo, hi) = feature_range(&[&train, &test]);
    let spec_hash = hex::encode(Sha256::digest(spec_text.as_bytes()));
    for (split, ds) in [("train", &train), ("test", &test)] {
        let q = quantize_range(ds, lo, hi)?;
        write_idx(
            &q,
            1,
            q.dim(),
            out.join(format!("{split}-images.idx")),
            out.join(format!("{split}-labels.idx")),
        )?;
    }
    let manifest = json!({
        "config_hash": spec_hash,
        "seed": spec.seed,
        "spec": spec_text,
        "range": [lo, hi],
        "train": {"images": "train-images.idx", "labels": "train-labels.idx", "class_counts": train.class_counts()},
        "test": {"images": "test-images.idx", "labels": "test-labels.idx", "class_counts": test.class_counts()},
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    info!(
        "wrote {} train and {} test samples to {}",
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(rename = "final")]
    last: FinalScores,
    nc: Option<crate::collapse::NcRecord>,
}

#[derive(Serialize)]
struct FinalScores {
    acc: f64,
    per_group: crate::trainkit::GroupAccuracy,
}

/// Trains one run and writes `metrics.csv`, `checkpoint.bin` and
/// `summary.json` under `out`.
pub fn train_run(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<TrainState> {
    let hash = cfg.hash();
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    let (train_set, test_set) = load_data(cfg)?;
    info!(
        "training {} epochs on {} samples, config {}",
        tc.epochs,
        train_set.len(),
        &hash[..12]
    );
    let state = train(&tc, &train_set)?;
    fs::create_dir_all(out)?;
    fs::write(
        out.join("metrics.csv"),
        metrics_csv(&state.log, &hash, seed),
    )?;
    Checkpoint {
        seed,
        config_hash: hash.clone(),
        config_text: cfg.canonical(),
        extractor: state.extractor.clone(),
        classifier: state.classifier.clone(),
    }
    .save(out.join("checkpoint.bin"))?;
    let report = evaluate(&state, &test_set, &cfg.buckets)?;
    let summary = Summary {
        config_hash: &hash,
        seed,
        last: FinalScores {
            acc: report.accuracy,
            per_group: report.groups,
        },
        nc: state.log.last().map(|r| r.nc),
    };
    write_json(&out.join("summary.json"), &summary)?;
    info!("test accuracy {:.4}", report.accuracy);
    Ok(state)
}

/// Rebuilds the run's config, datasets and model state from a checkpoint.
pub fn restore(ckpt: &Checkpoint) -> Result<(ExperimentConfig, TrainState, Dataset, Dataset)> {
    let cfg = ExperimentConfig::parse_str(&ckpt.config_text)?;
    let (train_set, test_set) = load_data(&cfg)?;
    if ckpt.extractor.input_dim() != train_set.dim()
        || ckpt.classifier.num_classes() != train_set.num_classes()
    {
        return Err(Error::Shape(
            "checkpoint does not match the data of its config".into(),
        ));
    }
    let state = TrainState {
        extractor: ckpt.extractor.clone(),
        classifier: ckpt.classifier.clone(),
        velocity: Vec::new(),
        epoch: cfg.train.epochs,
        log: Vec::new(),
        train_counts: train_set.class_counts().to_vec(),
        seed: ckpt.seed,
    };
    Ok((cfg, state, train_set, test_set))
}

/// Test-set evaluation, optionally with a noise sweep; writes `eval.json`.
pub fn eval_checkpoint(
    ckpt_path: &Path,
    noise: Option<&[f64]>,
    out: &Path,
) -> Result<serde_json::Value> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (cfg, state, _, test_set) = restore(&ckpt)?;
    let report = evaluate(&state, &test_set, &cfg.buckets)?;
    let sweep = match noise {
        Some(s) => {
            let sigmas = if s.is_empty() {
                &cfg.noise_sigmas[..]
            } else {
                s
            };
            Some(noise_robustness(
                &state,
                &test_set,
                sigmas,
                derive_seed(ckpt.seed, NOISE_STREAM),
            )?)
        }
        None => None,
    };
    let value = json!({
        "config_hash": ckpt.config_hash,
        "seed": ckpt.seed,
        "accuracy": report.accuracy,
        "per_group": report.groups,
        "per_class": report.per_class,
        "noise": sweep,
    });
    fs::create_dir_all(out)?;
    write_json(&out.join("eval.json"), &value)?;
    Ok(value)
}

fn split_reports(ckpt: &Checkpoint) -> Result<Vec<(&'static str, NcReport, Vec<usize>)>> {
    let (_, state, train_set, test_set) = restore(ckpt)?;
    [("train", &train_set), ("test", &test_set)]
        .into_iter()
        .map(|(name, ds)| {
            let h = state.features(ds.features())?;
            let r = nc_report(&h, ds.labels(), ds.num_classes(), &state.classifier)?;
            Ok((name, r, train_set.class_counts().to_vec()))
        })
        .collect()
}

/// Mean of the off-diagonal entries of an angle matrix.
pub fn mean_off_diagonal(a: &crate::numerics::DenseMatrix) -> f64 {
    let k = a.rows();
    if k < 2 {
        return f64::NAN;
    }
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                s += a[(i, j)];
            }
        }
    }
    s / (k * (k - 1)) as f64
}

/// Writes `angles.csv`, `angles.svg` (training split) and `norms.csv`.
/// Returns the mean off-diagonal training angle in degrees.
pub fn analyze(ckpt_path: &Path, out: &Path) -> Result<f64> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let reports = split_reports(&ckpt)?;
    let header = format!("# config_hash={} seed={}\n", ckpt.config_hash, ckpt.seed);
    let k = ckpt.classifier.num_classes();

    let mut angles = header.clone();
    angles.push_str("split,class");
    for j in 0..k {
        let _ = write!(angles, ",c{j}");
    }
    angles.push('\n');
    let mut norms = header;
    norms.push_str("split,class,train_count,norm\n");
    for (split, r, counts) in &reports {
        if r.angle_matrix.rows() == k {
            for i in 0..k {
                let _ = write!(angles, "{split},{i}");
                for j in 0..k {
                    let _ = write!(angles, ",{}", r.angle_matrix[(i, j)]);
                }
                angles.push('\n');
            }
        }
        for (i, n) in r.norms.iter().enumerate() {
            let _ = writeln!(norms, "{split},{i},{},{n}", counts[i]);
        }
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("angles.csv"), angles)?;
    fs::write(out.join("norms.csv"), norms)?;

    let train_angles = &reports[0].1.angle_matrix;
    if train_angles.rows() != k {
        return Err(Error::DegenerateGeometry(
            "training class means coincide".into(),
        ));
    }
    let mean = mean_off_diagonal(train_angles);
    let title = format!(
        "pairwise angles of centered class means (train), mean {mean:.2} deg, config_hash={} seed={}",
        ckpt.config_hash, ckpt.seed
    );
    fs::write(out.join("angles.svg"), angle_heatmap(train_angles, &title))?;
    Ok(mean)
}

/// Runs the analytic verifiers; returns the printed lines and whether all
/// passed.
pub fn verify(k: usize, p: usize, seed: u64) -> Result<(Vec<String>, bool)> {
    let records = run_verifiers(k, p, seed)?;
    let ok = records.iter().all(|r| r.pass);
    let lines = records
        .iter()
        .map(|r| {
            format!(
                "{} {} {}",
                r.name,
                if r.pass { "PASS" } else { "FAIL" },
                r.detail
            )
        })
        .collect();
    Ok((lines, ok))
}

/// Default run directory: `runs/<hash prefix>-s<seed>`.
pub fn default_out(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-s{seed}", &cfg.hash()[..12])))
}
