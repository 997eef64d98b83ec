use log::debug;
use serde::Serialize;

use super::derive_seed;
use super::schedule::{lr_at, LrSchedule};
use super::sgd::sgd_step;
use crate::collapse::{nc_report, NcRecord};
use crate::data::{make_index_stream, Dataset, SamplerMode};
use crate::error::{Error, Result};
use crate::model::{init_params, LinearClassifier, MlpExtractor};
use crate::numerics::{DenseMatrix, DiffGraph, NodeId};
use crate::objectives::{
    between_class_node, centered_means_node, cross_entropy_node, drw_weights, mse_node, total_loss,
    within_class_node, BatchClasses, ClassWeights, RegConfig,
};

// Stream ids for derive_seed.
const INIT_STREAM: u64 = 0;
const EPOCH_STREAM: u64 = 1 << 32;
const CRT_INIT_STREAM: u64 = 2 << 32;
const CRT_EPOCH_STREAM: u64 = 3 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// Classifier re-training stage on frozen features.
#[derive(Debug, Clone, PartialEq)]
pub struct CrtConfig {
    pub epochs: usize,
    /// Cosine-decayed from this value.
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl CrtConfig {
    pub fn new(epochs: usize) -> Self {
        Self {
            epochs,
            lr: 0.05,
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub reg: RegConfig,
    /// Epoch from which class weights switch to effective-number weights.
    pub drw_epoch: Option<usize>,
    pub drw_beta: f64,
    pub crt: Option<CrtConfig>,
    pub loss: LossKind,
    pub seed: u64,
    /// Hidden widths of the extractor, before the feature layer.
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
}

impl TrainConfig {
    /// 60 epochs, batch 128, milestones at 70%/90%, momentum 0.9, weight
    /// decay 0.005, plain cross-entropy.
    pub fn desk_default() -> Self {
        Self::with_epochs(60)
    }

    pub fn with_epochs(epochs: usize) -> Self {
        Self {
            epochs,
            batch_size: 128,
            schedule: LrSchedule::step_default(0.05, epochs),
            momentum: 0.9,
            weight_decay: 0.005,
            reg: RegConfig::default(),
            drw_epoch: None,
            drw_beta: 0.9999,
            crt: None,
            loss: LossKind::CrossEntropy,
            seed: 0,
            hidden: vec![64, 64],
            feature_dim: 64,
        }
    }

    /// DRW switched on at 80% of the epochs.
    pub fn default_drw_epoch(epochs: usize) -> usize {
        epochs * 8 / 10
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.drw_beta) {
            return Err(Error::Config(format!(
                "drw_beta must be in [0, 1), got {}",
                self.drw_beta
            )));
        }
        if self.feature_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        self.reg
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.epochs > 0 {
            self.schedule.validate(self.epochs)?;
        }
        Ok(())
    }

    pub fn widths(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(&self.hidden);
        w.push(self.feature_dim);
        w.push(num_classes);
        w
    }
}

/// One row of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_sup: f64,
    pub loss_lw: f64,
    pub loss_lb: f64,
    pub train_acc: f64,
    pub nc: NcRecord,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub extractor: MlpExtractor,
    pub classifier: LinearClassifier,
    /// Momentum buffers: extractor parameters in order, then `W`, `b`.
    pub velocity: Vec<DenseMatrix>,
    /// Epochs completed.
    pub epoch: usize,
    pub log: Vec<EpochRecord>,
    /// Class counts of the training set, used for shot buckets.
    pub train_counts: Vec<usize>,
    pub seed: u64,
}

impl TrainState {
    pub fn init(cfg: &TrainConfig, ds: &Dataset) -> Result<Self> {
        let widths = cfg.widths(ds.dim(), ds.num_classes());
        let (extractor, classifier) = init_params(&widths, derive_seed(cfg.seed, INIT_STREAM))?;
        let velocity = extractor
            .params()
            .into_iter()
            .chain([&classifier.weight, &classifier.bias])
            .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
            .collect();
        Ok(Self {
            extractor,
            classifier,
            velocity,
            epoch: 0,
            log: Vec::new(),
            train_counts: ds.class_counts().to_vec(),
            seed: cfg.seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    pub fn features(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.extractor.forward_features(x)
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        self.classifier.predict(&self.features(x)?)
    }
}

/// Loss components of one mini-batch, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    pub sup: f64,
    pub lw: f64,
    pub lb: f64,
}

fn with_context(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Numerical(m) => Error::Numerical(format!("epoch {epoch} batch {batch}: {m}")),
        other => other,
    }
}

/// Records the objective for one mini-batch. Returns the objective node,
/// the three component nodes (the between-class one is absent when the
/// batch holds a single class) and the parameter leaves.
pub fn build_objective(
    g: &mut DiffGraph,
    state: &TrainState,
    cfg: &TrainConfig,
    x: &DenseMatrix,
    labels: &[usize],
    weights: &ClassWeights,
    epoch: usize,
) -> Result<(NodeId, [Option<NodeId>; 3], Vec<NodeId>)> {
    let xn = g.constant(x.clone());
    let (h, mut leaves) = state.extractor.forward_graph(g, xn)?;
    let (z, head) = state.classifier.forward_graph(g, h)?;
    leaves.extend(head);
    let sup = match cfg.loss {
        LossKind::CrossEntropy => cross_entropy_node(g, z, labels, weights)?,
        LossKind::Mse => mse_node(g, z, labels)?,
    };
    let lw = within_class_node(g, h, labels)?;
    let lb = if BatchClasses::new(labels).num_present() >= 2 {
        let c = centered_means_node(g, h, labels)?;
        Some(between_class_node(g, c)?)
    } else {
        None
    };
    let mut obj = sup;
    if cfg.reg.active(epoch) {
        if cfg.reg.lambda1 > 0.0 {
            let t = g.scale(lw, cfg.reg.lambda1)?;
            obj = g.add(obj, t)?;
        }
        if let (Some(lb), true) = (lb, cfg.reg.lambda2 > 0.0) {
            let t = g.scale(lb, cfg.reg.lambda2)?;
            obj = g.add(obj, t)?;
        }
    }
    Ok((obj, [Some(sup), Some(lw), lb], leaves))
}

fn class_weights(cfg: &TrainConfig, counts: &[usize], epoch: usize) -> Result<ClassWeights> {
    match cfg.drw_epoch {
        Some(start) => drw_weights(counts, cfg.drw_beta, epoch, start),
        None => Ok(ClassWeights::uniform(counts.len())),
    }
}

/// Runs one epoch of mini-batch SGD and appends its record to the log.
pub fn train_epoch(state: &mut TrainState, cfg: &TrainConfig, ds: &Dataset) -> Result<()> {
    let epoch = state.epoch;
    let lr = lr_at(&cfg.schedule, epoch as f64, cfg.epochs);
    let weights = class_weights(cfg, ds.class_counts(), epoch)?;
    let mode = SamplerMode::instance_balanced(derive_seed(cfg.seed, EPOCH_STREAM + epoch as u64));
    let batches = make_index_stream(ds, mode, cfg.batch_size)?;

    let mut sums = [0.0f64; 3];
    let mut lb_rows = 0usize;
    for (bi, batch) in batches.iter().enumerate() {
        let x = ds.features().select_rows(batch);
        let labels: Vec<usize> = batch.iter().map(|&i| ds.labels()[i]).collect();
        let mut g = DiffGraph::new();
        let (obj, parts, leaves) =
            build_objective(&mut g, state, cfg, &x, &labels, &weights, epoch)?;
        let value = |n: Option<NodeId>| n.map(|n| g.value(n).item()).transpose();
        let sup = value(parts[0])?.unwrap_or(0.0);
        let lw = value(parts[1])?.unwrap_or(0.0);
        let lb = value(parts[2])?;
        let n = batch.len() as f64;
        sums[0] += sup * n;
        sums[1] += lw * n;
        if let Some(lb) = lb {
            sums[2] += lb * n;
            lb_rows += batch.len();
        }

        let mut grads = g.backward(obj).map_err(|e| with_context(e, epoch, bi))?;
        let grads: Vec<DenseMatrix> = leaves.iter().map(|&l| grads.take(l)).collect();
        let mut params: Vec<&mut DenseMatrix> = state.extractor.params_mut();
        params.extend(state.classifier.params_mut());
        sgd_step(
            &mut params,
            &grads,
            &mut state.velocity,
            lr,
            cfg.momentum,
            cfg.weight_decay,
        )
        .map_err(|e| with_context(e, epoch, bi))?;
    }

    let total_rows = ds.len() as f64;
    let loss_sup = sums[0] / total_rows;
    let loss_lw = sums[1] / total_rows;
    let loss_lb = if lb_rows > 0 {
        sums[2] / lb_rows as f64
    } else {
        0.0
    };
    let h = state.features(ds.features())?;
    let preds = state.classifier.predict(&h)?;
    let correct = preds
        .iter()
        .zip(ds.labels())
        .filter(|(p, y)| p == y)
        .count();
    let nc = nc_report(&h, ds.labels(), ds.num_classes(), &state.classifier)?.record();
    let record = EpochRecord {
        epoch,
        lr,
        loss_total: total_loss(loss_sup, loss_lw, loss_lb, &cfg.reg, epoch),
        loss_sup,
        loss_lw,
        loss_lb,
        train_acc: correct as f64 / total_rows,
        nc,
    };
    debug!(
        "epoch {epoch} lr {lr:.4} loss {:.5} acc {:.4} nc1 {:.4}",
        record.loss_total, record.train_acc, record.nc.nc1
    );
    state.log.push(record);
    state.epoch += 1;
    Ok(())
}

/// Representation training for `cfg.epochs`, then classifier re-training
/// if `cfg.crt` is set.
pub fn train(cfg: &TrainConfig, ds: &Dataset) -> Result<TrainState> {
    cfg.validate()?;
    let mut state = TrainState::init(cfg, ds)?;
    for _ in 0..cfg.epochs {
        train_epoch(&mut state, cfg, ds)?;
    }
    match &cfg.crt {
        Some(crt) => retrain_classifier_crt(&state, ds, crt),
        None => Ok(state),
    }
}

/// Freezes the extractor, re-initializes the linear head and trains it with
/// class-balanced sampling on cross-entropy.
pub fn retrain_classifier_crt(
    state: &TrainState,
    ds: &Dataset,
    crt: &CrtConfig,
) -> Result<TrainState> {
    if crt.batch_size < 1 {
        return Err(Error::Config("crt batch_size must be >= 1".into()));
    }
    let h = state.features(ds.features())?;
    let feats = ds.with_features(h, format!("{}-features", ds.name()))?;
    let mut classifier = LinearClassifier::init(
        state.classifier.feature_dim(),
        state.num_classes(),
        derive_seed(state.seed, CRT_INIT_STREAM),
    );
    let mut velocity = vec![
        DenseMatrix::zeros(classifier.weight.rows(), classifier.weight.cols()),
        DenseMatrix::zeros(1, classifier.num_classes()),
    ];
    let uniform = ClassWeights::uniform(state.num_classes());
    let schedule = LrSchedule::Cosine { base: crt.lr };
    for epoch in 0..crt.epochs {
        let lr = lr_at(&schedule, epoch as f64, crt.epochs);
        let mode =
            SamplerMode::class_balanced(derive_seed(state.seed, CRT_EPOCH_STREAM + epoch as u64));
        for (bi, batch) in make_index_stream(&feats, mode, crt.batch_size)?
            .iter()
            .enumerate()
        {
            let x = feats.features().select_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| feats.labels()[i]).collect();
            let mut g = DiffGraph::new();
            let xn = g.constant(x);
            let (z, [w, b]) = classifier.forward_graph(&mut g, xn)?;
            let loss = cross_entropy_node(&mut g, z, &labels, &uniform)?;
            let mut grads = g.backward(loss)?;
            let grads = [grads.take(w), grads.take(b)];
            sgd_step(
                &mut classifier.params_mut(),
                &grads,
                &mut velocity,
                lr,
                crt.momentum,
                crt.weight_decay,
            )
            .map_err(|e| with_context(e, epoch, bi))?;
        }
    }
    let mut out = state.clone();
    let n_ext = out.velocity.len() - 2;
    out.velocity.truncate(n_ext);
    out.velocity.extend(velocity);
    out.classifier = classifier;
    Ok(out)
}
