//! C ABI over `nc-forge`.
//!
//! Datasets and models cross the boundary as opaque handles written into
//! caller-provided slots and released with `ncf_dataset_free` /
//! `ncf_model_free`. Every fallible
//! call returns an [`NcfStatus`]; on failure the message is kept per thread
//! and can be copied out with [`ncf_last_error_message`]. Matrices are
//! row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nc_forge::collapse::{is_simplex_etf, nc_report};
use nc_forge::data::{apply_long_tail, gen_gaussian_mixture, load_idx, Dataset, LongTailSpec};
use nc_forge::model::Checkpoint;
use nc_forge::numerics::DenseMatrix;
use nc_forge::objectives::{between_class_reg, within_class_reg, RegConfig};
use nc_forge::trainkit::{evaluate, train, Buckets, LrSchedule, TrainConfig, TrainState};
use nc_forge::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcfStatus {
    Ok = 0,
    InvalidInput = 1,
    ShapeError = 2,
    NumericalError = 3,
    FormatError = 4,
    SpecError = 5,
    DegenerateGeometry = 6,
    ConfigError = 7,
    GraphError = 8,
    IoError = 9,
    NullPointer = 10,
    Panic = 11,
}

impl From<&Error> for NcfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => NcfStatus::InvalidInput,
            Error::Shape(_) => NcfStatus::ShapeError,
            Error::Numerical(_) => NcfStatus::NumericalError,
            Error::Format(_) => NcfStatus::FormatError,
            Error::Spec(_) => NcfStatus::SpecError,
            Error::DegenerateGeometry(_) => NcfStatus::DegenerateGeometry,
            Error::Config(_) => NcfStatus::ConfigError,
            Error::Graph(_) => NcfStatus::GraphError,
            Error::Io(_) => NcfStatus::IoError,
        }
    }
}

/// Opaque labelled feature matrix.
pub struct NcfDataset {
    inner: Dataset,
}

/// Opaque trained network (feature extractor plus linear head).
pub struct NcfModel {
    state: TrainState,
}

/// Training settings. Obtain defaults from [`ncf_train_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NcfTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// Multi-step schedule with milestones at 70% and 90% of the epochs.
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub start_epoch: usize,
    /// Epoch at which class re-weighting starts; negative disables it.
    pub drw_epoch: i64,
    pub seed: u64,
    /// Number of hidden layers before the feature layer, all `hidden_width` wide.
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub feature_dim: usize,
}

/// Collapse metrics of a model's features on a dataset.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NcfNcReport {
    pub nc1: f64,
    pub nc2_cos_dev: f64,
    pub nc2_norm_cv: f64,
    pub nc3_align: f64,
    pub nc4_agree: f64,
    pub etf_ok: bool,
    pub etf_alpha: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct NcfEtfCheck {
    pub verdict: bool,
    pub alpha: f64,
    pub residual: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(NcfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(NcfStatus::from(&e), format!("{}: {e}", e.kind()))
    }
}

fn null(what: &str) -> Fail {
    Fail(
        NcfStatus::NullPointer,
        format!("NullPointer: {what} is null"),
    )
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NcfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            NcfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("Panic: internal panic".into());
            NcfStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice_of<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn path_of(p: *const c_char, what: &str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| {
        Fail(
            NcfStatus::InvalidInput,
            format!("InvalidInput: {what} is not UTF-8"),
        )
    })
}

fn matrix(data: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix, Fail> {
    Ok(DenseMatrix::from_vec(rows, cols, data.to_vec())?)
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length in
/// bytes, excluding the terminator. An empty message means the last call
/// succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ncf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Samples a `K`-class isotropic Gaussian mixture with `per_class` points
/// per class.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_gaussian(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    spread: f64,
    seed: u64,
    out_ds: *mut *mut NcfDataset,
) -> NcfStatus {
    guard(|| {
        let slot = out(out_ds, "out")?;
        let inner = gen_gaussian_mixture(num_classes, dim, per_class, separation, spread, seed)?;
        *slot = Box::into_raw(Box::new(NcfDataset { inner }));
        Ok(())
    })
}

/// Builds a dataset from an `n x dim` feature buffer and `n` labels.
///
/// # Safety
/// `features` must hold `n * dim` doubles and `labels` `n` values.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_from_arrays(
    features: *const f64,
    labels: *const u32,
    n: usize,
    dim: usize,
    num_classes: usize,
    out_ds: *mut *mut NcfDataset,
) -> NcfStatus {
    guard(|| {
        let slot = out(out_ds, "out")?;
        let x = matrix(slice_of(features, n * dim, "features")?, n, dim)?;
        let y = slice_of(labels, n, "labels")?
            .iter()
            .map(|&l| l as usize)
            .collect();
        let inner = Dataset::new(x, y, num_classes, "ffi")?;
        *slot = Box::into_raw(Box::new(NcfDataset { inner }));
        Ok(())
    })
}

/// Reads an IDX image/label file pair; pixels are scaled to `[0, 1]`.
///
/// # Safety
/// Both paths must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_load_idx(
    images_path: *const c_char,
    labels_path: *const c_char,
    out_ds: *mut *mut NcfDataset,
) -> NcfStatus {
    guard(|| {
        let slot = out(out_ds, "out")?;
        let inner = load_idx(
            path_of(images_path, "images_path")?,
            path_of(labels_path, "labels_path")?,
        )?;
        *slot = Box::into_raw(Box::new(NcfDataset { inner }));
        Ok(())
    })
}

/// Exponentially decaying per-class subsample with head/tail ratio
/// `imbalance_ratio`; class 0 stays the head.
///
/// # Safety
/// `ds` must be a live dataset handle and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_long_tail(
    ds: *const NcfDataset,
    imbalance_ratio: f64,
    seed: u64,
    out_ds: *mut *mut NcfDataset,
) -> NcfStatus {
    guard(|| {
        let src = get(ds, "ds")?;
        let slot = out(out_ds, "out")?;
        let spec = LongTailSpec::new(imbalance_ratio, src.inner.num_classes());
        let inner = apply_long_tail(&src.inner, &spec, seed)?;
        *slot = Box::into_raw(Box::new(NcfDataset { inner }));
        Ok(())
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_len(ds: *const NcfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Feature dimension; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_dim(ds: *const NcfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dim())
}

/// Number of classes; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_num_classes(ds: *const NcfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.num_classes())
}

/// Writes the per-class sample counts into `counts` (`len` must equal the
/// number of classes).
///
/// # Safety
/// `counts` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_class_counts(
    ds: *const NcfDataset,
    counts: *mut usize,
    len: usize,
) -> NcfStatus {
    guard(|| {
        let d = get(ds, "ds")?;
        let k = d.inner.num_classes();
        if len != k {
            return Err(Error::Shape(format!(
                "counts buffer holds {len}, dataset has {k} classes"
            ))
            .into());
        }
        if counts.is_null() {
            return Err(null("counts"));
        }
        slice::from_raw_parts_mut(counts, len).copy_from_slice(d.inner.class_counts());
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ncf_dataset_free(ds: *mut NcfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Desk-scale defaults: 60 epochs, batch 128, lr 0.05, momentum 0.9, weight
/// decay 0.005, two hidden layers of 64, 64 features, no regularizers, no
/// re-weighting.
#[no_mangle]
pub extern "C" fn ncf_train_options_default() -> NcfTrainOptions {
    let c = TrainConfig::desk_default();
    NcfTrainOptions {
        epochs: c.epochs,
        batch_size: c.batch_size,
        lr: c.schedule.base(),
        momentum: c.momentum,
        weight_decay: c.weight_decay,
        lambda1: 0.0,
        lambda2: 0.0,
        start_epoch: 0,
        drw_epoch: -1,
        seed: 0,
        hidden_layers: c.hidden.len(),
        hidden_width: c.hidden.first().copied().unwrap_or(64),
        feature_dim: c.feature_dim,
    }
}

fn train_config(o: &NcfTrainOptions) -> TrainConfig {
    let mut c = TrainConfig::with_epochs(o.epochs);
    c.batch_size = o.batch_size;
    c.schedule = LrSchedule::step_default(o.lr, o.epochs);
    c.momentum = o.momentum;
    c.weight_decay = o.weight_decay;
    c.reg = RegConfig {
        lambda1: o.lambda1,
        lambda2: o.lambda2,
        start_epoch: o.start_epoch,
    };
    c.drw_epoch = usize::try_from(o.drw_epoch).ok();
    c.seed = o.seed;
    c.hidden = vec![o.hidden_width; o.hidden_layers];
    c.feature_dim = o.feature_dim;
    c
}

/// Trains a model on `ds`. Deterministic in `(ds, options)`.
///
/// # Safety
/// `ds` must be a live dataset handle, `options` valid, `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn ncf_train(
    ds: *const NcfDataset,
    options: *const NcfTrainOptions,
    out_model: *mut *mut NcfModel,
) -> NcfStatus {
    guard(|| {
        let d = get(ds, "ds")?;
        let o = get(options, "options")?;
        let slot = out(out_model, "out")?;
        let state = train(&train_config(o), &d.inner)?;
        *slot = Box::into_raw(Box::new(NcfModel { state }));
        Ok(())
    })
}

/// Number of epochs logged so far (0 for a loaded model).
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ncf_model_epochs(model: *const NcfModel) -> usize {
    model.as_ref().map_or(0, |m| m.state.log.len())
}

/// Accuracy on `ds`.
///
/// # Safety
/// Handles must be live; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ncf_evaluate(
    model: *const NcfModel,
    ds: *const NcfDataset,
    accuracy: *mut f64,
) -> NcfStatus {
    guard(|| {
        let m = get(model, "model")?;
        let d = get(ds, "ds")?;
        let acc = out(accuracy, "accuracy")?;
        *acc = evaluate(&m.state, &d.inner, &Buckets::default())?.accuracy;
        Ok(())
    })
}

/// Predicted class for each of `n` rows of `features` (`n x dim`).
///
/// # Safety
/// `features` must hold `n * dim` doubles, `labels` `n` writable values.
#[no_mangle]
pub unsafe extern "C" fn ncf_predict(
    model: *const NcfModel,
    features: *const f64,
    n: usize,
    dim: usize,
    labels: *mut u32,
) -> NcfStatus {
    guard(|| {
        let m = get(model, "model")?;
        let x = matrix(slice_of(features, n * dim, "features")?, n, dim)?;
        let preds = m.state.predict(&x)?;
        if n > 0 && labels.is_null() {
            return Err(null("labels"));
        }
        for (i, p) in preds.into_iter().enumerate() {
            *labels.add(i) = p as u32;
        }
        Ok(())
    })
}

/// Collapse metrics of the model's features on `ds`. Metrics that are
/// undefined for the data come back as NaN.
///
/// # Safety
/// Handles must be live; `report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ncf_nc_report(
    model: *const NcfModel,
    ds: *const NcfDataset,
    report: *mut NcfNcReport,
) -> NcfStatus {
    guard(|| {
        let m = get(model, "model")?;
        let d = get(ds, "ds")?;
        let slot = out(report, "report")?;
        let h = m.state.features(d.inner.features())?;
        let r = nc_report(
            &h,
            d.inner.labels(),
            d.inner.num_classes(),
            &m.state.classifier,
        )?
        .record();
        *slot = NcfNcReport {
            nc1: r.nc1,
            nc2_cos_dev: r.nc2_cos_dev,
            nc2_norm_cv: r.nc2_norm_cv,
            nc3_align: r.nc3_align,
            nc4_agree: r.nc4_agree,
            etf_ok: r.etf_ok,
            etf_alpha: r.etf_alpha,
        };
        Ok(())
    })
}

/// Writes the model as a checkpoint file.
///
/// # Safety
/// `model` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ncf_model_save(model: *const NcfModel, path: *const c_char) -> NcfStatus {
    guard(|| {
        let m = get(model, "model")?;
        let path = path_of(path, "path")?;
        Checkpoint {
            seed: m.state.seed,
            config_hash: String::new(),
            config_text: String::new(),
            extractor: m.state.extractor.clone(),
            classifier: m.state.classifier.clone(),
        }
        .save(path)?;
        Ok(())
    })
}

/// Loads a checkpoint written by [`ncf_model_save`] or the command-line
/// tool.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn ncf_model_load(
    path: *const c_char,
    out_model: *mut *mut NcfModel,
) -> NcfStatus {
    guard(|| {
        let slot = out(out_model, "out")?;
        let ckpt = Checkpoint::load(path_of(path, "path")?)?;
        let k = ckpt.classifier.num_classes();
        let state = TrainState {
            extractor: ckpt.extractor,
            classifier: ckpt.classifier,
            velocity: Vec::new(),
            epoch: 0,
            log: Vec::new(),
            train_counts: vec![0; k],
            seed: ckpt.seed,
        };
        *slot = Box::into_raw(Box::new(NcfModel { state }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ncf_model_free(model: *mut NcfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tests whether the columns of `m` (`p x k`, row-major) form a simplex
/// equiangular tight frame up to `tol`.
///
/// # Safety
/// `m` must hold `p * k` doubles; `result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ncf_is_simplex_etf(
    m: *const f64,
    p: usize,
    k: usize,
    tol: f64,
    result: *mut NcfEtfCheck,
) -> NcfStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let c = is_simplex_etf(&matrix(slice_of(m, p * k, "m")?, p, k)?, tol)?;
        *slot = NcfEtfCheck {
            verdict: c.verdict,
            alpha: c.alpha,
            residual: c.residual,
        };
        Ok(())
    })
}

/// Between-class regularizer of `k` centered class means (`k x p`,
/// row-major): the negated mean over classes of the angle to the nearest
/// other mean, in radians.
///
/// # Safety
/// `centered` must hold `k * p` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ncf_between_class_reg(
    centered: *const f64,
    k: usize,
    p: usize,
    value: *mut f64,
) -> NcfStatus {
    guard(|| {
        let slot = out(value, "value")?;
        *slot = between_class_reg(&matrix(slice_of(centered, k * p, "centered")?, k, p)?)?;
        Ok(())
    })
}

/// Within-class regularizer of `n` features (`n x p`) under `labels`.
///
/// # Safety
/// `h` must hold `n * p` doubles, `labels` `n` values; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn ncf_within_class_reg(
    h: *const f64,
    labels: *const u32,
    n: usize,
    p: usize,
    value: *mut f64,
) -> NcfStatus {
    guard(|| {
        let slot = out(value, "value")?;
        let hm = matrix(slice_of(h, n * p, "h")?, n, p)?;
        let y: Vec<usize> = slice_of(labels, n, "labels")?
            .iter()
            .map(|&l| l as usize)
            .collect();
        *slot = within_class_reg(&hm, &y)?;
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ncf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
