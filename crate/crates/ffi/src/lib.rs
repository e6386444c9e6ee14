//! C ABI over the `ccgc` crate.
//!
//! Every fallible function returns a [`CcgcStatus`]; on failure the message
//! is available from [`ccgc_last_error_message`] on the same thread. Handles
//! are opaque and owned by the caller once returned through an out-pointer;
//! release them with the matching `_free` function. Pointer arguments must be
//! null or valid for the documented length; null is reported as
//! `CCGC_STATUS_NULL_POINTER` rather than dereferenced.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ccgc::graph::{load_dataset, make_sbm, GraphDataset, SbmSpec};
use ccgc::metrics::{evaluate, MetricReport};
use ccgc::trainer::{run_seeds, MeanStd, RunReport, SeedRun, TrainConfig, Variant};
use ccgc::CcgcError;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcgcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Parse = 5,
    InvalidDataset = 6,
    Diverged = 7,
    Json = 8,
    InvalidUtf8 = 9,
    Panic = 10,
    Internal = 11,
}

/// Metric selector for [`ccgc_report_metric`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CcgcMetric {
    Acc = 0,
    Nmi = 1,
    Ari = 2,
    F1 = 3,
}

/// Clustering scores for one partition, each in its natural range.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CcgcMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub f1: f64,
}

impl From<&MetricReport> for CcgcMetrics {
    fn from(m: &MetricReport) -> Self {
        Self {
            acc: m.acc,
            nmi: m.nmi,
            ari: m.ari,
            f1: m.f1,
        }
    }
}

/// A loaded or generated graph.
pub struct CcgcDataset {
    inner: GraphDataset,
}

/// Training configuration.
pub struct CcgcConfig {
    inner: TrainConfig,
}

/// Results of a multi-seed training run.
pub struct CcgcReport {
    inner: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure {
    status: CcgcStatus,
    message: String,
}

impl Failure {
    fn new(status: CcgcStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(name: &str) -> Self {
        Self::new(CcgcStatus::NullPointer, format!("{name} is null"))
    }

    fn arg(message: impl Into<String>) -> Self {
        Self::new(CcgcStatus::InvalidArgument, message)
    }
}

impl From<CcgcError> for Failure {
    fn from(e: CcgcError) -> Self {
        let status = match &e {
            CcgcError::DimensionMismatch { .. } => CcgcStatus::DimensionMismatch,
            CcgcError::InvalidMatrix(_) | CcgcError::InvalidDataset(_) => CcgcStatus::InvalidDataset,
            CcgcError::MissingFile { .. } | CcgcError::Io { .. } => CcgcStatus::Io,
            CcgcError::Parse { .. } => CcgcStatus::Parse,
            CcgcError::InvalidArgument { .. } | CcgcError::UnknownVariant(_) => CcgcStatus::InvalidArgument,
            CcgcError::Diverged { .. } => CcgcStatus::Diverged,
            CcgcError::Json(_) => CcgcStatus::Json,
            CcgcError::StaleState(_) => CcgcStatus::Internal,
        };
        Self::new(status, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::new(CcgcStatus::Json, e.to_string())
    }
}

fn guard<F>(f: F) -> CcgcStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CcgcStatus::Ok
        }
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {msg}"));
            CcgcStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(CcgcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(p))));
    }
}

/// Message for the most recent failure on this thread, or null if the last
/// call succeeded. Valid until the next call into this library on the thread.
#[no_mangle]
pub extern "C" fn ccgc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ccgc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset bundle directory.
#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_load(path: *const c_char, out: *mut *mut CcgcDataset) -> CcgcStatus {
    guard(|| {
        let path = c_str(path, "path")?;
        let inner = load_dataset(Path::new(path))?;
        emit(out, CcgcDataset { inner })
    })
}

/// Samples a planted-partition graph with `blocks` equal blocks.
#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_make_sbm(
    seed: u64,
    blocks: usize,
    block_size: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
    out: *mut *mut CcgcDataset,
) -> CcgcStatus {
    guard(|| {
        let spec = SbmSpec {
            seed,
            block_sizes: vec![block_size; blocks],
            p_in,
            p_out,
            feature_dim,
            feature_noise,
        };
        let inner = make_sbm(&spec)?;
        emit(out, CcgcDataset { inner })
    })
}

/// Node count; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_num_nodes(dataset: *const CcgcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.num_nodes())
}

/// Feature dimension; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_feature_dim(dataset: *const CcgcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.feature_dim())
}

/// Number of ground-truth classes; 0 when unlabeled or null.
#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_num_classes(dataset: *const CcgcDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.num_classes())
}

/// Copies ground-truth labels into `buf`, which must hold exactly
/// `ccgc_dataset_num_nodes` entries.
#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_labels(dataset: *const CcgcDataset, buf: *mut usize, len: usize) -> CcgcStatus {
    guard(|| {
        let d = borrow(dataset, "dataset")?;
        let labels = d
            .inner
            .labels()
            .ok_or_else(|| Failure::new(CcgcStatus::InvalidDataset, "dataset has no labels"))?;
        copy_out(labels, buf, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_dataset_free(dataset: *mut CcgcDataset) {
    release(dataset);
}

/// Default configuration.
#[no_mangle]
pub unsafe extern "C" fn ccgc_config_new(out: *mut *mut CcgcConfig) -> CcgcStatus {
    guard(|| {
        emit(
            out,
            CcgcConfig {
                inner: TrainConfig::default(),
            },
        )
    })
}

/// Configuration from a JSON object; missing fields take defaults.
#[no_mangle]
pub unsafe extern "C" fn ccgc_config_from_json(json: *const c_char, out: *mut *mut CcgcConfig) -> CcgcStatus {
    guard(|| {
        let inner: TrainConfig = serde_json::from_str(c_str(json, "json")?)?;
        inner.validate()?;
        emit(out, CcgcConfig { inner })
    })
}

unsafe fn update(config: *mut CcgcConfig, f: impl FnOnce(&mut TrainConfig)) -> Result<(), Failure> {
    let cfg = borrow_mut(config, "config")?;
    let mut next = cfg.inner.clone();
    f(&mut next);
    next.validate()?;
    cfg.inner = next;
    Ok(())
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_config_set_epochs(config: *mut CcgcConfig, epochs: usize) -> CcgcStatus {
    guard(|| update(config, |c| c.epochs = epochs))
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_config_set_tau(config: *mut CcgcConfig, tau: f64) -> CcgcStatus {
    guard(|| update(config, |c| c.tau = tau))
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_config_set_alpha(config: *mut CcgcConfig, alpha: f64) -> CcgcStatus {
    guard(|| update(config, |c| c.alpha = alpha))
}

/// Cluster count; 0 means the dataset's class count.
#[no_mangle]
pub unsafe extern "C" fn ccgc_config_set_clusters(config: *mut CcgcConfig, k: usize) -> CcgcStatus {
    guard(|| update(config, |c| c.k = (k > 0).then_some(k)))
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_config_set_seeds(config: *mut CcgcConfig, seeds: *const u64, len: usize) -> CcgcStatus {
    guard(|| {
        let seeds = slice(seeds, len, "seeds")?.to_vec();
        update(config, |c| c.seeds = seeds)
    })
}

/// Selects the model variant by name, e.g. `"full"` or `"wo_dps"`.
#[no_mangle]
pub unsafe extern "C" fn ccgc_config_set_variant(config: *mut CcgcConfig, name: *const c_char) -> CcgcStatus {
    guard(|| {
        let variant = Variant::parse(c_str(name, "name")?)?;
        update(config, |c| c.ablation = variant)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_config_free(config: *mut CcgcConfig) {
    release(config);
}

/// Trains one model per configured seed. Succeeds if at least one seed
/// finished; per-seed failures are listed in the report.
#[no_mangle]
pub unsafe extern "C" fn ccgc_train(
    dataset: *const CcgcDataset,
    config: *const CcgcConfig,
    out: *mut *mut CcgcReport,
) -> CcgcStatus {
    guard(|| {
        let d = borrow(dataset, "dataset")?;
        let cfg = borrow(config, "config")?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let (inner, mut errors) = run_seeds(&d.inner, &cfg.inner)?;
        if inner.runs.is_empty() && !errors.is_empty() {
            return Err(errors.remove(0).1.into());
        }
        emit(out, CcgcReport { inner })
    })
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_report_num_runs(report: *const CcgcReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.runs.len())
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_report_num_failures(report: *const CcgcReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.failures.len())
}

/// Mean and population standard deviation of a metric across seeds.
#[no_mangle]
pub unsafe extern "C" fn ccgc_report_metric(
    report: *const CcgcReport,
    metric: CcgcMetric,
    mean: *mut f64,
    std: *mut f64,
) -> CcgcStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        let mean = borrow_mut(mean, "mean")?;
        let std = borrow_mut(std, "std")?;
        let agg = r
            .inner
            .aggregate
            .as_ref()
            .ok_or_else(|| Failure::new(CcgcStatus::InvalidDataset, "report has no metrics (unlabeled dataset)"))?;
        let stat: &MeanStd = match metric {
            CcgcMetric::Acc => &agg.acc,
            CcgcMetric::Nmi => &agg.nmi,
            CcgcMetric::Ari => &agg.ari,
            CcgcMetric::F1 => &agg.f1,
        };
        *mean = stat.mean;
        *std = stat.std;
        Ok(())
    })
}

unsafe fn run_at<'a>(report: *const CcgcReport, index: usize) -> Result<&'a SeedRun, Failure> {
    let r: &'a CcgcReport = borrow(report, "report")?;
    r.inner
        .runs
        .get(index)
        .ok_or_else(|| Failure::arg(format!("run index {index} out of range ({} runs)", r.inner.runs.len())))
}

/// Seed of run `index`.
#[no_mangle]
pub unsafe extern "C" fn ccgc_report_run_seed(report: *const CcgcReport, index: usize, seed: *mut u64) -> CcgcStatus {
    guard(|| {
        let run = run_at(report, index)?;
        *borrow_mut(seed, "seed")? = run.seed;
        Ok(())
    })
}

/// Metrics of run `index`.
#[no_mangle]
pub unsafe extern "C" fn ccgc_report_run_metrics(
    report: *const CcgcReport,
    index: usize,
    metrics: *mut CcgcMetrics,
) -> CcgcStatus {
    guard(|| {
        let run = run_at(report, index)?;
        let m = run
            .metrics
            .as_ref()
            .ok_or_else(|| Failure::new(CcgcStatus::InvalidDataset, "run has no metrics (unlabeled dataset)"))?;
        *borrow_mut(metrics, "metrics")? = m.into();
        Ok(())
    })
}

/// Copies the cluster assignment of run `index` into `buf`, which must hold
/// exactly one entry per node.
#[no_mangle]
pub unsafe extern "C" fn ccgc_report_assignments(
    report: *const CcgcReport,
    index: usize,
    buf: *mut usize,
    len: usize,
) -> CcgcStatus {
    guard(|| {
        let run = run_at(report, index)?;
        copy_out(&run.assignments, buf, len)
    })
}

/// Serializes the report to JSON. Free the string with [`ccgc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ccgc_report_to_json(report: *const CcgcReport, out: *mut *mut c_char) -> CcgcStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        let out = borrow_mut(out, "out")?;
        let json = r.inner.to_json()?;
        *out = CString::new(json)
            .map_err(|_| Failure::new(CcgcStatus::Internal, "report JSON contains NUL"))?
            .into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_report_free(report: *mut CcgcReport) {
    release(report);
}

#[no_mangle]
pub unsafe extern "C" fn ccgc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scores a predicted partition against ground truth.
#[no_mangle]
pub unsafe extern "C" fn ccgc_evaluate(
    predicted: *const usize,
    truth: *const usize,
    len: usize,
    metrics: *mut CcgcMetrics,
) -> CcgcStatus {
    guard(|| {
        let pred = slice(predicted, len, "predicted")?;
        let truth = slice(truth, len, "truth")?;
        let out = borrow_mut(metrics, "metrics")?;
        *out = (&evaluate(pred, truth)?).into();
        Ok(())
    })
}

unsafe fn copy_out(src: &[usize], buf: *mut usize, len: usize) -> Result<(), Failure> {
    if len != src.len() {
        return Err(Failure::arg(format!("buffer holds {len} entries, need {}", src.len())));
    }
    if len == 0 {
        return Ok(());
    }
    if buf.is_null() {
        return Err(Failure::null("buf"));
    }
    std::slice::from_raw_parts_mut(buf, len).copy_from_slice(src);
    Ok(())
}
