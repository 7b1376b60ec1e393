//! C interface to `seafarer`.
//!
//! Every fallible function returns an [`SfStatus`]; on failure the message is
//! available from [`sf_last_error`] on the same thread. Objects are opaque
//! handles released with their `*_free` function. Strings returned through
//! `char **` out-parameters are owned by the caller and released with
//! [`sf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use seafarer::classifier::{train_examples, ClassifierError};
use seafarer::config::{ConfigError, ExperimentConfig};
use seafarer::corpus::{self, CorpusError, SynthParams};
use seafarer::experiment::run_one;
use seafarer::metrics::roc_auc;
use seafarer::{AcquisitionConfig, AcquisitionKind, BinaryClassifier, Corpus, RunRecord, Strategy, TagEmbeddings, TrainConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Engine = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStrategy {
    Seafaring = 0,
    SmallExact = 1,
    Random = 2,
}

fn strategy_arg(raw: u32) -> Result<Strategy, Failure> {
    match raw {
        x if x == SfStrategy::Seafaring as u32 => Ok(Strategy::Seafaring),
        x if x == SfStrategy::SmallExact as u32 => Ok(Strategy::SmallExact),
        x if x == SfStrategy::Random as u32 => Ok(Strategy::Random),
        other => Err(invalid(format!("unknown strategy {other}"))),
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfAcquisitionKind {
    ExpEntropy = 0,
    Entropy = 1,
    LeastConfidence = 2,
    Margin = 3,
}

fn kind_arg(raw: u32) -> Result<AcquisitionKind, Failure> {
    match raw {
        x if x == SfAcquisitionKind::ExpEntropy as u32 => Ok(AcquisitionKind::ExpEntropy),
        x if x == SfAcquisitionKind::Entropy as u32 => Ok(AcquisitionKind::Entropy),
        x if x == SfAcquisitionKind::LeastConfidence as u32 => Ok(AcquisitionKind::LeastConfidence),
        x if x == SfAcquisitionKind::Margin as u32 => Ok(AcquisitionKind::Margin),
        other => Err(invalid(format!("unknown acquisition kind {other}"))),
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfSynthParams {
    pub n_items: usize,
    pub n_tags: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub cluster_spread: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfTrainParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2_normalize_features: bool,
}

/// One labeling iteration. `selected_id` is owned by the run handle.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfRunRow {
    pub iter: usize,
    pub selected_id: *const c_char,
    pub label: bool,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub neg_pos_ratio: f64,
    pub max_candidate_pos_prob: f64,
    pub n_model_evals: usize,
    pub n_queries: u64,
}

/// An item collection with its tag index.
pub struct SfCorpus(Corpus);

/// A trained binary classifier.
pub struct SfModel(BinaryClassifier);

/// An experiment config with its corpus and tag embeddings loaded.
pub struct SfSession {
    cfg: ExperimentConfig,
    corpus: Arc<Corpus>,
    embeddings: TagEmbeddings,
}

/// The record of one simulated run.
pub struct SfRun {
    record: RunRecord,
    ids: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SfStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } | ConfigError::Corpus(CorpusError::Io(_)) => SfStatus::Io,
            _ => SfStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        let status = match e {
            CorpusError::Io(_) => SfStatus::Io,
            _ => SfStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        Failure(SfStatus::InvalidArgument, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SfStatus::InvalidArgument, msg.into())
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("panic: {msg}"));
            SfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(SfStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Score of an item with positive-class probability `p1`; `kind` is an
/// `SfAcquisitionKind` value.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sf_acquisition_score(kind: u32, gamma: f64, p1: f64, out: *mut f64) -> SfStatus {
    guard(|| {
        let acq = AcquisitionConfig {
            kind: kind_arg(kind)?,
            gamma,
        };
        let score = acq.score((1.0 - p1, p1)).map_err(|e| invalid(e.to_string()))?;
        write_out(out, score, "out")
    })
}

/// ROC-AUC of `scores` against 0/1 `labels`.
///
/// # Safety
/// `scores` and `labels` must point to `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> SfStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(labels, n, "labels")?;
        let data = scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| match y {
                0 => Ok((s, false)),
                1 => Ok((s, true)),
                other => Err(invalid(format!("label {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let auc = roc_auc(&data).map_err(|e| invalid(e.to_string()))?;
        write_out(out, auc, "out")
    })
}

/// Load a JSONL corpus.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_load(path: *const c_char, out: *mut *mut SfCorpus) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let corpus = corpus::load_corpus(path)?;
        write_out(out, Box::into_raw(Box::new(SfCorpus(corpus))), "out")
    })
}

/// Generate a synthetic corpus. The tag embeddings are discarded.
///
/// # Safety
/// `params` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_synth(params: *const SfSynthParams, out: *mut *mut SfCorpus) -> SfStatus {
    guard(|| {
        let p = ref_arg(params, "params")?;
        let (corpus, _) = corpus::synth_corpus(&SynthParams {
            n_items: p.n_items,
            n_tags: p.n_tags,
            d: p.d,
            k: p.k,
            seed: p.seed,
            cluster_spread: p.cluster_spread,
        })?;
        write_out(out, Box::into_raw(Box::new(SfCorpus(corpus))), "out")
    })
}

/// Number of items; 0 for a null handle.
///
/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_len(corpus: *const SfCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.len())
}

/// Feature dimension; 0 for a null handle.
///
/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_dim(corpus: *const SfCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.dim())
}

/// Number of distinct tags; 0 for a null handle.
///
/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_tag_count(corpus: *const SfCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.0.tag_vocab().len())
}

/// Ids of the items carrying `tag`, newline-separated, in posting order.
///
/// # Safety
/// `corpus` must be live, `tag` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_tag_items(corpus: *const SfCorpus, tag: *const c_char, out: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let c = ref_arg(corpus, "corpus")?;
        let tag = str_arg(tag, "tag")?;
        write_out(out, owned_string(c.0.posting_ids(tag).join("\n")), "out")
    })
}

/// # Safety
/// `corpus` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_corpus_free(corpus: *mut SfCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Default training hyperparameters.
#[no_mangle]
pub extern "C" fn sf_train_params_default() -> SfTrainParams {
    let t = TrainConfig::default();
    SfTrainParams {
        learning_rate: t.learning_rate,
        momentum: t.momentum,
        epochs: t.epochs,
        seed: t.seed,
        l2_normalize_features: t.l2_normalize_features,
    }
}

/// Train a logistic model from zero weights on `n` row-major examples of
/// dimension `d` with 0/1 `labels`.
///
/// # Safety
/// `features` must hold `n * d` values, `labels` `n` values; `params` must be
/// readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_train(
    features: *const f64,
    labels: *const u8,
    n: usize,
    d: usize,
    params: *const SfTrainParams,
    out: *mut *mut SfModel,
) -> SfStatus {
    guard(|| {
        if d == 0 {
            return Err(invalid("d must be >= 1"));
        }
        let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
        let xs = slice_arg(features, len, "features")?;
        let ys = slice_arg(labels, n, "labels")?;
        let p = ref_arg(params, "params")?;
        let examples = xs
            .chunks_exact(d)
            .zip(ys)
            .map(|(x, &y)| match y {
                0 | 1 => Ok((x, y == 1)),
                other => Err(invalid(format!("label {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = TrainConfig {
            learning_rate: p.learning_rate,
            momentum: p.momentum,
            epochs: p.epochs,
            seed: p.seed,
            l2_normalize_features: p.l2_normalize_features,
        };
        let model = train_examples(&examples, &cfg)?;
        write_out(out, Box::into_raw(Box::new(SfModel(model))), "out")
    })
}

/// Positive-class probability of one feature vector.
///
/// # Safety
/// `model` must be live, `x` must hold `d` values, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_predict(model: *const SfModel, x: *const f64, d: usize, out: *mut f64) -> SfStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let x = slice_arg(x, d, "x")?;
        let (_, p1) = m.0.predict_proba(x)?;
        write_out(out, p1, "out")
    })
}

/// Weights, bias and normalization flag as JSON.
///
/// # Safety
/// `model` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_model_to_json(model: *const SfModel, out: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        write_out(out, owned_string(m.0.to_json()), "out")
    })
}

/// # Safety
/// `model` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn open_session(cfg: ExperimentConfig) -> Result<*mut SfSession, Failure> {
    cfg.validate()?;
    let (corpus, embeddings) = cfg.materialize()?;
    Ok(Box::into_raw(Box::new(SfSession {
        cfg,
        corpus,
        embeddings,
    })))
}

/// Load an experiment config file (relative paths resolve against its
/// directory) and materialize its corpus.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_open(path: *const c_char, out: *mut *mut SfSession) -> SfStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let cfg = ExperimentConfig::load(Path::new(path))?;
        write_out(out, open_session(cfg)?, "out")
    })
}

/// Like [`sf_session_open`] but from JSON text; relative paths resolve
/// against the working directory.
///
/// # Safety
/// `json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_from_json(json: *const c_char, out: *mut *mut SfSession) -> SfStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        let cfg = ExperimentConfig::from_json(json)?;
        write_out(out, open_session(cfg)?, "out")
    })
}

/// Number of items in the session's corpus; 0 for a null handle.
///
/// # Safety
/// `session` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn sf_session_corpus_len(session: *const SfSession) -> usize {
    session.as_ref().map_or(0, |s| s.corpus.len())
}

/// Run one strategy (an `SfStrategy` value) and seed with the simulated
/// oracle. Budget, task and hyperparameters come from the session's config.
///
/// # Safety
/// `session` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_session_run(
    session: *const SfSession,
    strategy: u32,
    seed: u64,
    out: *mut *mut SfRun,
) -> SfStatus {
    guard(|| {
        let s = ref_arg(session, "session")?;
        let strategy = strategy_arg(strategy)?;
        let record = run_one(&s.cfg, &s.corpus, &s.embeddings, strategy, seed)
            .map_err(|e| Failure(SfStatus::Engine, e.to_string()))?;
        let ids = record
            .rows
            .iter()
            .map(|r| CString::new(r.selected_id.clone()).unwrap_or_default())
            .collect();
        write_out(out, Box::into_raw(Box::new(SfRun { record, ids })), "out")
    })
}

/// # Safety
/// `session` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_session_free(session: *mut SfSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Number of rows (labels acquired); 0 for a null handle.
///
/// # Safety
/// `run` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn sf_run_len(run: *const SfRun) -> usize {
    run.as_ref().map_or(0, |r| r.record.rows.len())
}

/// Copy row `index` into `out`. `out->selected_id` lives as long as `run`.
///
/// # Safety
/// `run` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run_row(run: *const SfRun, index: usize, out: *mut SfRunRow) -> SfStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        let row = r
            .record
            .rows
            .get(index)
            .ok_or_else(|| invalid(format!("row {index} out of range ({} rows)", r.record.rows.len())))?;
        let value = SfRunRow {
            iter: row.iter,
            selected_id: r.ids[index].as_ptr(),
            label: row.label,
            auc: row.auc,
            n_pos: row.n_pos,
            n_neg: row.n_neg,
            neg_pos_ratio: row.neg_pos_ratio,
            max_candidate_pos_prob: row.max_candidate_pos_prob,
            n_model_evals: row.n_model_evals,
            n_queries: row.n_queries,
        };
        write_out(out, value, "out")
    })
}

/// The run as CSV, header included.
///
/// # Safety
/// `run` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_run_to_csv(run: *const SfRun, out: *mut *mut c_char) -> SfStatus {
    guard(|| {
        let r = ref_arg(run, "run")?;
        write_out(out, owned_string(r.record.to_csv_string()), "out")
    })
}

/// # Safety
/// `run` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn sf_run_free(run: *mut SfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
