//! C ABI for `lenbeam`.
//!
//! Models and results are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`LenbeamStatus`]; on failure a message for the calling thread is
//! available from [`lenbeam_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lenbeam::decode::{decode_with, DecodeConfig, Mode};
use lenbeam::scorer::{FusedScorer, TableModel};
use lenbeam::search::{length_normalized_score, HeuristicConfig, PruneConfig};
use lenbeam::{log_sum_exp, DecodeResult, Error, LogProb, StopReason};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LenbeamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidModel = 4,
    InvalidConfig = 5,
    /// The search ended without any ended hypothesis.
    NoHypothesis = 6,
    OutOfRange = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LenbeamMode {
    Simple = 0,
    Heuristic = 1,
    Proposed = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LenbeamStopReason {
    EarlyStop = 0,
    MaxLength = 1,
    BeamExhausted = 2,
}

/// Search settings. Start from [`lenbeam_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LenbeamConfig {
    pub mode: LenbeamMode,
    /// 0 means unlimited.
    pub beam_size: usize,
    /// Negative or non-finite disables score-threshold pruning.
    pub score_threshold: f64,
    pub k_best: usize,
    /// Heuristic mode only.
    pub length_normalize: bool,
    /// Heuristic mode only; 0 disables the EOS threshold.
    pub eos_threshold_factor: f64,
    /// Heuristic mode only; 0 disables the length reward.
    pub length_reward: f64,
    /// Weight of the optional language model.
    pub lm_scale: f64,
    /// The step cap is `ceil(max_steps_factor * input_length)`.
    pub max_steps_factor: f64,
}

/// Scores of one ended hypothesis; log probabilities.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LenbeamEntry {
    /// Label count, end label included.
    pub length: usize,
    pub raw_score: f64,
    pub p_b: f64,
    pub p_not_end: f64,
    pub final_score: f64,
}

/// Opaque model handle.
pub struct LenbeamModel {
    model: TableModel,
    labels: Vec<CString>,
}

/// Opaque decode result; entries are ordered best first.
pub struct LenbeamResult {
    result: DecodeResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(LenbeamStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => LenbeamStatus::Io,
            Error::InvalidModel(_) | Error::InvalidVocabulary(_) | Error::Json { .. } | Error::VocabularyMismatch => {
                LenbeamStatus::InvalidModel
            }
            Error::Config(_) | Error::ZeroLength => LenbeamStatus::InvalidConfig,
            Error::NoEndedHypothesis => LenbeamStatus::NoHypothesis,
            _ => LenbeamStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

/// Runs `f`, turning errors and panics into a status plus a message.
fn guard(f: impl FnOnce() -> Outcome) -> LenbeamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LenbeamStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LenbeamStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(LenbeamStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LenbeamStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_handle(model: TableModel) -> *mut LenbeamModel {
    let labels = model
        .vocab()
        .labels()
        .iter()
        .map(|l| CString::new(l.as_str()).unwrap_or_default())
        .collect();
    Box::into_raw(Box::new(LenbeamModel { model, labels }))
}

/// Message of the last call on this thread if it failed, otherwise null.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn lenbeam_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn lenbeam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a JSON model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_model_load(path: *const c_char, out: *mut *mut LenbeamModel) -> LenbeamStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        *out = into_handle(TableModel::load(Path::new(path))?);
        Ok(())
    })
}

/// Parses a model from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_model_from_json(json: *const c_char, out: *mut *mut LenbeamModel) -> LenbeamStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let json = str_arg(json, "json")?;
        *out = into_handle(TableModel::from_json_str(json)?);
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_model_free(model: *mut LenbeamModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels, end label included.
///
/// # Safety
/// `model` must be a live handle or null (which gives 0).
#[no_mangle]
pub unsafe extern "C" fn lenbeam_model_vocab_size(model: *const LenbeamModel) -> usize {
    model.as_ref().map_or(0, |m| m.labels.len())
}

/// Id of the end label.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_model_eos(model: *const LenbeamModel, out: *mut usize) -> LenbeamStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        *out_arg(out, "out")? = m.model.vocab().eos();
        Ok(())
    })
}

/// Name of label `id`; the string lives as long as the model.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_model_label(
    model: *const LenbeamModel,
    id: usize,
    out: *mut *const c_char,
) -> LenbeamStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let out = out_arg(out, "out")?;
        let label = m.labels.get(id).ok_or_else(|| {
            Failure(
                LenbeamStatus::OutOfRange,
                format!("label id {id} out of range (vocabulary size {})", m.labels.len()),
            )
        })?;
        *out = label.as_ptr();
        Ok(())
    })
}

/// Defaults for `mode`: beam 64, no threshold, 1-best, no heuristics, no
/// LM, step cap equal to the input length.
#[no_mangle]
pub extern "C" fn lenbeam_config_default(mode: LenbeamMode) -> LenbeamConfig {
    LenbeamConfig {
        mode,
        beam_size: 64,
        score_threshold: -1.0,
        k_best: 1,
        length_normalize: false,
        eos_threshold_factor: 0.0,
        length_reward: 0.0,
        lm_scale: 0.0,
        max_steps_factor: 1.0,
    }
}

fn decode_config(c: &LenbeamConfig) -> Result<DecodeConfig, Failure> {
    let cfg = DecodeConfig {
        mode: match c.mode {
            LenbeamMode::Simple => Mode::Simple,
            LenbeamMode::Heuristic => Mode::Heuristic,
            LenbeamMode::Proposed => Mode::Proposed,
        },
        prune: PruneConfig {
            beam_size: if c.beam_size == 0 { usize::MAX } else { c.beam_size },
            score_threshold: (c.score_threshold.is_finite() && c.score_threshold >= 0.0).then_some(c.score_threshold),
        },
        heuristics: HeuristicConfig {
            length_normalize: c.length_normalize,
            eos_threshold_factor: (c.eos_threshold_factor != 0.0).then_some(c.eos_threshold_factor),
            length_reward: (c.length_reward != 0.0).then_some(c.length_reward),
        },
        k_best: c.k_best,
        lm_scale: c.lm_scale,
        max_steps_factor: c.max_steps_factor,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Decodes one utterance. `lm` may be null; it is used with weight
/// `config->lm_scale`. On success `*out` owns a result handle with at least
/// one entry; a search in which nothing ended gives `NoHypothesis`.
///
/// # Safety
/// `model` (and `lm` unless null) must be live handles; `config` and `out`
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_decode(
    model: *const LenbeamModel,
    lm: *const LenbeamModel,
    config: *const LenbeamConfig,
    input_length: usize,
    out: *mut *mut LenbeamResult,
) -> LenbeamStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = ref_arg(model, "model")?;
        let cfg = decode_config(ref_arg(config, "config")?)?;
        if input_length == 0 {
            return Err(Failure(LenbeamStatus::InvalidConfig, "input length must be at least 1".into()));
        }
        let lm = lm.as_ref().map(|l| &l.model);
        let scorer = FusedScorer::new(&m.model, lm, cfg.lm_scale)?;
        let result = decode_with(&scorer, &cfg, input_length)?;
        if result.kbest.is_empty() {
            return Err(Error::NoEndedHypothesis.into());
        }
        *out = Box::into_raw(Box::new(LenbeamResult { result }));
        Ok(())
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` must come from [`lenbeam_decode`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_result_free(result: *mut LenbeamResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of k-best entries (0 for null).
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_result_len(result: *const LenbeamResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.kbest.len())
}

/// Steps the search ran (0 for null).
///
/// # Safety
/// `result` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_result_steps(result: *const LenbeamResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.steps_taken)
}

/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_result_stop_reason(
    result: *const LenbeamResult,
    out: *mut LenbeamStopReason,
) -> LenbeamStatus {
    guard(|| {
        let r = ref_arg(result, "result")?;
        *out_arg(out, "out")? = match r.result.stop_reason {
            StopReason::EarlyStop => LenbeamStopReason::EarlyStop,
            StopReason::MaxLength => LenbeamStopReason::MaxLength,
            StopReason::BeamExhausted => LenbeamStopReason::BeamExhausted,
        };
        Ok(())
    })
}

fn entry(r: &LenbeamResult, index: usize) -> Result<&lenbeam::EndedHypothesis, Failure> {
    r.result.kbest.entries().get(index).ok_or_else(|| {
        Failure(
            LenbeamStatus::OutOfRange,
            format!("entry {index} out of range ({} entries)", r.result.kbest.len()),
        )
    })
}

/// Scores of entry `index` (0 is the decision).
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_result_entry(
    result: *const LenbeamResult,
    index: usize,
    out: *mut LenbeamEntry,
) -> LenbeamStatus {
    guard(|| {
        let h = entry(ref_arg(result, "result")?, index)?;
        *out_arg(out, "out")? = LenbeamEntry {
            length: h.length(),
            raw_score: h.raw_score.0,
            p_b: h.p_b.0,
            p_not_end: h.p_not_end.0,
            final_score: h.final_score,
        };
        Ok(())
    })
}

/// Copies the label ids of entry `index`, end label included, into
/// `labels` (capacity `capacity`). `*written` receives the full length; a
/// buffer that is too small gives `OutOfRange` after copying nothing, so
/// callers may pass a null buffer with capacity 0 to query the length.
///
/// # Safety
/// `result` must be a live handle, `written` a valid pointer, and `labels`
/// valid for `capacity` writes unless `capacity` is 0.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_result_labels(
    result: *const LenbeamResult,
    index: usize,
    labels: *mut usize,
    capacity: usize,
    written: *mut usize,
) -> LenbeamStatus {
    guard(|| {
        let h = entry(ref_arg(result, "result")?, index)?;
        let written = out_arg(written, "written")?;
        *written = h.labels.len();
        if capacity < h.labels.len() {
            return Err(Failure(
                LenbeamStatus::OutOfRange,
                format!("buffer holds {capacity} labels, entry has {}", h.labels.len()),
            ));
        }
        if labels.is_null() {
            return Err(null("labels"));
        }
        std::slice::from_raw_parts_mut(labels, h.labels.len()).copy_from_slice(&h.labels);
        Ok(())
    })
}

/// `log(sum(exp(values)))`; fails on an empty input.
///
/// # Safety
/// `values` must be valid for `len` reads and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_log_sum_exp(values: *const f64, len: usize, out: *mut f64) -> LenbeamStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if values.is_null() && len > 0 {
            return Err(null("values"));
        }
        let xs: Vec<LogProb> = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(values, len).iter().map(|&v| LogProb(v)).collect()
        };
        *out = log_sum_exp(&xs)
            .map_err(|e| Failure(LenbeamStatus::InvalidConfig, e.to_string()))?
            .0;
        Ok(())
    })
}

/// `score / length`; fails for length 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lenbeam_length_normalized_score(score: f64, length: usize, out: *mut f64) -> LenbeamStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = length_normalized_score(LogProb(score), length)?;
        Ok(())
    })
}
