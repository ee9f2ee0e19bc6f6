//! C ABI for the verisearch engine.
//!
//! Every fallible function returns a [`VsStatus`]. On failure a message is
//! stored per thread and can be read with [`vs_last_error_message`]. Objects
//! cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Strings returned through out-parameters are
//! owned by the caller and released with [`vs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use verisearch::corpus::Corpus;
use verisearch::fsq::FsqConfig;
use verisearch::lm::{train, KGramModel};
use verisearch::search::{run_search, RunConfig};
use verisearch::types::{Direction, JointSequence};
use verisearch::verify::{similarity_score, wer};
use verisearch::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Training = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// Loss direction for training and scoring.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VsDirection {
    Tts = 0,
    Asr = 1,
}

impl From<VsDirection> for Direction {
    fn from(d: VsDirection) -> Self {
        match d {
            VsDirection::Tts => Direction::Tts,
            VsDirection::Asr => Direction::Asr,
        }
    }
}

/// Opaque FSQ codebook.
pub struct VsFsq(FsqConfig);

/// Opaque k-gram model.
pub struct VsModel(KGramModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VsStatus {
    match e {
        Error::Config(_) => VsStatus::Config,
        Error::Domain(_) => VsStatus::Domain,
        Error::Training(_) => VsStatus::Training,
        Error::Io { .. } => VsStatus::Io,
        Error::Format(_) => VsStatus::Format,
    }
}

struct Fail(VsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(VsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> VsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(VsStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn vs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn vs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a codebook with `levels[d]` grid points per dimension.
///
/// # Safety
/// `levels` must point to `dims` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_new(levels: *const u32, dims: usize, out_fsq: *mut *mut VsFsq) -> VsStatus {
    guard(|| {
        let out_fsq = out(out_fsq, "out_fsq")?;
        let cfg = FsqConfig::new(slice(levels, dims, "levels")?.to_vec())?;
        *out_fsq = Box::into_raw(Box::new(VsFsq(cfg)));
        Ok(())
    })
}

/// # Safety
/// `fsq` must come from [`vs_fsq_new`] and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_free(fsq: *mut VsFsq) {
    if !fsq.is_null() {
        drop(Box::from_raw(fsq));
    }
}

/// Number of codes, or 0 for a null handle.
///
/// # Safety
/// `fsq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_codebook_size(fsq: *const VsFsq) -> u64 {
    fsq.as_ref().map_or(0, |f| f.0.codebook_size())
}

/// Number of dimensions, or 0 for a null handle.
///
/// # Safety
/// `fsq` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_dim(fsq: *const VsFsq) -> usize {
    fsq.as_ref().map_or(0, |f| f.0.dim())
}

/// Snaps `h` to the grid, writing the code values and their index.
/// `out_values` may be null when only the index is wanted.
///
/// # Safety
/// `h` and `out_values` (if non-null) must hold `dims` values.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_quantize(
    fsq: *const VsFsq,
    h: *const f64,
    dims: usize,
    out_values: *mut f64,
    out_index: *mut u64,
) -> VsStatus {
    guard(|| {
        let fsq = fsq.as_ref().ok_or_else(|| null("fsq"))?;
        let out_index = out(out_index, "out_index")?;
        let code = fsq.0.quantize(slice(h, dims, "h")?)?;
        if !out_values.is_null() {
            slice_mut(out_values, dims, "out_values")?.copy_from_slice(&code.values);
        }
        *out_index = code.index;
        Ok(())
    })
}

/// # Safety
/// `out_codes` must hold `dims` values.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_index_to_codes(fsq: *const VsFsq, index: u64, out_codes: *mut f64, dims: usize) -> VsStatus {
    guard(|| {
        let fsq = fsq.as_ref().ok_or_else(|| null("fsq"))?;
        if dims != fsq.0.dim() {
            return Err(Fail(VsStatus::Domain, format!("expected {} coordinates, got {dims}", fsq.0.dim())));
        }
        let codes = fsq.0.index_to_codes(index)?;
        slice_mut(out_codes, dims, "out_codes")?.copy_from_slice(&codes);
        Ok(())
    })
}

/// # Safety
/// `codes` must hold `dims` values.
#[no_mangle]
pub unsafe extern "C" fn vs_fsq_codes_to_index(fsq: *const VsFsq, codes: *const f64, dims: usize, out_index: *mut u64) -> VsStatus {
    guard(|| {
        let fsq = fsq.as_ref().ok_or_else(|| null("fsq"))?;
        let out_index = out(out_index, "out_index")?;
        *out_index = fsq.0.codes_to_index(slice(codes, dims, "codes")?)?;
        Ok(())
    })
}

/// Word error rate of `hyp` against a non-empty `reference`.
///
/// # Safety
/// Each array must hold its stated number of ids.
#[no_mangle]
pub unsafe extern "C" fn vs_wer(hyp: *const u32, hyp_len: usize, reference: *const u32, ref_len: usize, out_wer: *mut f64) -> VsStatus {
    guard(|| {
        let out_wer = out(out_wer, "out_wer")?;
        *out_wer = wer(slice(hyp, hyp_len, "hyp")?, slice(reference, ref_len, "reference")?)?;
        Ok(())
    })
}

/// `1 - edit_distance / max_len` against a non-empty `reference`.
///
/// # Safety
/// Each array must hold its stated number of ids.
#[no_mangle]
pub unsafe extern "C" fn vs_similarity(
    candidate: *const u32,
    candidate_len: usize,
    reference: *const u32,
    ref_len: usize,
    out_similarity: *mut f64,
) -> VsStatus {
    guard(|| {
        let out_similarity = out(out_similarity, "out_similarity")?;
        *out_similarity = similarity_score(slice(candidate, candidate_len, "candidate")?, slice(reference, ref_len, "reference")?)?;
        Ok(())
    })
}

/// Loads a model file written by `vs_model_save` or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_model_load(path: *const c_char, out_model: *mut *mut VsModel) -> VsStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let model = KGramModel::load(Path::new(string(path, "path")?))?;
        *out_model = Box::into_raw(Box::new(VsModel(model)));
        Ok(())
    })
}

/// Trains a model on a JSONL corpus file.
///
/// # Safety
/// `corpus_path` must be a NUL-terminated string; `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vs_model_train(
    corpus_path: *const c_char,
    order: usize,
    alpha: f64,
    direction: VsDirection,
    out_model: *mut *mut VsModel,
) -> VsStatus {
    guard(|| {
        let out_model = out(out_model, "out_model")?;
        let corpus = Corpus::load(Path::new(string(corpus_path, "corpus_path")?))?;
        let model = train(&corpus, order, alpha, direction.into())?;
        *out_model = Box::into_raw(Box::new(VsModel(model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vs_model_save(model: *const VsModel, path: *const c_char) -> VsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        model.0.save(Path::new(string(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn vs_model_free(model: *mut VsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Summed negative log-likelihood of the model's target side of the pair,
/// and the number of scored tokens.
///
/// # Safety
/// `model` must be a live handle; each array must hold its stated number of ids.
#[no_mangle]
pub unsafe extern "C" fn vs_model_log_prob(
    model: *const VsModel,
    text: *const u32,
    text_len: usize,
    speech: *const u32,
    speech_len: usize,
    out_nll: *mut f64,
    out_count: *mut usize,
) -> VsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out_nll = out(out_nll, "out_nll")?;
        let out_count = out(out_count, "out_count")?;
        let seq = JointSequence {
            text: slice(text, text_len, "text")?.to_vec(),
            speech: slice(speech, speech_len, "speech")?.to_vec(),
            direction: model.0.direction(),
        };
        let report = model.0.log_prob(&seq)?;
        *out_nll = report.nll;
        *out_count = report.token_count;
        Ok(())
    })
}

/// Runs a search from a JSON run config and returns the JSON result.
/// Relative paths in the config resolve against `base_dir` (null means the
/// current directory). Free the result with [`vs_string_free`].
///
/// # Safety
/// `config_json` and `base_dir` (if non-null) must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vs_run_search(config_json: *const c_char, base_dir: *const c_char, out_json: *mut *mut c_char) -> VsStatus {
    guard(|| {
        let out_json = out(out_json, "out_json")?;
        let cfg = RunConfig::from_json(string(config_json, "config_json")?)?;
        let base = if base_dir.is_null() { "." } else { string(base_dir, "base_dir")? };
        let result = run_search(&cfg, Path::new(base))?;
        let text = CString::new(result.to_json_pretty()).map_err(|e| Fail(VsStatus::Format, e.to_string()))?;
        *out_json = text.into_raw();
        Ok(())
    })
}
