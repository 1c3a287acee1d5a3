//! C ABI over the `dualvgr` library.
//!
//! Models and datasets are opaque handles created by `*_load` / `*_open` and
//! released with the matching `*_free`. Every fallible call returns a
//! [`DvgrStatus`]; on failure [`dvgr_last_error`] describes what went wrong
//! on the calling thread. Strings returned through `char **` out-parameters
//! are owned by the caller and must be released with [`dvgr_string_free`].
//! Panics never cross the boundary; they surface as `DVGR_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dualvgr::data::{read_dataset, Dataset, VideoFeatures};
use dualvgr::losses::{consistency_value, hsic_value};
use dualvgr::tensor::Tensor;
use dualvgr::train::{evaluate, trace_dump, Checkpoint};
use dualvgr::{Error, Model};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DvgrStatus {
    Ok = 0,
    InvalidArgument = 1,
    InvalidConfig = 2,
    CorruptDataset = 3,
    InvalidCheckpoint = 4,
    NonFinite = 5,
    GradientCheck = 6,
    Io = 7,
    Serialization = 8,
    NullPointer = 9,
    Panic = 10,
}

/// A trained model loaded from a checkpoint file.
pub struct DvgrModel {
    model: Model,
}

/// A dataset split directory.
pub struct DvgrDataset {
    dataset: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DvgrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) => DvgrStatus::InvalidArgument,
            Error::InvalidConfig(_) => DvgrStatus::InvalidConfig,
            Error::CorruptDataset { .. } => DvgrStatus::CorruptDataset,
            Error::InvalidCheckpoint(_) => DvgrStatus::InvalidCheckpoint,
            Error::NonFiniteLoss { .. } => DvgrStatus::NonFinite,
            Error::GradientCheck { .. } => DvgrStatus::GradientCheck,
            Error::Io { .. } => DvgrStatus::Io,
            Error::Json { .. } => DvgrStatus::Serialization,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DvgrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(DvgrStatus::InvalidArgument, message.into())
}

/// Runs `f`, records any failure, and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DvgrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DvgrStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            DvgrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    str_arg(p, what).map(PathBuf::from)
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
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

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| invalid("string contains NUL"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dvgr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dvgr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dvgr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint written by `dualvgr train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_model_load(path: *const c_char, out: *mut *mut DvgrModel) -> DvgrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let ckpt = Checkpoint::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(DvgrModel { model: ckpt.model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`dvgr_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dvgr_model_free(model: *mut DvgrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_model_num_answers(model: *const DvgrModel, out: *mut usize) -> DvgrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        *out_arg(out, "out")? = m.model.num_answers();
        Ok(())
    })
}

/// Text of answer class `index`; free with [`dvgr_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_model_answer_label(model: *const DvgrModel, index: usize, out: *mut *mut c_char) -> DvgrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out_arg(out, "out")?;
        let label = m.model.answer_vocab.token(index).ok_or_else(|| invalid(format!("answer index {index} out of range")))?;
        *out = to_c_string(label.to_string())?;
        Ok(())
    })
}

fn write_prediction(model: &Model, words: &[String], video: &VideoFeatures, answer: *mut usize, probs: *mut f64, probs_len: usize) -> Result<(), Failure> {
    let p = model.predict(words, video, false)?;
    unsafe {
        *out_arg(answer, "answer")? = p.answer;
        if !probs.is_null() {
            if probs_len < p.probabilities.len() {
                return Err(invalid(format!("probability buffer holds {probs_len}, need {}", p.probabilities.len())));
            }
            std::ptr::copy_nonoverlapping(p.probabilities.as_ptr(), probs, p.probabilities.len());
        }
    }
    Ok(())
}

/// Answers a free-form question on raw features. `question` is
/// whitespace-separated words. `appearance` holds `n_clips × frames ×
/// app_dim` floats and `motion` holds `n_clips × motion_dim`, both
/// row-major with the model's feature widths. `probs` may be NULL;
/// otherwise it receives `num_answers` probabilities.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dvgr_predict_features(
    model: *const DvgrModel,
    question: *const c_char,
    appearance: *const f32,
    n_clips: usize,
    frames: usize,
    motion: *const f32,
    answer: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> DvgrStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.model;
        let words: Vec<String> = str_arg(question, "question")?.split_whitespace().map(String::from).collect();
        let (da, dm) = (m.config.app_dim, m.config.motion_dim);
        let video = VideoFeatures {
            video_id: "ffi".into(),
            n_clips,
            frames_per_clip: frames,
            app_dim: da,
            motion_dim: dm,
            appearance: slice_arg(appearance, n_clips * frames * da, "appearance")?.to_vec(),
            motion: slice_arg(motion, n_clips * dm, "motion")?.to_vec(),
        };
        write_prediction(m, &words, &video, answer, probs, probs_len)
    })
}

/// Opens a split directory written by `dualvgr generate-data`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_dataset_open(dir: *const c_char, out: *mut *mut DvgrDataset) -> DvgrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let dataset = read_dataset(&path_arg(dir, "dir")?)?;
        *out = Box::into_raw(Box::new(DvgrDataset { dataset }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from [`dvgr_dataset_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dvgr_dataset_free(dataset: *mut DvgrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of questions in the dataset.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_dataset_len(dataset: *const DvgrDataset, out: *mut usize) -> DvgrStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *out_arg(out, "out")? = d.dataset.len();
        Ok(())
    })
}

unsafe fn pair<'a>(model: *const DvgrModel, dataset: *const DvgrDataset) -> Result<(&'a Model, &'a Dataset), Failure> {
    let m = model.as_ref().ok_or_else(|| null("model"))?;
    let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
    Ok((&m.model, &d.dataset))
}

/// Predicts question `index` of `dataset`. `probs` may be NULL.
///
/// # Safety
/// Handles must be live; `probs` must hold `probs_len` doubles if not NULL.
#[no_mangle]
pub unsafe extern "C" fn dvgr_predict(
    model: *const DvgrModel,
    dataset: *const DvgrDataset,
    index: usize,
    answer: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> DvgrStatus {
    guard(|| {
        let (m, d) = pair(model, dataset)?;
        let q = d.instances.get(index).ok_or_else(|| invalid(format!("question index {index} out of range")))?;
        let video = d.video(&q.video_id).ok_or_else(|| invalid(format!("missing video {}", q.video_id)))?;
        write_prediction(m, &q.tokens, video, answer, probs, probs_len)
    })
}

/// Overall accuracy on `dataset`. When `report_json` is not NULL it
/// receives the full report including per-question-type accuracy.
///
/// # Safety
/// Handles must be live; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_evaluate(
    model: *const DvgrModel,
    dataset: *const DvgrDataset,
    accuracy: *mut f64,
    report_json: *mut *mut c_char,
) -> DvgrStatus {
    guard(|| {
        let (m, d) = pair(model, dataset)?;
        let acc = out_arg(accuracy, "accuracy")?;
        let report = evaluate(m, d)?;
        *acc = report.accuracy;
        if let Some(out) = report_json.as_mut() {
            let text = serde_json::to_string(&report).map_err(|e| Failure(DvgrStatus::Serialization, e.to_string()))?;
            *out = to_c_string(text)?;
        }
        Ok(())
    })
}

/// Per-step attention trace of question `index` as JSON.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_trace_json(
    model: *const DvgrModel,
    dataset: *const DvgrDataset,
    index: usize,
    with_gat: bool,
    out: *mut *mut c_char,
) -> DvgrStatus {
    guard(|| {
        let (m, d) = pair(model, dataset)?;
        let out = out_arg(out, "out")?;
        let q = d.instances.get(index).ok_or_else(|| invalid(format!("question index {index} out of range")))?;
        let doc = trace_dump(m, d, q, with_gat)?;
        let text = serde_json::to_string(&doc).map_err(|e| Failure(DvgrStatus::Serialization, e.to_string()))?;
        *out = to_c_string(text)?;
        Ok(())
    })
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Tensor, Failure> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("{what} is empty")));
    }
    Ok(Tensor::from_vec(rows, cols, slice_arg(p, rows * cols, what)?.to_vec()))
}

/// Linear-kernel HSIC between row-major `n × dz` and `n × dw` matrices.
///
/// # Safety
/// `z` and `w` must hold `n·dz` and `n·dw` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_hsic(z: *const f64, w: *const f64, n: usize, dz: usize, dw: usize, out: *mut f64) -> DvgrStatus {
    guard(|| {
        let v = hsic_value(&matrix(z, n, dz, "z")?, &matrix(w, n, dw, "w")?)?;
        *out_arg(out, "out")? = v;
        Ok(())
    })
}

/// Frobenius distance between the row-normalised Gram matrices of two
/// row-major `n × d` matrices.
///
/// # Safety
/// `a` and `b` must hold `n·d` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dvgr_consistency_loss(a: *const f64, b: *const f64, n: usize, d: usize, out: *mut f64) -> DvgrStatus {
    guard(|| {
        let v = consistency_value(&matrix(a, n, d, "a")?, &matrix(b, n, d, "b")?)?;
        *out_arg(out, "out")? = v;
        Ok(())
    })
}
