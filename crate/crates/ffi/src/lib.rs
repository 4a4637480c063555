//! C ABI over the `mrcedit` library.
//!
//! Every function returns an [`MrcStatus`]; on anything but `MRC_STATUS_OK`
//! the message is available from [`mrc_last_error`] on the same thread.
//! Structured inputs and outputs travel as UTF-8 JSON. Strings handed out by
//! the library must be released with [`mrc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mrcedit::backend::{confidence, Backend, MockRule, TokenLogprob};
use mrcedit::eval::{evaluate, EvalItem};
use mrcedit::metrics::{exact_match, f1, inclusion_match, is_misled};
use mrcedit::pipeline::run_baseline;
use mrcedit::{Completion, EndpointConfig, MockBackend, MrcSample, Pipeline, PipelineConfig, Variant, WireBackend};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    InvalidArgument = 4,
    Pipeline = 5,
    Panic = 6,
}

/// Opaque model backend.
pub struct MrcBackend {
    inner: Box<dyn Backend>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(MrcStatus, String);

impl Failure {
    fn new(status: MrcStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MrcStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err(Failure::new(MrcStatus::Panic, "panic inside mrcedit")));
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MrcStatus::Ok
        }
        Err(Failure(status, msg)) => {
            let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
            LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
            status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(MrcStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure::new(MrcStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn str_array(p: *const *const c_char, n: usize, name: &str) -> Result<Vec<String>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Failure::new(MrcStatus::NullArgument, format!("{name} is null")));
    }
    std::slice::from_raw_parts(p, n).iter().map(|&s| str_arg(s, name).map(str::to_string)).collect()
}

unsafe fn json_arg<T: serde::de::DeserializeOwned>(p: *const c_char, name: &str) -> Result<T, Failure> {
    serde_json::from_str(str_arg(p, name)?).map_err(|e| Failure::new(MrcStatus::InvalidJson, format!("{name}: {e}")))
}

unsafe fn backend_arg<'a>(p: *const MrcBackend, name: &str) -> Result<&'a dyn Backend, Failure> {
    p.as_ref().map(|b| b.inner.as_ref()).ok_or_else(|| Failure::new(MrcStatus::NullArgument, format!("{name} is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(MrcStatus::NullArgument, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Failure> {
    let body = serde_json::to_string(value).map_err(|e| Failure::new(MrcStatus::InvalidJson, e))?;
    put(out, CString::new(body).expect("JSON has no nul bytes").into_raw())
}

unsafe fn pipeline_config(p: *const c_char) -> Result<PipelineConfig, Failure> {
    if p.is_null() {
        Ok(PipelineConfig::default())
    } else {
        json_arg(p, "config_json")
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn mrc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn mrc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scripted backend from a JSON array of rules
/// (`[{"match": {"exact"|"regex": ...}, "responses": [{"text", "token_logprobs"}]}]`).
///
/// # Safety
/// String arguments must be valid nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_backend_mock_new(
    id: *const c_char,
    rules_json: *const c_char,
    seed: u64,
    out: *mut *mut MrcBackend,
) -> MrcStatus {
    guard(|| {
        let id = str_arg(id, "id")?;
        let rules: Vec<MockRule> = json_arg(rules_json, "rules_json")?;
        let mock = MockBackend::new(id, rules).map_err(|e| Failure::new(MrcStatus::InvalidArgument, e))?.with_seed(seed);
        put(out, Box::into_raw(Box::new(MrcBackend { inner: Box::new(mock) })))
    })
}

/// Completion-endpoint backend from a JSON endpoint description
/// (`{"base_url", "model_name", ...}`). The API key is read from the
/// environment variable named by `api_key_env` at call time.
///
/// # Safety
/// String arguments must be valid nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_backend_wire_new(id: *const c_char, endpoint_json: *const c_char, out: *mut *mut MrcBackend) -> MrcStatus {
    guard(|| {
        let id = str_arg(id, "id")?;
        let cfg: EndpointConfig = json_arg(endpoint_json, "endpoint_json")?;
        put(out, Box::into_raw(Box::new(MrcBackend { inner: Box::new(WireBackend::new(id, cfg)) })))
    })
}

/// # Safety
/// `b` must come from a `mrc_backend_*_new` call and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mrc_backend_free(b: *mut MrcBackend) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Token-level F1 of `prediction` against the best of `n_golds` answers.
///
/// # Safety
/// `golds` must point to `n_golds` valid strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_f1(prediction: *const c_char, golds: *const *const c_char, n_golds: usize, out: *mut f64) -> MrcStatus {
    guard(|| put(out, f1(str_arg(prediction, "prediction")?, &str_array(golds, n_golds, "golds")?)))
}

/// # Safety
/// As for [`mrc_f1`].
#[no_mangle]
pub unsafe extern "C" fn mrc_exact_match(
    prediction: *const c_char,
    golds: *const *const c_char,
    n_golds: usize,
    out: *mut u8,
) -> MrcStatus {
    guard(|| put(out, exact_match(str_arg(prediction, "prediction")?, &str_array(golds, n_golds, "golds")?)))
}

/// # Safety
/// As for [`mrc_f1`].
#[no_mangle]
pub unsafe extern "C" fn mrc_inclusion_match(
    prediction: *const c_char,
    golds: *const *const c_char,
    n_golds: usize,
    out: *mut u8,
) -> MrcStatus {
    guard(|| put(out, inclusion_match(str_arg(prediction, "prediction")?, &str_array(golds, n_golds, "golds")?)))
}

/// True when the original answer was inclusion-correct and the edited one is not.
///
/// # Safety
/// String arrays must hold the stated number of valid strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_is_misled(
    answer_original: *const c_char,
    answer_edited: *const c_char,
    golds_original: *const *const c_char,
    n_golds_original: usize,
    golds_edited: *const *const c_char,
    n_golds_edited: usize,
    out: *mut bool,
) -> MrcStatus {
    guard(|| {
        let misled = is_misled(
            str_arg(answer_original, "answer_original")?,
            str_arg(answer_edited, "answer_edited")?,
            &str_array(golds_original, n_golds_original, "golds_original")?,
            &str_array(golds_edited, n_golds_edited, "golds_edited")?,
        );
        put(out, misled)
    })
}

/// Answer confidence from per-token log-probabilities (first three count).
///
/// # Safety
/// `logprobs` must point to `n` doubles (may be null when `n` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_confidence(logprobs: *const f64, n: usize, out: *mut f64) -> MrcStatus {
    guard(|| {
        let lps: &[f64] = match (n, logprobs.is_null()) {
            (0, _) => &[],
            (_, true) => return Err(Failure::new(MrcStatus::NullArgument, "logprobs is null")),
            _ => std::slice::from_raw_parts(logprobs, n),
        };
        let c = Completion {
            text: String::new(),
            token_logprobs: lps.iter().map(|&logprob| TokenLogprob { token: String::new(), logprob }).collect(),
            model_id: String::new(),
            latency_ms: 0,
        };
        c.check().map_err(|e| Failure::new(MrcStatus::InvalidArgument, e))?;
        put(out, confidence(&c))
    })
}

/// Runs the guided editor on one sample (`{"id", "context", "question", "golds"}`).
/// `config_json` may be null for defaults. Writes the edit trace as JSON.
///
/// # Safety
/// Handles must be live; strings valid; `out_trace_json` writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_pipeline_run(
    editor: *const MrcBackend,
    guide: *const MrcBackend,
    sample_json: *const c_char,
    config_json: *const c_char,
    out_trace_json: *mut *mut c_char,
) -> MrcStatus {
    guard(|| {
        let (editor, guide) = (backend_arg(editor, "editor")?, backend_arg(guide, "guide")?);
        let sample: MrcSample = json_arg(sample_json, "sample_json")?;
        let pipeline = Pipeline::new(editor, guide, pipeline_config(config_json)?);
        let trace = pipeline.run(&sample).map_err(|e| Failure::new(MrcStatus::Pipeline, e))?;
        put_json(out_trace_json, &trace)
    })
}

/// Non-targeted edit of one sample. Arguments as for [`mrc_pipeline_run`].
///
/// # Safety
/// As for [`mrc_pipeline_run`].
#[no_mangle]
pub unsafe extern "C" fn mrc_baseline_run(
    editor: *const MrcBackend,
    sample_json: *const c_char,
    config_json: *const c_char,
    out_trace_json: *mut *mut c_char,
) -> MrcStatus {
    guard(|| {
        let editor = backend_arg(editor, "editor")?;
        let sample: MrcSample = json_arg(sample_json, "sample_json")?;
        let trace = run_baseline(&sample, editor, &pipeline_config(config_json)?).map_err(|e| Failure::new(MrcStatus::Pipeline, e))?;
        put_json(out_trace_json, &trace)
    })
}

/// Scores a reader over a JSON array of samples. `edited` only labels the run.
/// Writes the run (per-sample scores and aggregate report) as JSON.
///
/// # Safety
/// Handle must be live; strings valid; `out_run_json` writable.
#[no_mangle]
pub unsafe extern "C" fn mrc_evaluate(
    reader: *const MrcBackend,
    dataset_id: *const c_char,
    samples_json: *const c_char,
    edited: bool,
    out_run_json: *mut *mut c_char,
) -> MrcStatus {
    guard(|| {
        let reader = backend_arg(reader, "reader")?;
        let dataset_id = str_arg(dataset_id, "dataset_id")?;
        let samples: Vec<MrcSample> = json_arg(samples_json, "samples_json")?;
        let items: Vec<EvalItem> = samples.iter().map(EvalItem::from_sample).collect();
        let variant = if edited { Variant::Edited } else { Variant::Natural };
        put_json(out_run_json, &evaluate(reader, dataset_id, variant, &items))
    })
}
