//! C ABI over the ctxrep core: opaque context handles, JSON at the
//! boundary for structured values, and integer status codes.
//!
//! Conventions:
//! - Every function returns `CTXREP_OK` (0) or a negative status code; output
//!   parameters are written only on success.
//! - Strings returned through `char **` are NUL-terminated UTF-8 owned by the
//!   library; release them with [`ctxrep_string_free`].
//! - Context handles come from the `ctxrep_context_*` constructors and are
//!   released with [`ctxrep_context_free`].
//! - [`ctxrep_last_error_message`] returns a copy of the error text of the
//!   most recent failing call on the same thread.
//!
//! The committed header `include/ctxrep.h` is generated with cbindgen
//! (`cbindgen --crate ctxrep-ffi --output include/ctxrep.h`).

use ctxrep::context::{ContextSpec, OrderPermutation};
use ctxrep::model::{mock_chain_read, MockConfig};
use ctxrep::prompt::{
    render_qa_prompt, render_synthetic_prompt, ChatMessage, PromptPlan, RepetitionStyle,
    TemplateKind,
};
use ctxrep::synthetic::{generate_dataset, DatasetParams, SyntheticSample};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

pub const CTXREP_OK: i32 = 0;
/// A required pointer argument was NULL.
pub const CTXREP_ERR_NULL_ARGUMENT: i32 = -1;
/// A string argument was not valid UTF-8.
pub const CTXREP_ERR_UTF8: i32 = -2;
/// Validation failed (malformed context, permutation, or parameters).
pub const CTXREP_ERR_INVALID: i32 = -3;
/// The operation is defined but not available for these arguments (for
/// example a canonical witness below k repetitions).
pub const CTXREP_ERR_UNSUPPORTED: i32 = -4;
/// Input could not be parsed (JSON or prompt text).
pub const CTXREP_ERR_PARSE: i32 = -5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(code: i32, message: impl std::fmt::Display) -> i32 {
    let text = CString::new(message.to_string())
        .unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
    code
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Opaque handle around an owned document sequence.
pub struct CtxrepContext {
    inner: ContextSpec,
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        return Err(CTXREP_ERR_NULL_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| CTXREP_ERR_UTF8)
}

fn write_string(out: *mut *mut c_char, value: String) -> i32 {
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    match CString::new(value) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            CTXREP_OK
        }
        Err(e) => set_error(CTXREP_ERR_INVALID, format!("string contains NUL: {e}")),
    }
}

unsafe fn read_sigma(sigma: *const u32, sigma_len: usize) -> Result<OrderPermutation, i32> {
    if sigma.is_null() {
        return Err(set_error(CTXREP_ERR_NULL_ARGUMENT, "sigma is NULL"));
    }
    let values: Vec<usize> = std::slice::from_raw_parts(sigma, sigma_len)
        .iter()
        .map(|&v| v as usize)
        .collect();
    OrderPermutation::new(values).map_err(|e| set_error(CTXREP_ERR_INVALID, e))
}

/// Copy of the most recent error message on this thread, or NULL when the
/// last call succeeded. Free with [`ctxrep_string_free`].
#[no_mangle]
pub extern "C" fn ctxrep_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null_mut(), |text| text.clone().into_raw())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by a `ctxrep_*` function and not
/// yet freed; NULL is accepted and ignored.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a context from its JSON form
/// `{"documents":[{"id","title","text","role","hop_index"}...]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_context_from_json(
    json: *const c_char,
    out: *mut *mut CtxrepContext,
) -> i32 {
    clear_error();
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    let json = match read_str(json) {
        Ok(s) => s,
        Err(code) => return set_error(code, "json argument unreadable"),
    };
    match ContextSpec::from_json(json) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(CtxrepContext { inner }));
            CTXREP_OK
        }
        Err(e) => set_error(CTXREP_ERR_PARSE, e),
    }
}

/// Serialize a context back to JSON. Order and text bytes round-trip.
///
/// # Safety
/// `ctx` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_context_to_json(
    ctx: *const CtxrepContext,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let Some(ctx) = ctx.as_ref() else {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "context handle is NULL");
    };
    match ctx.inner.to_json() {
        Ok(json) => write_string(out, json),
        Err(e) => set_error(CTXREP_ERR_INVALID, e),
    }
}

/// Release a context handle.
///
/// # Safety
/// `ctx` must come from this library and not be freed twice; NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_context_free(ctx: *mut CtxrepContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Total number of documents, or -1 for a NULL handle.
///
/// # Safety
/// `ctx` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_context_len(ctx: *const CtxrepContext) -> i64 {
    ctx.as_ref().map_or(-1, |c| c.inner.len() as i64)
}

/// Number of distinct supporting documents, or -1 for a NULL handle.
///
/// # Safety
/// `ctx` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_context_k(ctx: *const CtxrepContext) -> i64 {
    ctx.as_ref().map_or(-1, |c| c.inner.k() as i64)
}

/// The repetition augmentation: concatenate the context with itself `k_hat`
/// times into a fresh handle.
///
/// # Safety
/// `ctx` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_context_repeat(
    ctx: *const CtxrepContext,
    k_hat: u64,
    out: *mut *mut CtxrepContext,
) -> i32 {
    clear_error();
    let Some(ctx) = ctx.as_ref() else {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "context handle is NULL");
    };
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    match ctxrep::context::repeat_context(&ctx.inner, k_hat as usize) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(CtxrepContext { inner }));
            CTXREP_OK
        }
        Err(e) => set_error(CTXREP_ERR_INVALID, e),
    }
}

/// True iff the `k_hat`-repeated context presents the supporting documents
/// in every possible order (exhaustive over all k! orders; k is capped).
///
/// # Safety
/// `ctx` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_verify_order_coverage(
    ctx: *const CtxrepContext,
    k_hat: u64,
    out: *mut bool,
) -> i32 {
    clear_error();
    let Some(ctx) = ctx.as_ref() else {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "context handle is NULL");
    };
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    match ctxrep::context::verify_order_coverage(&ctx.inner, k_hat as usize) {
        Ok(covered) => {
            *out = covered;
            CTXREP_OK
        }
        Err(e) => set_error(CTXREP_ERR_UNSUPPORTED, e),
    }
}

/// True iff some increasing selection presents the supporting documents in
/// the order given by `sigma` (1-based hop indices, length = k).
///
/// # Safety
/// `ctx` must be a live handle; `sigma` must point to `sigma_len` values;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_is_in_order_set(
    ctx: *const CtxrepContext,
    sigma: *const u32,
    sigma_len: usize,
    out: *mut bool,
) -> i32 {
    clear_error();
    let Some(ctx) = ctx.as_ref() else {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "context handle is NULL");
    };
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    let sigma = match read_sigma(sigma, sigma_len) {
        Ok(sigma) => sigma,
        Err(code) => return code,
    };
    *out = ctxrep::context::is_in_order_set(&ctx.inner, &sigma);
    CTXREP_OK
}

/// The canonical selection witness for `sigma` over the `k_hat`-repeated
/// context, as JSON `{"positions":[...],"repetition_of":[...]}`. Requires
/// `k_hat >= k`.
///
/// # Safety
/// `ctx` must be a live handle; `sigma` must point to `sigma_len` values;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_extract_order_witness_json(
    ctx: *const CtxrepContext,
    k_hat: u64,
    sigma: *const u32,
    sigma_len: usize,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let Some(ctx) = ctx.as_ref() else {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "context handle is NULL");
    };
    let sigma = match read_sigma(sigma, sigma_len) {
        Ok(sigma) => sigma,
        Err(code) => return code,
    };
    match ctxrep::context::extract_order_witness(&ctx.inner, k_hat as usize, &sigma) {
        Ok(witness) => write_string(
            out,
            serde_json::to_string(&witness).expect("witness serializes"),
        ),
        Err(e @ ctxrep::context::ContextError::WitnessUnavailable { .. }) => {
            set_error(CTXREP_ERR_UNSUPPORTED, e)
        }
        Err(e) => set_error(CTXREP_ERR_INVALID, e),
    }
}

/// Generate a synthetic chained-list dataset as JSON Lines (header line with
/// the parameters, then one sample per line).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_generate_dataset_jsonl(
    num_samples: u64,
    num_lists: u64,
    elements_per_list: u64,
    seed: u64,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    match generate_dataset(
        num_samples as usize,
        num_lists as usize,
        elements_per_list as usize,
        seed,
    ) {
        Ok(samples) => {
            let params = DatasetParams::new(
                num_samples as usize,
                num_lists as usize,
                elements_per_list as usize,
                seed,
            );
            let mut buffer = Vec::new();
            if let Err(e) = ctxrep::synthetic::write_dataset(&mut buffer, &params, &samples) {
                return set_error(CTXREP_ERR_INVALID, e);
            }
            match String::from_utf8(buffer) {
                Ok(text) => write_string(out, text),
                Err(e) => set_error(CTXREP_ERR_INVALID, e),
            }
        }
        Err(e) => set_error(CTXREP_ERR_INVALID, e),
    }
}

/// Render the synthetic-task prompt for a sample (one JSON object as found
/// in dataset lines) at the given repetition count. Output is a JSON array
/// of `{"role","content"}` messages.
///
/// # Safety
/// `sample_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_render_synthetic_prompt_json(
    sample_json: *const c_char,
    k_hat: u64,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let json = match read_str(sample_json) {
        Ok(s) => s,
        Err(code) => return set_error(code, "sample_json argument unreadable"),
    };
    let sample: SyntheticSample = match serde_json::from_str(json) {
        Ok(sample) => sample,
        Err(e) => return set_error(CTXREP_ERR_PARSE, e),
    };
    if let Err(e) = sample.validate() {
        return set_error(CTXREP_ERR_INVALID, e);
    }
    match render_synthetic_prompt(&sample, k_hat as usize) {
        Ok(messages) => write_string(
            out,
            serde_json::to_string(&messages).expect("messages serialize"),
        ),
        Err(e) => set_error(CTXREP_ERR_INVALID, e),
    }
}

/// Render the QA prompt for a question over a context handle.
/// `style` is "verbatim", "reverse", or "shuffle:SEED". Output is a JSON
/// array of `{"role","content"}` messages.
///
/// # Safety
/// Pointer arguments must be valid as in the other functions.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_render_qa_prompt_json(
    question: *const c_char,
    ctx: *const CtxrepContext,
    k_hat: u64,
    style: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let question = match read_str(question) {
        Ok(s) => s,
        Err(code) => return set_error(code, "question argument unreadable"),
    };
    let Some(ctx) = ctx.as_ref() else {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "context handle is NULL");
    };
    let style = match read_str(style) {
        Ok(s) => match s.parse::<RepetitionStyle>() {
            Ok(style) => style,
            Err(e) => return set_error(CTXREP_ERR_INVALID, e),
        },
        Err(code) => return set_error(code, "style argument unreadable"),
    };
    let plan = PromptPlan::new(TemplateKind::QaBase, k_hat as usize).with_style(style);
    match render_qa_prompt(question, &ctx.inner, &plan) {
        Ok(messages) => write_string(
            out,
            serde_json::to_string(&messages).expect("messages serialize"),
        ),
        Err(e) => set_error(CTXREP_ERR_INVALID, e),
    }
}

/// Run the deterministic mock chain reader on a JSON array of
/// `{"role","content"}` messages and return its completion text
/// ("Answer: ...").
///
/// # Safety
/// `messages_json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_mock_generate(
    messages_json: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let json = match read_str(messages_json) {
        Ok(s) => s,
        Err(code) => return set_error(code, "messages_json argument unreadable"),
    };
    let messages: Vec<ChatMessage> = match serde_json::from_str(json) {
        Ok(messages) => messages,
        Err(e) => return set_error(CTXREP_ERR_PARSE, e),
    };
    match mock_chain_read(&MockConfig::default(), &messages) {
        Ok(answer) => write_string(out, format!("Answer: {answer}")),
        Err(e) => set_error(CTXREP_ERR_PARSE, e),
    }
}

/// Extract the answer span from a model output (the text after the last
/// "Answer:", trimmed).
///
/// # Safety
/// `raw_output` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_extract_answer(
    raw_output: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let raw = match read_str(raw_output) {
        Ok(s) => s,
        Err(code) => return set_error(code, "raw_output argument unreadable"),
    };
    write_string(out, ctxrep::scoring::extract_answer(raw))
}

/// Short-answer normalization (lowercase, no punctuation, no articles,
/// collapsed whitespace).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_normalize_answer(
    text: *const c_char,
    out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let text = match read_str(text) {
        Ok(s) => s,
        Err(code) => return set_error(code, "text argument unreadable"),
    };
    write_string(out, ctxrep::scoring::normalize_answer(text))
}

/// Bag-of-tokens F1 between a prediction and a gold answer.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_token_f1(
    prediction: *const c_char,
    gold: *const c_char,
    out: *mut f64,
) -> i32 {
    clear_error();
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    let prediction = match read_str(prediction) {
        Ok(s) => s,
        Err(code) => return set_error(code, "prediction argument unreadable"),
    };
    let gold = match read_str(gold) {
        Ok(s) => s,
        Err(code) => return set_error(code, "gold argument unreadable"),
    };
    *out = ctxrep::scoring::token_f1(prediction, gold);
    CTXREP_OK
}

/// True iff the first digit run in the extracted answer equals `gold`.
///
/// # Safety
/// `prediction` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ctxrep_exact_match_int(
    prediction: *const c_char,
    gold: u32,
    out: *mut bool,
) -> i32 {
    clear_error();
    if out.is_null() {
        return set_error(CTXREP_ERR_NULL_ARGUMENT, "output pointer is NULL");
    }
    let prediction = match read_str(prediction) {
        Ok(s) => s,
        Err(code) => return set_error(code, "prediction argument unreadable"),
    };
    *out = ctxrep::scoring::exact_match_int(prediction, gold);
    CTXREP_OK
}
