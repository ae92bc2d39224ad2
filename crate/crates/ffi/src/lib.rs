//! C ABI for the rebel engine.
//!
//! Handles are opaque pointers created by [`rebel_engine_open`] and
//! released with [`rebel_engine_free`]. Strings returned through out
//! parameters are heap-allocated and must be released with
//! [`rebel_string_free`]. On any non-OK status, [`rebel_last_error`]
//! returns a message describing the failure; the pointer stays valid until
//! the next rebel call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;

use rebel::setup::{build_engine, SetupPaths};
use rebel::Engine;

/// Opaque engine handle.
pub struct RebelEngine {
    inner: Engine,
}

/// Status codes returned by every fallible binding.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebelStatus {
    RebelOk = 0,
    RebelNullArgument = 1,
    RebelInvalidUtf8 = 2,
    RebelConfigError = 3,
    RebelEngineError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(message).unwrap_or_default();
    });
}

/// Message for the most recent failure on this thread. Borrowed; valid
/// until the next rebel call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn rebel_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn optional_path(raw: *const c_char) -> Result<Option<PathBuf>, RebelStatus> {
    if raw.is_null() {
        return Ok(None);
    }
    match CStr::from_ptr(raw).to_str() {
        Ok(s) => Ok(Some(PathBuf::from(s))),
        Err(_) => Err(RebelStatus::RebelInvalidUtf8),
    }
}

/// Build an engine from config files. Every path may be null: a null
/// engine config means defaults, a null tools path means no tools, and
/// exactly one of backend config / replay transcript must be given.
/// Returns null on failure; consult [`rebel_last_error`].
///
/// # Safety
/// Non-null arguments must point to NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rebel_engine_open(
    engine_config_path: *const c_char,
    backend_config_path: *const c_char,
    tools_path: *const c_char,
    replay_path: *const c_char,
) -> *mut RebelEngine {
    let parse = |raw| match optional_path(raw) {
        Ok(path) => Some(path),
        Err(_) => {
            set_last_error("path argument is not valid UTF-8");
            None
        }
    };
    let (Some(engine_config), Some(backend_config), Some(tools), Some(replay)) = (
        parse(engine_config_path),
        parse(backend_config_path),
        parse(tools_path),
        parse(replay_path),
    ) else {
        return std::ptr::null_mut();
    };

    let paths = SetupPaths {
        engine_config: engine_config.as_deref(),
        backend_config: backend_config.as_deref(),
        tools: tools.as_deref(),
        replay: replay.as_deref(),
        record: false,
    };
    match build_engine(&paths) {
        Ok(built) => Box::into_raw(Box::new(RebelEngine {
            inner: built.engine,
        })),
        Err(error) => {
            set_last_error(error.to_string());
            std::ptr::null_mut()
        }
    }
}

unsafe fn ask_impl(
    engine: *mut RebelEngine,
    question: *const c_char,
    out: *mut *mut c_char,
    render: fn(&rebel::AnswerResult) -> String,
) -> RebelStatus {
    if engine.is_null() || question.is_null() || out.is_null() {
        set_last_error("null argument");
        return RebelStatus::RebelNullArgument;
    }
    let question = match CStr::from_ptr(question).to_str() {
        Ok(s) => s,
        Err(_) => {
            set_last_error("question is not valid UTF-8");
            return RebelStatus::RebelInvalidUtf8;
        }
    };
    match (*engine).inner.answer(question) {
        Ok(result) => {
            let rendered = render(&result).replace('\0', " ");
            let text = CString::new(rendered).unwrap_or_default();
            *out = text.into_raw();
            RebelStatus::RebelOk
        }
        Err(error) => {
            set_last_error(error.to_string());
            RebelStatus::RebelEngineError
        }
    }
}

/// Answer a question; on success `*answer_out` holds the answer text.
///
/// # Safety
/// `engine` must come from [`rebel_engine_open`] and not be freed;
/// `question` must be a NUL-terminated string; `answer_out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rebel_engine_ask(
    engine: *mut RebelEngine,
    question: *const c_char,
    answer_out: *mut *mut c_char,
) -> RebelStatus {
    ask_impl(engine, question, answer_out, |result| result.answer.clone())
}

/// Answer a question; on success `*result_json_out` holds the full result
/// (answer, fact, trace tree, metrics) as a JSON document.
///
/// # Safety
/// Same contract as [`rebel_engine_ask`].
#[no_mangle]
pub unsafe extern "C" fn rebel_engine_ask_json(
    engine: *mut RebelEngine,
    question: *const c_char,
    result_json_out: *mut *mut c_char,
) -> RebelStatus {
    ask_impl(engine, question, result_json_out, |result| {
        serde_json::to_string(result).unwrap_or_default()
    })
}

/// Release an engine handle. Null is a no-op.
///
/// # Safety
/// `engine` must come from [`rebel_engine_open`] and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn rebel_engine_free(engine: *mut RebelEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Release a string returned through an out parameter. Null is a no-op.
///
/// # Safety
/// `s` must come from a rebel function and not already be freed.
#[no_mangle]
pub unsafe extern "C" fn rebel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
