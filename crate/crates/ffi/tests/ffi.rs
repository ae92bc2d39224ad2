//! Exercises the C ABI surface from Rust: open from config files, ask,
//! inspect the JSON result, and hit the error paths.

use std::ffi::{CStr, CString};

use rebel::backend::{RecordingBackend, ScriptedBackend};
use rebel_ffi::{
    rebel_engine_ask, rebel_engine_ask_json, rebel_engine_free, rebel_engine_open,
    rebel_last_error, rebel_string_free, RebelStatus,
};

/// Record a 0-hop run so the FFI engine can replay it.
fn write_replay_fixture(dir: &std::path::Path) -> std::path::PathBuf {
    use rebel::featurizer::TrigramFeaturizer;
    use rebel::prompting::PromptSet;
    use rebel::types::EngineConfig;
    use std::sync::Arc;

    let recorder = Arc::new(RecordingBackend::new(ScriptedBackend::new(vec![
        "   ", "yes", " 4",
    ])));
    let engine = rebel::Engine::new(
        EngineConfig::default(),
        vec![],
        recorder.clone(),
        Arc::new(TrigramFeaturizer),
        PromptSet::builtin(),
    )
    .unwrap();
    assert_eq!(engine.answer("What is 2+2?").unwrap().answer, "4");

    let path = dir.join("replay.jsonl");
    recorder.write_to(&path).unwrap();
    path
}

fn cstring(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn open_ask_and_free_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let replay_path = write_replay_fixture(dir.path());
    let replay_c = cstring(replay_path.to_str().unwrap());

    unsafe {
        let engine = rebel_engine_open(
            std::ptr::null(),
            std::ptr::null(),
            std::ptr::null(),
            replay_c.as_ptr(),
        );
        assert!(!engine.is_null(), "open failed: {:?}", last_error());

        let question = cstring("What is 2+2?");
        let mut answer: *mut std::ffi::c_char = std::ptr::null_mut();
        let status = rebel_engine_ask(engine, question.as_ptr(), &mut answer);
        assert_eq!(status, RebelStatus::RebelOk);
        assert_eq!(CStr::from_ptr(answer).to_str().unwrap(), "4");
        rebel_string_free(answer);

        rebel_engine_free(engine);
    }
}

#[test]
fn ask_json_returns_the_full_result() {
    let dir = tempfile::tempdir().unwrap();
    let replay_path = write_replay_fixture(dir.path());
    let replay_c = cstring(replay_path.to_str().unwrap());

    unsafe {
        let engine = rebel_engine_open(
            std::ptr::null(),
            std::ptr::null(),
            std::ptr::null(),
            replay_c.as_ptr(),
        );
        assert!(!engine.is_null());

        let question = cstring("What is 2+2?");
        let mut raw: *mut std::ffi::c_char = std::ptr::null_mut();
        let status = rebel_engine_ask_json(engine, question.as_ptr(), &mut raw);
        assert_eq!(status, RebelStatus::RebelOk);
        let parsed: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(raw).to_str().unwrap()).unwrap();
        assert_eq!(parsed["answer"].as_str().unwrap(), "4");
        assert_eq!(parsed["fact"]["question"].as_str().unwrap(), "What is 2+2?");
        assert_eq!(parsed["metrics"]["completion_calls"].as_u64().unwrap(), 3);
        assert_eq!(parsed["trace"]["resolution"]["path"].as_str().unwrap(), "memory");
        rebel_string_free(raw);

        rebel_engine_free(engine);
    }
}

#[test]
fn open_without_a_backend_fails_with_a_message() {
    unsafe {
        let engine = rebel_engine_open(
            std::ptr::null(),
            std::ptr::null(),
            std::ptr::null(),
            std::ptr::null(),
        );
        assert!(engine.is_null());
        assert!(last_error().contains("backend"));
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut answer: *mut std::ffi::c_char = std::ptr::null_mut();
        let question = cstring("q");
        assert_eq!(
            rebel_engine_ask(std::ptr::null_mut(), question.as_ptr(), &mut answer),
            RebelStatus::RebelNullArgument
        );
        // Free on null is a safe no-op.
        rebel_engine_free(std::ptr::null_mut());
        rebel_string_free(std::ptr::null_mut());
    }
}

#[test]
fn replay_exhaustion_surfaces_as_an_engine_error() {
    let dir = tempfile::tempdir().unwrap();
    let replay_path = write_replay_fixture(dir.path());
    let replay_c = cstring(replay_path.to_str().unwrap());

    unsafe {
        let engine = rebel_engine_open(
            std::ptr::null(),
            std::ptr::null(),
            std::ptr::null(),
            replay_c.as_ptr(),
        );
        assert!(!engine.is_null());

        let question = cstring("What is 2+2?");
        let mut answer: *mut std::ffi::c_char = std::ptr::null_mut();
        assert_eq!(
            rebel_engine_ask(engine, question.as_ptr(), &mut answer),
            RebelStatus::RebelOk
        );
        rebel_string_free(answer);

        // The transcript is consumed; a second ask runs out of entries.
        let mut second: *mut std::ffi::c_char = std::ptr::null_mut();
        assert_eq!(
            rebel_engine_ask(engine, question.as_ptr(), &mut second),
            RebelStatus::RebelEngineError
        );
        assert!(last_error().contains("exhausted"));

        rebel_engine_free(engine);
    }
}

unsafe fn last_error() -> String {
    CStr::from_ptr(rebel_last_error()).to_string_lossy().into_owned()
}

// cbindgen output sanity: the committed header declares the whole surface.
#[test]
fn generated_header_covers_the_surface() {
    let header = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rebel.h"),
    )
    .expect("header generated at build time");
    for symbol in [
        "rebel_engine_open",
        "rebel_engine_ask",
        "rebel_engine_ask_json",
        "rebel_engine_free",
        "rebel_string_free",
        "rebel_last_error",
        "typedef struct RebelEngine RebelEngine;",
        "typedef enum RebelStatus",
    ] {
        assert!(header.contains(symbol), "header is missing {symbol}");
    }
}
