//! End-to-end tests of the `rebel` binary: config wiring, record/replay,
//! verbosity, eval reports and the tools listing.

use std::path::{Path, PathBuf};
use std::process::Output;

use rebel::stub_server::{CannedResponse, StubServer};

const SECRET: &str = "S3CRETVALUE";

fn rebel_bin() -> &'static str {
    env!("CARGO_BIN_EXE_rebel")
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(rebel_bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn completion(text: &str) -> CannedResponse {
    CannedResponse::ok(serde_json::json!({"choices": [{"text": text}]}).to_string())
}

/// Stub server playing both the completion API and the tool endpoint for a
/// 2-hop ask: split into two subquestions, answer the first from memory,
/// the second through the tool, then synthesize.
fn two_hop_server() -> StubServer {
    let completions = vec![
        completion("Where was Marie Curie born?, What is the currency of that country?"),
        completion("   "),
        completion("yes"),
        completion("Warsaw, Poland"),
        completion("   "),
        completion("no"),
        completion("1"),
        completion(r#"{"q": "currency of Poland"}"#),
        completion("The zloty"),
        completion("yes"),
        completion("The zloty."),
    ];
    StubServer::start(vec![
        ("/v1/completions".to_string(), completions),
        (
            format!("/api?key={SECRET}&q=currency%20of%20Poland"),
            vec![CannedResponse::ok(
                "The currency of Poland is the zloty (PLN).",
            )],
        ),
    ])
    .unwrap()
}

fn write_backend_config(dir: &Path, server: &StubServer) -> PathBuf {
    let path = dir.join("backend.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "endpoint": server.url_for("/v1/completions"),
            "model": "stub-model",
            "retry_backoff_ms": 1,
        })
        .to_string(),
    )
    .unwrap();
    path
}

fn write_tools_config(dir: &Path, server: &StubServer) -> PathBuf {
    let path = dir.join("tools.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "tools": [{
                "name": "lookup",
                "description": "Look up facts about anything with a free-form query.",
                "method": "GET",
                "endpoint": server.url_for("/api"),
                "dynamic_params": {"q": "the free-form query"},
                "static_params": {"key": SECRET},
            }]
        })
        .to_string(),
    )
    .unwrap();
    path
}

const TWO_HOP_QUESTION: &str = "What is the currency of the country where Marie Curie was born?";

#[test]
fn ask_records_then_replays_the_same_answer_line() {
    let server = two_hop_server();
    let dir = tempfile::tempdir().unwrap();
    let backend = write_backend_config(dir.path(), &server);
    let tools = write_tools_config(dir.path(), &server);
    let transcript = dir.path().join("run.jsonl");

    let recorded = run(&[
        "ask",
        TWO_HOP_QUESTION,
        "--backend",
        backend.to_str().unwrap(),
        "--tools",
        tools.to_str().unwrap(),
        "--record",
        transcript.to_str().unwrap(),
    ]);
    assert!(
        recorded.status.success(),
        "record run failed: {}",
        String::from_utf8_lossy(&recorded.stderr)
    );
    let recorded_answer = stdout(&recorded).lines().next().unwrap().to_string();
    assert_eq!(recorded_answer, "The zloty.");
    assert!(transcript.exists());

    let replayed = run(&[
        "ask",
        TWO_HOP_QUESTION,
        "--tools",
        tools.to_str().unwrap(),
        "--replay",
        transcript.to_str().unwrap(),
    ]);
    assert!(replayed.status.success());
    let replayed_answer = stdout(&replayed).lines().next().unwrap().to_string();
    assert_eq!(replayed_answer, recorded_answer);
}

#[test]
fn ask_rejects_record_and_replay_together() {
    let output = run(&[
        "ask",
        "anything",
        "--record",
        "/tmp/a.jsonl",
        "--replay",
        "/tmp/b.jsonl",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn ask_without_any_backend_is_a_config_error() {
    let output = run(&["ask", "anything"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verbose_ask_prints_one_line_per_trace_node_and_no_secrets() {
    let server = two_hop_server();
    let dir = tempfile::tempdir().unwrap();
    let backend = write_backend_config(dir.path(), &server);
    let tools = write_tools_config(dir.path(), &server);

    let output = run(&[
        "ask",
        TWO_HOP_QUESTION,
        "--backend",
        backend.to_str().unwrap(),
        "--tools",
        tools.to_str().unwrap(),
        "-vv",
    ]);
    assert!(output.status.success());
    let text = stdout(&output);
    // Answer first, then the trace: one "* " line per node (3 nodes), then
    // the totals.
    assert_eq!(text.lines().next().unwrap(), "The zloty.");
    let node_lines = text.lines().filter(|l| l.trim_start().starts_with("* ")).count();
    assert_eq!(node_lines, 3);
    assert!(text.contains("completions: 11"));
    assert!(text.contains("tool calls: 1"));
    // Hidden values never reach any output stream at any verbosity.
    assert!(!text.contains(SECRET));
    assert!(!String::from_utf8_lossy(&output.stderr).contains(SECRET));
}

#[test]
fn eval_sampling_is_byte_deterministic_across_replays() {
    // 20 items in two categories; sampling 5 per category gives 10 runs.
    let dir = tempfile::tempdir().unwrap();
    let dataset_path = dir.path().join("dataset.jsonl");
    let lines: Vec<String> = (0..20)
        .map(|i| {
            serde_json::json!({
                "id": format!("{i:02}"),
                "question": format!("synthetic question {i}?"),
                "answers": ["gold"],
                "category": if i < 10 { "alpha" } else { "beta" },
            })
            .to_string()
        })
        .collect();
    std::fs::write(&dataset_path, lines.join("\n")).unwrap();

    // 10 sampled items, 3 completions each, served in sequence.
    let mut completions = Vec::new();
    for _ in 0..10 {
        completions.push(completion("   "));
        completions.push(completion("yes"));
        completions.push(completion("the gold answer"));
    }
    let server = StubServer::start(vec![("/v1/completions".to_string(), completions)]).unwrap();
    let backend = write_backend_config(dir.path(), &server);
    let transcript = dir.path().join("eval.jsonl");

    let recorded = run(&[
        "eval",
        dataset_path.to_str().unwrap(),
        "--task",
        "retrieval",
        "--sample",
        "5",
        "--seed",
        "7",
        "--backend",
        backend.to_str().unwrap(),
        "--record",
        transcript.to_str().unwrap(),
    ]);
    assert!(
        recorded.status.success(),
        "record eval failed: {}",
        String::from_utf8_lossy(&recorded.stderr)
    );

    let report_once = dir.path().join("report1.json");
    let report_again = dir.path().join("report2.json");
    for report in [&report_once, &report_again] {
        let output = run(&[
            "eval",
            dataset_path.to_str().unwrap(),
            "--task",
            "retrieval",
            "--sample",
            "5",
            "--seed",
            "7",
            "--replay",
            transcript.to_str().unwrap(),
            "--json-out",
            report.to_str().unwrap(),
        ]);
        assert!(
            output.status.success(),
            "replay eval failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        assert!(stdout(&output).contains("overall"));
    }
    let first = std::fs::read(&report_once).unwrap();
    let second = std::fs::read(&report_again).unwrap();
    assert_eq!(first, second, "reports must be byte-identical");

    let parsed: serde_json::Value =
        serde_json::from_str(&String::from_utf8(first).unwrap()).unwrap();
    assert_eq!(parsed["overall"]["total"].as_u64().unwrap(), 10);
    assert_eq!(parsed["overall"]["accuracy"].as_f64().unwrap(), 100.0);
}

#[test]
fn eval_with_missing_dataset_exits_with_config_error() {
    let output = run(&[
        "eval",
        "/nonexistent/dataset.jsonl",
        "--task",
        "retrieval",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_rejects_jobs_with_replay() {
    let output = run(&[
        "eval",
        "/tmp/whatever.jsonl",
        "--task",
        "retrieval",
        "--jobs",
        "4",
        "--replay",
        "/tmp/t.jsonl",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn tools_listing_hides_endpoints_and_masks_static_values() {
    let dir = tempfile::tempdir().unwrap();
    let tools_path = dir.path().join("tools.json");
    std::fs::write(
        &tools_path,
        serde_json::json!({
            "tools": [
                {"name": "search", "description": "search for facts", "method": "GET",
                 "endpoint": "https://search.example/v1", "dynamic_params": {"q": "the query"},
                 "static_params": {"key": SECRET}},
                {"name": "maps", "description": "driving distance", "method": "GET",
                 "endpoint": "https://maps.example/api",
                 "dynamic_params": {"origins": "origin", "destinations": "destination"}},
                {"name": "weather", "description": "current weather", "method": "GET",
                 "endpoint": "https://weather.example/v1", "dynamic_params": {"q": "the place"}},
            ]
        })
        .to_string(),
    )
    .unwrap();

    let plain = run(&["tools", "--tools", tools_path.to_str().unwrap()]);
    assert!(plain.status.success());
    let text = stdout(&plain);
    let tool_lines: Vec<&str> = text.lines().filter(|l| l.starts_with("tool ")).collect();
    assert_eq!(
        tool_lines,
        vec![
            "tool 1: search for facts",
            "tool 2: driving distance",
            "tool 3: current weather"
        ]
    );
    assert!(!text.contains("endpoint"));
    assert!(!text.contains("https://"));
    assert!(!text.contains(SECRET));

    let hidden = run(&["tools", "--show-hidden", "--tools", tools_path.to_str().unwrap()]);
    assert!(hidden.status.success());
    let text = stdout(&hidden);
    assert!(text.contains("endpoint: https://maps.example/api"));
    assert!(text.contains("key: ****"));
    assert!(!text.contains(SECRET));

    let missing = run(&["tools"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn replay_mismatch_surfaces_as_an_engine_error() {
    // Record a run for one question, then replay it against a different
    // question: the first prompt already diverges.
    let server = StubServer::start(vec![(
        "/v1/completions".to_string(),
        vec![completion("   "), completion("yes"), completion("42")],
    )])
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let backend = write_backend_config(dir.path(), &server);
    let transcript = dir.path().join("t.jsonl");

    let recorded = run(&[
        "ask",
        "What is six times seven?",
        "--backend",
        backend.to_str().unwrap(),
        "--record",
        transcript.to_str().unwrap(),
    ]);
    assert!(recorded.status.success());

    let mismatched = run(&[
        "ask",
        "A different question entirely?",
        "--replay",
        transcript.to_str().unwrap(),
    ]);
    assert_eq!(mismatched.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mismatched.stderr).contains("replay mismatch"));
}
