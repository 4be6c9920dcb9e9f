//! End-to-end CLI tests driving the compiled binary against the in-process
//! mock server.

use std::path::Path;
use std::process::{Command, Output};

use edgebench_core::mock::{serve, MockProfile};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_edgebench"))
}

fn run(store: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_fixture_passes_on_clean_checkout() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["validate-fixture"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn report_on_empty_store_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["report"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("Model"));
    assert!(text.contains("Metric"));
    // no data rows
    assert!(!text.contains("tok/s"));
}

#[test]
fn unknown_figure_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["export", "no_such_figure"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[validation]"));
}

#[test]
fn run_against_dead_endpoint_exits_transport() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "run",
            "--endpoint",
            "mock=http://127.0.0.1:9",
            "--model",
            "llama3.2-1b",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[connect]"));
}

#[test]
fn ingest_power_requires_a_source() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ingest-power"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[validation]"));
}

#[test]
fn full_pipeline_against_mock() {
    let mut profile = MockProfile::new("llama3.2-1b", 100.0, 50.0);
    profile.first_request_load_ms = 300.0;
    let server = serve(vec![profile], "127.0.0.1:0").unwrap();
    let endpoint = format!("mock={}", server.base_url());
    let dir = tempfile::tempdir().unwrap();

    let out = run(
        dir.path(),
        &[
            "run",
            "--endpoint",
            &endpoint,
            "--model",
            "llama3.2-1b",
            "--runs",
            "2",
            "--num-predict",
            "40",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("recorded 2 ok run(s)"));
    assert!(dir.path().join("runs.ndjson").exists());
    assert!(dir.path().join("aggregates.json").exists());

    let out = run(dir.path(), &["ingest-power", "--constant-power-w", "2.5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("energy attached to 1/1"));

    let out = run(dir.path(), &["metrics"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("pareto frontier"));
    assert!(text.contains("mock/llama3.2-1b/mock"));
    // constant power round-trips through MJ/Mtok: power_w column == 2.5
    assert!(text.contains("2.5000"));

    let out = run(dir.path(), &["report"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report_a = stdout(&out);
    assert!(report_a.contains("llama3.2-1b"));
    assert!(report_a.contains("Energy (MJ/Mtok)"));

    // determinism of the read path: identical store => identical report
    let out = run(dir.path(), &["report"]);
    assert_eq!(report_a, stdout(&out));

    let out = run(dir.path(), &["export", "bubble"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bubble = dir.path().join("exports/power_vs_throughput_bubble.csv");
    let csv = std::fs::read_to_string(bubble).unwrap();
    assert!(csv.starts_with("config,power_w,throughput_tps,volume_cm3"));
    assert!(csv.contains("mock/llama3.2-1b,2.5000"));
}

#[test]
fn unknown_model_id_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "run",
            "--endpoint",
            "mock=http://127.0.0.1:9",
            "--model",
            "no-such-model",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown model id"));
}
