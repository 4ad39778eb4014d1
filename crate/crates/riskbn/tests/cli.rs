use std::path::Path;
use std::process::{Command, Output};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use riskbn::service::{router, AppState, ServiceConfig};
use riskbn_core::scenarios;
use serde_json::{json, Value};
use tower::ServiceExt;

fn riskbn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskbn"))
        .args(args)
        .env_remove("RISKBN_BINS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn missing_file_exits_with_validation_code() {
    let o = riskbn(&["assess", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(scenarios::KETTLE_S1).unwrap();
    v["usage"]["profile"]["as_intended"] = json!(0.2);
    let path = write(dir.path(), "bad.json", &v.to_string());
    let o = riskbn(&["assess", &path]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("usage.profile"));

    let o = riskbn(&["validate", &path, "--format", "json"]);
    assert_eq!(o.status.code(), Some(2));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["valid"], false);

    let o = riskbn(&["validate", "kettle_s2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("valid"));
}

#[test]
fn evidence_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.json", r#"{"flux_capacitor": "on"}"#);
    let o = riskbn(&["assess", "teddy_s1", "--bins", "20", "--evidence", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("flux_capacitor"));

    let impossible = write(
        dir.path(),
        "impossible.json",
        r#"{"risk_tolerability": "very_high", "government_intervention": "true"}"#,
    );
    let o = riskbn(&["assess", "teddy_s1", "--bins", "20", "--evidence", &impossible]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("impossible"));
}

#[test]
fn compare_rapex_needs_a_severity() {
    let o = riskbn(&["assess", "kettle_s1", "--compare-rapex"]);
    assert_eq!(o.status.code(), Some(2));
    let o = riskbn(&["assess", "kettle_s1", "--compare-rapex", "--severity", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn table_and_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = riskbn(&["assess", "kettle_s1", "--bins", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let written = std::fs::read_to_string(&out).unwrap();
    let direct = stdout(&riskbn(&["assess", "kettle_s1", "--bins", "20"]));
    assert_eq!(written, direct);
    let v: Value = serde_json::from_str(&written).unwrap();
    assert_eq!(v["provenance"]["continuous_bins"], 20);

    let table = stdout(&riskbn(&["assess", "kettle_s1", "--bins", "20", "--format", "table"]));
    assert!(table.contains("risk level (mode:"));
    assert!(table.contains("Recommendation:"));
}

#[test]
fn bins_come_from_the_environment_unless_flagged() {
    let run = |flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_riskbn"));
        cmd.args(["assess", "teddy_s2"]).env("RISKBN_BINS", "16");
        if let Some(b) = flag {
            cmd.args(["--bins", b]);
        }
        let v: Value = serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap();
        v["provenance"]["continuous_bins"].as_u64().unwrap()
    };
    assert_eq!(run(None), 16);
    assert_eq!(run(Some("24")), 24);
}

#[test]
fn rapex_subcommand() {
    let o = riskbn(&["rapex", "axe", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total_probability"], json!(1e-4));

    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "burn.json",
        r#"{"steps": [{"label": "scald", "probability": 0.07}], "severity": 3}"#,
    );
    let o = riskbn(&["rapex", &path, "--factor", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Serious risk"));
    assert!(stdout(&o).contains("6 variants"));
}

async fn service_report(config: &str, query: &str, evidence: Option<Value>) -> String {
    let app = router(AppState::new(ServiceConfig::default()));
    let call = |method: Method, uri: String, body: String| {
        let app = app.clone();
        async move {
            let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            (status, String::from_utf8(bytes.to_vec()).unwrap())
        }
    };
    let (status, body) = call(Method::POST, format!("/v1/sessions?{query}"), config.to_string()).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();
    if let Some(ev) = evidence {
        let (status, _) = call(Method::PUT, format!("/v1/sessions/{id}/evidence"), ev.to_string()).await;
        assert_eq!(status, StatusCode::OK);
    }
    let severity = if query.contains("severity") { "?severity=3" } else { "" };
    let (status, report) = call(Method::GET, format!("/v1/sessions/{id}/report{severity}"), String::new()).await;
    assert_eq!(status, StatusCode::OK);
    report
}

#[tokio::test]
async fn cli_and_service_reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(dir.path(), "kettle_s2.json", scenarios::KETTLE_S2);

    let cli = stdout(&riskbn(&["assess", &scenario, "--bins", "30", "--seed", "7"]));
    let svc = service_report(scenarios::KETTLE_S2, "bins=30&seed=7", None).await;
    assert_eq!(cli, svc);

    let cli = stdout(&riskbn(&["assess", "teddy_s2", "--compare-rapex", "--severity", "3", "--bins", "30"]));
    let svc = service_report(scenarios::TEDDY_S2, "bins=30&severity", None).await;
    assert_eq!(cli, svc);

    let ev = json!({ "testing_strategy": "poor", "major_injury_instances": null });
    let ev_path = write(dir.path(), "ev.json", &ev.to_string());
    let cli = stdout(&riskbn(&["assess", &scenario, "--bins", "30", "--evidence", &ev_path]));
    let svc = service_report(scenarios::KETTLE_S2, "bins=30", Some(ev)).await;
    assert_eq!(cli, svc);
}
