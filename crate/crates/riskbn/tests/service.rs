use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use riskbn::service::{router, AppState, ServiceConfig};
use riskbn_core::scenarios;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(config: ServiceConfig) -> (AppState, Router) {
    let state = AppState::new(config);
    (state.clone(), router(state))
}

fn app() -> Router {
    app_with(ServiceConfig { bins: 30, ..Default::default() }).1
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body.map(|b| b.to_string())).await;
    let v = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap() };
    (status, v)
}

async fn create(app: &Router, scenario: &str) -> String {
    let (status, body) = call(app, Method::POST, "/v1/sessions", Some(scenario.to_string())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["validation"]["valid"], true);
    v["session_id"].as_str().unwrap().to_string()
}

fn posterior<'a>(v: &'a Value, node: &str) -> &'a Value {
    v["posteriors"].as_array().unwrap().iter().find(|p| p["node"] == node).unwrap()
}

#[tokio::test]
async fn observed_injury_drives_backward_inference() {
    let app = app();
    let id = create(&app, scenarios::KETTLE_S1).await;
    let (_, before) = call_json(&app, Method::GET, &format!("/v1/sessions/{id}/report"), None).await;
    let (status, put) = call_json(
        &app,
        Method::PUT,
        &format!("/v1/sessions/{id}/evidence"),
        Some(json!({ "major_injury_instances": 1 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let affected: Vec<&str> = put["affected_nodes"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(affected.contains(&"p_major_injury") && affected.contains(&"p_hazard_per_demand"));
    let (_, after) = call_json(&app, Method::GET, &format!("/v1/sessions/{id}/report"), None).await;
    let (b, a) = (
        before["p_major_injury"]["mean"].as_f64().unwrap(),
        after["p_major_injury"]["mean"].as_f64().unwrap(),
    );
    assert!(a < b / 10.0, "{b} -> {a}");
    assert!(a > 4e-6 && a < 4e-4, "{a}");
}

#[tokio::test]
async fn cleared_evidence_gives_priors() {
    let app = app();
    let id = create(&app, scenarios::TEDDY_S2).await;
    let (status, cleared) = call_json(&app, Method::DELETE, &format!("/v1/sessions/{id}/evidence"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cleared["evidence"], json!({}));
    let (status, v) = call_json(
        &app,
        Method::GET,
        &format!("/v1/sessions/{id}/posteriors?nodes=testing_strategy,control_present,utility"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let strategy = posterior(&v, "testing_strategy")["probabilities"].as_array().unwrap().clone();
    assert!(strategy.iter().all(|p| (p.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-6));
    assert_eq!(posterior(&v, "control_present")["probabilities"], json!([0.2, 0.8]));
    assert_eq!(posterior(&v, "utility")["probabilities"], json!([0.2, 0.2, 0.2, 0.2, 0.2]));
}

#[tokio::test]
async fn posteriors_carry_moments_for_interval_nodes() {
    let app = app();
    let id = create(&app, scenarios::KETTLE_S1).await;
    let (status, v) =
        call_json(&app, Method::GET, &format!("/v1/sessions/{id}/posteriors?nodes=hazard_occurrence"), None).await;
    assert_eq!(status, StatusCode::OK);
    let m = &posterior(&v, "hazard_occurrence")["moments"];
    assert!(m["mean"].as_f64().unwrap() > 0.05 && m["mean"].as_f64().unwrap() < 0.2);
    let (_, all) = call_json(&app, Method::GET, &format!("/v1/sessions/{id}/posteriors"), None).await;
    assert_eq!(all["posteriors"].as_array().unwrap().len(), 30);
}

#[tokio::test]
async fn bad_evidence_is_rejected_with_the_node_name() {
    let app = app();
    let id = create(&app, scenarios::KETTLE_S1).await;
    let uri = format!("/v1/sessions/{id}/evidence");
    let (status, v) = call_json(&app, Method::PUT, &uri, Some(json!({ "flux_capacitor": "on" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["node"], "flux_capacitor");
    assert!(v["error"].as_str().unwrap().contains("flux_capacitor"));

    let (status, v) = call_json(&app, Method::PUT, &uri, Some(json!({ "utility": "enormous" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["node"], "utility");

    let (status, _) = call_json(&app, Method::PUT, &uri, Some(json!(["not", "an", "object"]))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, v) =
        call_json(&app, Method::GET, &format!("/v1/sessions/{id}/posteriors?nodes=nope"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["node"], "nope");
}

#[tokio::test]
async fn impossible_evidence_conflicts_and_leaves_session_unchanged() {
    let app = app();
    let id = create(&app, scenarios::KETTLE_S1).await;
    let uri = format!("/v1/sessions/{id}/evidence");
    let (_, before) = call_json(&app, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    // intervention is recommended only when tolerability is low
    let (status, v) = call_json(
        &app,
        Method::PUT,
        &uri,
        Some(json!({ "risk_tolerability": "very_high", "government_intervention": "true" })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT, "{v}");
    let (_, after) = call_json(&app, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(before["evidence"], after["evidence"]);
}

#[tokio::test]
async fn null_removes_evidence_and_reports_affected_nodes() {
    let app = app();
    let id = create(&app, scenarios::KETTLE_S1).await;
    let uri = format!("/v1/sessions/{id}/evidence");
    let (status, v) = call_json(&app, Method::PUT, &uri, Some(json!({ "media_stories": "true" }))).await;
    assert_eq!(status, StatusCode::OK);
    let affected = v["affected_nodes"].as_array().unwrap();
    assert!(affected.contains(&json!("perception_change")));
    assert!(!affected.contains(&json!("p_major_injury")));
    assert_eq!(v["evidence"]["media_stories"], "true");

    let (_, v) = call_json(&app, Method::PUT, &uri, Some(json!({ "media_stories": null }))).await;
    assert!(v["evidence"].get("media_stories").is_none());
    assert_eq!(v["evidence"]["utility"], "medium");
}

#[tokio::test]
async fn unknown_and_deleted_sessions_are_not_found() {
    let app = app();
    for (method, uri) in [
        (Method::GET, "/v1/sessions/nope/report"),
        (Method::GET, "/v1/sessions/nope/posteriors"),
        (Method::PUT, "/v1/sessions/nope/evidence"),
        (Method::DELETE, "/v1/sessions/nope"),
    ] {
        let (status, _) = call_json(&app, method, uri, Some(json!({}))).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    let id = create(&app, scenarios::TEDDY_S1).await;
    let (status, body) = call(&app, Method::DELETE, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert!(body.is_empty());
    let (status, _) = call(&app, Method::GET, &format!("/v1/sessions/{id}/report"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_config_returns_validation_report() {
    let app = app();
    let mut v: Value = serde_json::from_str(scenarios::KETTLE_S1).unwrap();
    v["hazard_injury"]["p_uncontrolled_major"] = json!(2.0);
    v["utility"] = json!("enormous");
    let (status, body) = call_json(&app, Method::POST, "/v1/sessions", Some(v)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["validation"]["valid"], false);
    assert_eq!(body["validation"]["problems"].as_array().unwrap().len(), 2);
    let (status, _) = call(&app, Method::POST, "/v1/sessions", Some("{".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn rapex_endpoint_classifies_scenarios() {
    let app = app();
    let axe = json!({
        "description": "axe",
        "steps": [
            { "label": "breaks", "probability": "1/100" },
            { "label": "flies", "probability": "1/10" },
            { "label": "injures", "probability": 0.1 }
        ],
        "severity": 3
    });
    let (status, v) = call_json(&app, Method::POST, "/v1/rapex/assess", Some(axe.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["total_probability"], json!(1e-4));
    assert_eq!(v["risk_class"], "High");
    assert!(v.get("sensitivity").is_none());

    let mut with = axe.clone();
    with["sensitivity"] = json!({ "factor": 10.0, "severity_shift": 1 });
    let (_, v) = call_json(&app, Method::POST, "/v1/rapex/assess", Some(with)).await;
    assert_eq!(v["sensitivity"]["variants"].as_array().unwrap().len(), 24);

    let mut bad = axe;
    bad["severity"] = json!(9);
    let (status, _) = call_json(&app, Method::POST, "/v1/rapex/assess", Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let (state, app) = app_with(ServiceConfig { bins: 20, session_ttl: Duration::from_millis(50) });
    let a = create(&app, scenarios::TEDDY_S1).await;
    let _b = create(&app, scenarios::TEDDY_S1).await;
    assert_eq!(state.session_count(), 2);
    tokio::time::sleep(Duration::from_millis(120)).await;
    let (status, _) = call(&app, Method::GET, &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(state.sweep(), 1);
    assert_eq!(state.session_count(), 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_stay_isolated() {
    let app = app();
    let a = create(&app, scenarios::KETTLE_S1).await;
    let b = create(&app, scenarios::KETTLE_S1).await;
    let query = "posteriors?nodes=p_hazard_operational,risk_level";
    let (_, baseline) = call_json(&app, Method::GET, &format!("/v1/sessions/{b}/{query}"), None).await;

    let mut tasks = Vec::new();
    for round in 0..6 {
        let (app_a, a) = (app.clone(), a.clone());
        let strategy = if round % 2 == 0 { "poor" } else { "beyond_intended_scope" };
        tasks.push(tokio::spawn(async move {
            let (status, _) = call_json(
                &app_a,
                Method::PUT,
                &format!("/v1/sessions/{a}/evidence"),
                Some(json!({ "testing_strategy": strategy })),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
            Value::Null
        }));
        let (app, b) = (app.clone(), b.clone());
        tasks.push(tokio::spawn(async move {
            call_json(&app, Method::GET, &format!("/v1/sessions/{b}/{query}"), None).await.1
        }));
    }
    for t in tasks {
        let v = t.await.unwrap();
        if !v.is_null() {
            assert_eq!(v, baseline, "session b saw session a's evidence");
        }
    }
    let (_, a_now) = call_json(&app, Method::GET, &format!("/v1/sessions/{a}"), None).await;
    assert_ne!(a_now["evidence"]["testing_strategy"], "typical_of_normal_use");
    let (_, b_now) = call_json(&app, Method::GET, &format!("/v1/sessions/{b}"), None).await;
    assert_eq!(b_now["evidence"]["testing_strategy"], "typical_of_normal_use");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_updates_to_one_session_are_not_lost() {
    let app = app();
    let id = create(&app, scenarios::TEDDY_S1).await;
    let nodes = ["media_stories", "warnings", "government_intervention_announced", "country_safety_record"];
    let values = [json!("true"), json!("false"), json!("true"), json!("average")];
    let mut tasks = Vec::new();
    for (node, value) in nodes.iter().zip(values.clone()) {
        let (app, id) = (app.clone(), id.clone());
        let body = json!({ *node: value });
        tasks.push(tokio::spawn(async move {
            call_json(&app, Method::PUT, &format!("/v1/sessions/{id}/evidence"), Some(body)).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, v) = call_json(&app, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    for (node, value) in nodes.iter().zip(values) {
        assert_eq!(v["evidence"][*node], value);
    }
}

#[tokio::test]
async fn health_reports_engine_version() {
    let (status, v) = call_json(&app(), Method::GET, "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["engine_version"], riskbn_core::ENGINE_VERSION);
}
