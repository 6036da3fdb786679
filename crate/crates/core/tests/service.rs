mod common;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pyrocarbon::service::router;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("not JSON: {bytes:?}")))
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, "GET", uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, "POST", uri, Some(body.to_string())).await
}

fn app() -> Router {
    router(common::fixtures())
}

fn stamped(v: &Value) {
    assert_eq!(v["engine_version"], json!(pyrocarbon::ENGINE_VERSION));
    assert!(v.get("input_digest").is_some());
}

#[tokio::test]
async fn health() {
    let (s, v) = get(&app(), "/v1/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    stamped(&v);
}

#[tokio::test]
async fn scenario_document_and_base_outputs() {
    let (s, v) = get(&app(), "/v1/scenario/G1").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["scenario_id"], "G1");
    assert_eq!(v["scenario"]["risk"]["p_wildfire"], json!(0.02));
    assert_eq!(v["findings"], json!([]));
    assert_eq!(v["base"]["s_adjusted_tco2e"], json!(9900.0));
    stamped(&v);
}

#[tokio::test]
async fn report_is_stable_across_requests() {
    let app = app();
    let a = app.clone().oneshot(Request::get("/v1/scenario/G1/report").body(Body::empty()).unwrap()).await.unwrap();
    let a = a.into_body().collect().await.unwrap().to_bytes();
    let (s, b) = get(&app, "/v1/scenario/G1/report").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_slice::<Value>(&a).unwrap(), b);
    let fresh = pyrocarbon::pipeline::run(&common::fixture("G1"), &Default::default()).unwrap();
    assert_eq!(&a[..], fresh.to_json().as_bytes());
    stamped(&b);
}

#[tokio::test]
async fn whatif_override_matches_hand_value() {
    let body = json!({
        "overrides": [{"path": "/risk/p_wildfire", "value": 0.05}],
        "outputs": ["s_adjusted_tco2e", "e_expected_tco2e"]
    });
    let (s, v) = post(&app(), "/v1/scenario/G1/whatif", body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["outputs"], json!({"s_adjusted_tco2e": 9750.0, "e_expected_tco2e": 250.0}));
    stamped(&v);
}

#[tokio::test]
async fn empty_whatif_equals_base_report() {
    let app = app();
    let (_, whatif) = post(&app, "/v1/scenario/G1/whatif", json!({})).await;
    let (_, report) = get(&app, "/v1/scenario/G1/report").await;
    assert_eq!(whatif["report"], report);
    assert_eq!(whatif["input_digest"], report["input_digest"]);
}

#[tokio::test]
async fn sweep_traces_linear_response() {
    let body = json!({"sweep": {"path": "/risk/p_wildfire", "values": [0.0, 0.1, 0.2]}});
    let (s, v) = post(&app(), "/v1/scenario/G1/whatif", body).await;
    assert_eq!(s, StatusCode::OK);
    let got: Vec<f64> = v["sweep"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["outputs"]["s_adjusted_tco2e"].as_f64().unwrap())
        .collect();
    assert_eq!(got, [10_000.0, 9500.0, 9000.0]);
}

#[tokio::test]
async fn out_of_range_probability_is_rejected() {
    let app = app();
    let (s, v) = post(&app, "/v1/scenario/G1/whatif", json!({"overrides": [{"path": "/risk/p_wildfire", "value": 1.5}]})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "validation");
    assert!(v["findings"].as_array().unwrap().iter().any(|f| f["path"] == "/risk/p_wildfire"));

    let (s, v) = post(&app, "/v1/assess", json!({"p": 1.5, "e": 5000, "s": 10000})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["findings"][0]["path"], "/p");
    assert_eq!(v["findings"][0]["message"], "p out of [0,1]");
    stamped(&v);
}

#[tokio::test]
async fn base_is_unchanged_after_whatif() {
    let app = app();
    let (_, before) = get(&app, "/v1/scenario/G1").await;
    post(&app, "/v1/scenario/G1/whatif", json!({"overrides": [{"path": "/risk/p_wildfire", "value": 0.3}]})).await;
    let (_, after) = get(&app, "/v1/scenario/G1").await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn assess_identity() {
    let (s, v) = post(&app(), "/v1/assess", json!({"p": 0.02, "e": 5000, "s": 10000})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["e_expected"], json!(100.0));
    assert_eq!(v["s_adjusted"], json!(9900.0));
    assert_eq!(v["negative"], json!(false));
    let (_, again) = post(&app(), "/v1/assess", json!({"s": 10000, "e": 5000, "p": 0.02})).await;
    assert_eq!(v["input_digest"], again["input_digest"]);
}

#[tokio::test]
async fn premium_quote_and_screen() {
    let body = json!({
        "insured_credits_tCO2e": 10000, "credit_price": 10, "p_wildfire": 0.02,
        "expected_loss_fraction": 0.5, "loading": 0.2, "p_threshold": 0.01
    });
    let (s, v) = post(&app(), "/v1/premium", body).await;
    assert_eq!(s, StatusCode::OK);
    assert!((v["premium"].as_f64().unwrap() - 1200.0).abs() < 1e-9);
    assert_eq!(v["risk_tier"], "low");
    assert_eq!(v["accepted"], json!(false));
}

#[tokio::test]
async fn buffer_simulation_is_seeded() {
    let body = json!({
        "initial_balance_tCO2e": 1000, "contribution_rate": 0.1, "annual_issuance_tCO2e": 1000,
        "fire_rate": 0.2, "loss_given_fire_tCO2e": {"kind": "uniform", "lo": 100, "hi": 900},
        "years": 20, "replicates": 300, "seed": 5
    });
    let (s, a) = post(&app(), "/v1/buffer/simulate", body.clone()).await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let (_, b) = post(&app(), "/v1/buffer/simulate", body).await;
    assert_eq!(a, b);
    assert_eq!(a["summary"]["replicates"], json!(300));
    assert!(a["summary"]["mean_terminal_balance_tco2e"].is_number());
}

#[tokio::test]
async fn unknown_routes_and_scenarios_are_404() {
    let app = app();
    for uri in ["/v1/nothing", "/v1/scenario/absent", "/v1/scenario/..%2FG1/report"] {
        let (s, v) = get(&app, uri).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        stamped(&v);
    }
}

#[tokio::test]
async fn malformed_bodies_are_400() {
    let app = app();
    let (s, v) = send(&app, "POST", "/v1/assess", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    stamped(&v);
    let (s, _) = post(&app, "/v1/assess", json!({"p": 0.1, "e": 1})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = post(&app, "/v1/scenario/G1/whatif", json!({"overides": []})).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn execution_failure_is_422() {
    let (dir, path) = common::edited_copy("G1", |d| d["stages"] = json!(["buffer"]));
    std::fs::rename(&path, dir.path().join("stagefail.json")).unwrap();
    let (s, v) = get(&router(dir.path()), "/v1/scenario/stagefail/report").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["error"], "stage_failed");
    assert_eq!(v["stage"], "buffer");
    stamped(&v);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_whatifs_do_not_interfere() {
    let app = app();
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let app = app.clone();
            let p = i as f64 / 100.0;
            tokio::spawn(async move {
                let body = json!({"overrides": [{"path": "/risk/p_wildfire", "value": p}], "outputs": ["s_adjusted_tco2e"]});
                let (_, v) = post(&app, "/v1/scenario/G1/whatif", body).await;
                (p, v["outputs"]["s_adjusted_tco2e"].as_f64().unwrap())
            })
        })
        .collect();
    for t in tasks {
        let (p, s) = t.await.unwrap();
        assert!((s - (10_000.0 - p * 5000.0)).abs() < 1e-9, "p={p} s={s}");
    }
}
