//! Drives the HTTP service in process: a base report, then a what-if that
//! raises the fire probability, then a sweep over it.

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> anyhow::Result<(StatusCode, Value)> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes)?))
}

pub fn run_example() -> anyhow::Result<()> {
    let app = pyrocarbon::service::router(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let (_, report) = call(&app, "GET", "/v1/scenario/G1/report", Value::Null).await?;
        println!("base S_adjusted {}", report["risk"]["s_adjusted_tco2e"]);

        let body = json!({
            "overrides": [{"path": "/risk/p_wildfire", "value": 0.05}],
            "outputs": ["s_adjusted_tco2e", "e_expected_tco2e", "premium_total"],
            "sweep": {"path": "/risk/p_wildfire", "values": [0.0, 0.05, 0.1, 0.2]}
        });
        let (status, r) = call(&app, "POST", "/v1/scenario/G1/whatif", body).await?;
        println!("what-if {status}: {}", r["outputs"]);
        for point in r["sweep"].as_array().into_iter().flatten() {
            println!("  p={} -> {}", point["value"], point["outputs"]);
        }

        let (status, r) = call(&app, "POST", "/v1/assess", json!({"p": 1.5, "e": 5000, "s": 10000})).await?;
        println!("bad assess {status}: {}", r["findings"]);
        Ok(())
    })
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
