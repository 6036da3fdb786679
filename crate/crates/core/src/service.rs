//! HTTP what-if service over a directory of scenarios.
//!
//! Scenario `{id}` is read from `{root}/{id}.json` or `{root}/{id}/scenario.json`
//! on every request, so each evaluation works on its own immutable snapshot
//! and overrides never touch the base document. Every response body is a JSON
//! object carrying `engine_version` and `input_digest`; for the stateless
//! endpoints the digest covers the request body.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::insurance::{price_premium, Policy, RiskTier};
use crate::pipeline::{self, evaluate_sample, input_digest, PipelineError, RunOptions};
use crate::risk::{assess, simulate_buffer_replicates, BufferPool, BufferSimulation};
use crate::scenario::{validate, Finding, OutputName, Override, Scenario};
use crate::uncertainty::{DistributionSpec, Sample, ValueOrDistribution};
use crate::ENGINE_VERSION;

#[derive(Debug)]
struct AppState {
    root: PathBuf,
    reports: Mutex<HashMap<String, Arc<String>>>,
}

/// JSON response whose body always carries the engine version and a digest.
struct Reply {
    status: StatusCode,
    digest: Option<String>,
    body: Map<String, Value>,
}

impl Reply {
    fn ok(digest: impl Into<String>, body: Value) -> Self {
        Reply::with_status(StatusCode::OK, Some(digest.into()), body)
    }

    fn with_status(status: StatusCode, digest: Option<String>, body: Value) -> Self {
        let body = match body {
            Value::Object(m) => m,
            other => Map::from_iter([("result".to_string(), other)]),
        };
        Reply { status, digest, body }
    }

    fn findings(digest: Option<String>, findings: Vec<Finding>) -> Self {
        Reply::with_status(
            StatusCode::BAD_REQUEST,
            digest,
            json!({ "error": "validation", "findings": findings }),
        )
    }

    fn not_found(what: String) -> Self {
        Reply::with_status(StatusCode::NOT_FOUND, None, json!({ "error": "not_found", "message": what }))
    }
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        let mut body = self.body;
        body.insert("engine_version".into(), json!(ENGINE_VERSION));
        body.insert("input_digest".into(), json!(self.digest));
        (self.status, axum::Json(Value::Object(body))).into_response()
    }
}

fn pipeline_failure(digest: Option<String>, err: PipelineError) -> Reply {
    match err {
        PipelineError::Validation(findings) => Reply::findings(digest, findings),
        PipelineError::Stage(e) => Reply::with_status(
            StatusCode::UNPROCESSABLE_ENTITY,
            digest,
            json!({ "error": "stage_failed", "stage": e.stage, "cause": e.cause }),
        ),
    }
}

fn request_digest(body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(b"pyrocarbon-request-v1\n");
    h.update(serde_json::to_vec(body).expect("JSON values serialize"));
    hex::encode(h.finalize())
}

/// Parses a request body, turning any failure into a 400 with one finding.
fn parse_body<T: DeserializeOwned>(bytes: &Bytes) -> Result<(T, Value), Reply> {
    let value: Value = if bytes.is_empty() {
        json!({})
    } else {
        serde_json::from_slice(bytes)
            .map_err(|e| Reply::findings(None, vec![Finding::error("", format!("body is not valid JSON: {e}"))]))?
    };
    let digest = request_digest(&value);
    let parsed = serde_json::from_value(value.clone()).map_err(|e| {
        Reply::findings(
            Some(digest),
            vec![Finding::error("", format!("body does not match the request schema: {e}"))],
        )
    })?;
    Ok((parsed, value))
}

fn scenario_path(root: &Path, id: &str) -> Option<PathBuf> {
    let safe = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if !safe {
        return None;
    }
    [root.join(format!("{id}.json")), root.join(id).join("scenario.json")]
        .into_iter()
        .find(|p| p.is_file())
}

fn load(root: &Path, id: &str) -> Result<Scenario, Reply> {
    let path = scenario_path(root, id).ok_or_else(|| Reply::not_found(format!("no scenario '{id}'")))?;
    match Scenario::open(&path) {
        Ok(Ok(s)) => Ok(s),
        Ok(Err(findings)) => Err(Reply::findings(None, findings)),
        Err(e) => Err(Reply::findings(None, vec![Finding::error("", e.to_string())])),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Reply> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        Reply::with_status(
            StatusCode::INTERNAL_SERVER_ERROR,
            None,
            json!({ "error": "internal", "message": e.to_string() }),
        )
    })
}

fn flatten(r: Result<Reply, Reply>) -> Reply {
    r.unwrap_or_else(|e| e)
}

async fn health() -> Reply {
    Reply::ok(request_digest(&Value::Null), json!({ "status": "ok" }))
}

async fn get_scenario(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Reply {
    flatten(
        blocking(move || {
            let scenario = load(&st.root, &id)?;
            let findings = validate(&scenario);
            let opts = RunOptions::default();
            let digest = input_digest(&scenario, &opts.effective_stages(&scenario), opts.effective_seed(&scenario));
            let base = pipeline::evaluate(&scenario, scenario.config(), &opts.effective_stages(&scenario))
                .map(|ev| ev.outputs())
                .ok();
            Ok(Reply::ok(
                digest,
                json!({
                    "scenario_id": scenario.id(),
                    "scenario": scenario.document(),
                    "findings": findings,
                    "base": base,
                }),
            ))
        })
        .await
        .and_then(|r| r),
    )
}

async fn get_report(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    let result = blocking(move || -> Result<Response, Reply> {
        let scenario = load(&st.root, &id)?;
        let opts = RunOptions::default();
        let digest = input_digest(&scenario, &opts.effective_stages(&scenario), opts.effective_seed(&scenario));
        if let Some(cached) = st.reports.lock().expect("cache lock").get(&digest).cloned() {
            return Ok(json_text(cached));
        }
        let report = pipeline::run(&scenario, &opts).map_err(|e| pipeline_failure(Some(digest.clone()), e))?;
        let text = Arc::new(report.to_json());
        st.reports.lock().expect("cache lock").insert(digest, text.clone());
        Ok(json_text(text))
    })
    .await;
    match result {
        Ok(Ok(resp)) => resp,
        Ok(Err(reply)) | Err(reply) => reply.into_response(),
    }
}

fn json_text(text: Arc<String>) -> Response {
    (
        StatusCode::OK,
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        (*text).clone(),
    )
        .into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sweep {
    path: String,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIf {
    #[serde(default)]
    overrides: Vec<Override>,
    /// Outputs to return; all available ones when empty.
    #[serde(default)]
    outputs: Vec<OutputName>,
    #[serde(default)]
    sweep: Option<Sweep>,
    #[serde(default)]
    seed: Option<u64>,
}

async fn whatif(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> Reply {
    flatten(
        blocking(move || {
            let (req, _) = parse_body::<WhatIf>(&body)?;
            let base = load(&st.root, &id)?;
            let scenario = base.with_overrides(&req.overrides).map_err(|f| Reply::findings(None, f))?;
            let opts = RunOptions {
                seed: req.seed,
                stages: None,
            };
            let digest = input_digest(&scenario, &opts.effective_stages(&scenario), opts.effective_seed(&scenario));
            let report = pipeline::run(&scenario, &opts).map_err(|e| pipeline_failure(Some(digest.clone()), e))?;
            let outputs: BTreeMap<String, Option<f64>> = if req.outputs.is_empty() {
                report.outputs().into_iter().map(|(k, v)| (k, Some(v))).collect()
            } else {
                req.outputs.iter().map(|o| (o.name().to_string(), report.output(*o))).collect()
            };
            let sweep = match &req.sweep {
                None => None,
                Some(sw) => Some(run_sweep(&scenario, sw, &req.outputs).map_err(|r| Reply { digest: Some(digest.clone()), ..r })?),
            };
            Ok(Reply::ok(
                digest,
                json!({
                    "scenario_id": scenario.id(),
                    "overrides": req.overrides,
                    "outputs": outputs,
                    "sweep": sweep,
                    "report": report,
                }),
            ))
        })
        .await
        .and_then(|r| r),
    )
}

fn run_sweep(scenario: &Scenario, sw: &Sweep, requested: &[OutputName]) -> Result<Vec<Value>, Reply> {
    let outputs: Vec<OutputName> = if requested.is_empty() {
        vec![OutputName::SAdjustedTco2e]
    } else {
        requested.to_vec()
    };
    sw.values
        .iter()
        .map(|&v| {
            let sample = Sample::from([(sw.path.clone(), v)]);
            let probe = scenario
                .with_overrides(&[Override {
                    path: sw.path.clone(),
                    value: json!(v),
                }])
                .map_err(|f| Reply::findings(None, f))?;
            let findings: Vec<Finding> = validate(&probe).into_iter().filter(Finding::is_error).collect();
            if !findings.is_empty() {
                return Err(Reply::findings(None, findings));
            }
            let values = evaluate_sample(scenario, &sample, &outputs).map_err(|cause| {
                Reply::with_status(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    None,
                    json!({ "error": "stage_failed", "stage": "sweep", "cause": cause }),
                )
            })?;
            let named: BTreeMap<&str, f64> = outputs.iter().map(|o| o.name()).zip(values).collect();
            Ok(json!({ "value": v, "outputs": named }))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssessRequest {
    p: f64,
    e: f64,
    s: f64,
}

fn range_finding(name: &str, v: f64, lo: f64, hi: Option<f64>) -> Option<Finding> {
    let ok = v.is_finite() && v >= lo && hi.is_none_or(|h| v <= h);
    (!ok).then(|| {
        let range = match hi {
            Some(h) => format!("[{lo},{h}]"),
            None => format!("[{lo},inf)"),
        };
        Finding::error(format!("/{name}"), format!("{name} out of {range}"))
    })
}

async fn post_assess(body: Bytes) -> Reply {
    flatten((|| {
        let (req, value) = parse_body::<AssessRequest>(&body)?;
        let digest = request_digest(&value);
        let findings: Vec<Finding> = [
            range_finding("p", req.p, 0.0, Some(1.0)),
            range_finding("e", req.e, 0.0, None),
            range_finding("s", req.s, 0.0, None),
        ]
        .into_iter()
        .flatten()
        .collect();
        if !findings.is_empty() {
            return Err(Reply::findings(Some(digest), findings));
        }
        let a = assess(req.p, req.e, req.s)
            .map_err(|e| Reply::findings(Some(digest.clone()), vec![Finding::error("", e.to_string())]))?;
        Ok(Reply::ok(
            digest,
            json!({
                "p_wildfire": a.p_wildfire,
                "e_wildfire_tCO2e": a.e_wildfire_tco2e,
                "s_estimated_tCO2e": a.s_estimated_tco2e,
                "e_expected": a.e_expected_tco2e,
                "s_adjusted": a.s_adjusted_tco2e,
                "negative": a.is_negative(),
            }),
        ))
    })())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PremiumRequest {
    #[serde(rename = "insured_credits_tCO2e", alias = "insured_credits_tco2e")]
    insured_credits_tco2e: f64,
    credit_price: f64,
    p_wildfire: f64,
    expected_loss_fraction: f64,
    #[serde(default)]
    loading: f64,
    #[serde(default)]
    risk_tier: Option<RiskTier>,
    #[serde(default)]
    p_threshold: Option<f64>,
}

async fn post_premium(body: Bytes) -> Reply {
    flatten((|| {
        let (req, value) = parse_body::<PremiumRequest>(&body)?;
        let digest = request_digest(&value);
        let findings: Vec<Finding> = [
            range_finding("insured_credits_tCO2e", req.insured_credits_tco2e, 0.0, None),
            range_finding("credit_price", req.credit_price, 0.0, None),
            range_finding("p_wildfire", req.p_wildfire, 0.0, Some(1.0)),
            range_finding("expected_loss_fraction", req.expected_loss_fraction, 0.0, Some(1.0)),
            range_finding("loading", req.loading, 0.0, None),
            req.p_threshold.and_then(|t| range_finding("p_threshold", t, 0.0, Some(1.0))),
        ]
        .into_iter()
        .flatten()
        .collect();
        if !findings.is_empty() {
            return Err(Reply::findings(Some(digest), findings));
        }
        let policy = Policy {
            insured_credits_tco2e: req.insured_credits_tco2e,
            credit_price: req.credit_price,
            p_wildfire: req.p_wildfire,
            expected_loss_fraction: req.expected_loss_fraction,
            loading: req.loading,
            risk_tier: req.risk_tier.unwrap_or_else(|| RiskTier::from_probability(req.p_wildfire)),
        };
        let quote = price_premium(&policy)
            .map_err(|e| Reply::findings(Some(digest.clone()), vec![Finding::error("", e.to_string())]))?;
        let threshold = req.p_threshold.unwrap_or(1.0);
        Ok(Reply::ok(
            digest,
            json!({
                "expected_loss": quote.expected_loss,
                "premium": quote.premium,
                "risk_tier": policy.risk_tier,
                "p_threshold": threshold,
                "accepted": policy.p_wildfire <= threshold,
            }),
        ))
    })())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BufferRequest {
    #[serde(rename = "initial_balance_tCO2e", alias = "initial_balance_tco2e")]
    initial_balance_tco2e: f64,
    contribution_rate: f64,
    #[serde(rename = "annual_issuance_tCO2e", alias = "annual_issuance_tco2e")]
    annual_issuance_tco2e: f64,
    fire_rate: f64,
    #[serde(rename = "loss_given_fire_tCO2e", alias = "loss_given_fire_tco2e")]
    loss_given_fire_tco2e: ValueOrDistribution,
    years: u32,
    #[serde(default = "default_buffer_replicates")]
    replicates: usize,
    #[serde(default)]
    seed: u64,
}

fn default_buffer_replicates() -> usize {
    1000
}

async fn post_buffer(body: Bytes) -> Reply {
    let result = blocking(move || {
        let (req, value) = parse_body::<BufferRequest>(&body)?;
        let digest = request_digest(&value);
        let sim = BufferSimulation {
            pool: BufferPool {
                balance_tco2e: req.initial_balance_tco2e,
                contribution_rate: req.contribution_rate,
            },
            annual_issuance_tco2e: req.annual_issuance_tco2e,
            fire_rate: req.fire_rate,
            loss_given_fire: DistributionSpec::from(req.loss_given_fire_tco2e),
            years: req.years,
        };
        let summary = simulate_buffer_replicates(&sim, req.replicates, req.seed)
            .map_err(|e| Reply::findings(Some(digest.clone()), vec![Finding::error("", e.to_string())]))?;
        Ok(Reply::ok(digest, json!({ "summary": summary })))
    })
    .await;
    flatten(result.and_then(|r| r))
}

/// Routes for the service rooted at a scenario directory.
pub fn router(root: impl Into<PathBuf>) -> Router {
    let state = Arc::new(AppState {
        root: root.into(),
        reports: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/scenario/{id}", get(get_scenario))
        .route("/v1/scenario/{id}/report", get(get_report))
        .route("/v1/scenario/{id}/whatif", post(whatif))
        .route("/v1/assess", post(post_assess))
        .route("/v1/premium", post(post_premium))
        .route("/v1/buffer/simulate", post(post_buffer))
        .fallback(|| async { Reply::not_found("no such endpoint".into()) })
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, root: impl Into<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(root)).await
}
