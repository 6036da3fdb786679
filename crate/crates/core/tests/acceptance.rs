//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pyrocarbon::carbon::{Co2eConversion, EmissionsEstimate};
use pyrocarbon::fire::{extract_perimeters, Connectivity};
use pyrocarbon::pipeline::{run, RunOptions};
use pyrocarbon::raster::{parse_grid, serialize_grid, ParseErrorClass};
use pyrocarbon::risk::{assess, simulate_buffer_replicates, BufferPool, BufferSimulation};
use pyrocarbon::scenario::OutputName;
use pyrocarbon::uncertainty::{evpi, propagate, Action, DistributionSpec, McSettings, ParamSet, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:?}, limit {limit:?}"))
}

fn stoichiometry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let conv = Co2eConversion::share_of_total(0.05).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let loss = 10f64.powf(rng.random_range(-6.0..12.0));
        let e = EmissionsEstimate::from_carbon_loss(loss, &conv);
        worst = worst.max(((e.co2_kg / e.carbon_loss_kgc) / (44.0 / 12.0) - 1.0).abs());
    }
    ensure(worst < 1e-12, format!("max relative error {worst:e}"))?;
    Ok(format!("1000 samples, max relative error {worst:e}"))
}

fn crediting_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let (p, e, s) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..1e7), rng.random_range(0.0..1e7));
        let a = assess(p, e, s).map_err(|err| err.to_string())?;
        ensure((a.e_expected_tco2e - p * e).abs() <= 1e-12 * (p * e).max(1.0), format!("E_expected at {p} {e}"))?;
        ensure(
            (a.s_adjusted_tco2e - (s - a.e_expected_tco2e)).abs() <= 1e-12 * s.max(1.0),
            format!("S_adjusted at {p} {e} {s}"),
        )?;
        ensure(a.s_adjusted_tco2e <= s, format!("S_adjusted > S at {p} {e} {s}"))?;
    }
    Ok("1000 triples".into())
}

fn segmentation_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut fires_seen = 0;
    for i in 0..200 {
        let cells = common::random_cells(&mut rng, 32);
        let mask = common::mask_of(&cells, 10.0);
        for (conn, diag) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let fires = extract_perimeters(&mask, conn);
            let got: BTreeSet<BTreeSet<(usize, usize)>> =
                fires.iter().map(|f| f.pixels.iter().copied().collect()).collect();
            ensure(got == common::flood_fill_components(&cells, diag), format!("mask {i} differs from oracle"))?;
            let total: f64 = fires.iter().map(|f| f.area_m2).sum();
            ensure(total == mask.burned_count() as f64 * 100.0, format!("mask {i}: area {total} not additive"))?;
            fires_seen += fires.len();
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("200 masks, {fires_seen} components, {elapsed:.2?}"))
}

fn parser_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let (text, ncols, nrows, values) = common::random_document(&mut rng);
        let g = parse_grid(&text).map_err(|e| format!("doc {i}: {e}"))?;
        let again = parse_grid(&serialize_grid(&g)).map_err(|e| format!("doc {i} reparse: {e}"))?;
        ensure((g.ncols(), g.nrows()) == (ncols, nrows), format!("doc {i}: shape"))?;
        ensure(g.raw_values() == values.as_slice(), format!("doc {i}: values differ from source"))?;
        ensure(again == g, format!("doc {i}: round trip differs"))?;
    }
    let header = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n";
    let corpora = [
        (
            ParseErrorClass::Header,
            vec![
                "ncols 2\nnrowz 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2\n3 4\n".to_string(),
                "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize abc\n1 2\n3 4\n".to_string(),
                "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\n1 2\n3 4\n".to_string(),
            ],
        ),
        (
            ParseErrorClass::Shape,
            vec![format!("{header}1 2\n3\n"), format!("{header}1 2 3\n4 5\n"), format!("{header}1 2\n")],
        ),
        (
            ParseErrorClass::Cell,
            vec![format!("{header}1 x\n3 4\n"), format!("{header}1 2\n3 nan\n"), format!("{header}1 2\n3 4e\n")],
        ),
    ];
    for (class, docs) in &corpora {
        for d in docs {
            match parse_grid(d) {
                Ok(_) => return Err(format!("accepted malformed {d:?}")),
                Err(e) => ensure(e.class() == *class, format!("{d:?}: got {:?}, want {class:?}", e.class()))?,
            }
        }
    }
    Ok("100 round trips; header, shape and cell corpora classified".into())
}

fn monte_carlo() -> Check {
    let params: ParamSet = [
        ("P".to_string(), DistributionSpec::point(0.1)),
        ("E".to_string(), DistributionSpec::uniform(0.0, 1000.0)),
    ]
    .into_iter()
    .collect();
    let settings = McSettings::new(10_000, 20_240_601);
    let f = |s: &Sample| Ok::<f64, String>(s["P"] * s["E"]);
    let start = Instant::now();
    let a = propagate(&params, &settings, f).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let b = propagate(&params, &settings, f).map_err(|e| e.to_string())?;
    let tol = 3.0 * a.sd / (a.n as f64).sqrt();
    ensure((a.mean - 50.0).abs() <= tol, format!("mean {} outside 50 ± {tol}", a.mean))?;
    ensure(a == b, "repeat run differs")?;
    within(elapsed, Duration::from_secs(2))?;
    Ok(format!("mean {:.4} (tolerance {tol:.4}), repeat identical, {elapsed:.2?}", a.mean))
}

fn evpi_checks() -> Check {
    let settings = McSettings::new(20_000, 11);
    let theta = |d: DistributionSpec| -> ParamSet { [("theta".to_string(), d)].into_iter().collect() };
    let u = |a: Action, s: &Sample| {
        Ok::<f64, String>(match a {
            Action::Act => s["theta"],
            Action::Decline => 0.0,
        })
    };
    for x in [-0.5, 0.0, 0.7] {
        let v = evpi(&theta(DistributionSpec::point(x)), &settings, u).map_err(|e| e.to_string())?;
        ensure(v.evpi == 0.0, format!("point {x}: EVPI {}", v.evpi))?;
    }
    let v = evpi(&theta(DistributionSpec::uniform(-1.0, 1.0)), &settings, u).map_err(|e| e.to_string())?;
    ensure(
        (v.evpi - 0.25).abs() <= 3.0 * v.standard_error,
        format!("EVPI {} vs 0.25 (se {})", v.evpi, v.standard_error),
    )?;
    Ok(format!("points give 0; uniform(-1,1) gives {:.4} (se {:.4})", v.evpi, v.standard_error))
}

fn buffer_depletion() -> Check {
    let sim = |fire_rate| BufferSimulation {
        pool: BufferPool { balance_tco2e: 2000.0, contribution_rate: 0.1 },
        annual_issuance_tco2e: 5000.0,
        fire_rate,
        loss_given_fire: DistributionSpec::triangular(500.0, 2000.0, 6000.0),
        years: 30,
    };
    let mut means = Vec::new();
    for rate in [0.0, 0.1, 0.3] {
        let s = simulate_buffer_replicates(&sim(rate), 1000, 17).map_err(|e| e.to_string())?;
        means.push(s.mean_terminal_balance_tco2e);
    }
    ensure(means.windows(2).all(|w| w[1] <= w[0]), format!("means {means:?}"))?;
    Ok(format!("mean terminal balances {means:.1?}"))
}

fn golden_g1() -> Check {
    let scenario = common::fixture("G1");
    let start = Instant::now();
    let report = run(&scenario, &RunOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let again = run(&common::fixture("G1"), &RunOptions::default()).map_err(|e| e.to_string())?;
    let close = |name: OutputName, want: f64| {
        let got = report.output(name).ok_or(format!("{name} missing"))?;
        ensure((got - want).abs() <= 1e-9 * want.abs(), format!("{name} = {got}, want {want}"))
    };
    close(OutputName::Co2Kg, 2750.0)?;
    close(OutputName::EExpectedTco2e, 100.0)?;
    close(OutputName::SAdjustedTco2e, 9900.0)?;
    close(OutputName::PremiumTotal, 1200.0)?;
    ensure(report.to_json() == again.to_json(), "report bytes differ between runs")?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("co2 2750, E_expected 100, S_adjusted 9900, premium 1200, byte-stable, {elapsed:.2?}"))
}

fn cli_service_parity() -> Check {
    let out = Command::new(env!("CARGO_BIN_EXE_pyrocarbon"))
        .env("RUST_LOG", "off")
        .arg("run")
        .arg(common::scenario_path("G1"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("run exited with {}", out.status))?;
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let risk = &report["risk"];
    let body = json!({"p": risk["p_wildfire"], "e": risk["e_wildfire_tco2e"], "s": risk["s_estimated_tco2e"]});
    let app = pyrocarbon::service::router(common::fixtures());
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (status, svc) = rt.block_on(async {
        let req = Request::post("/v1/assess")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let resp = app.oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice::<Value>(&bytes).unwrap())
    });
    ensure(status == StatusCode::OK, format!("assess returned {status}"))?;
    for (cli, http) in [("e_expected_tco2e", "e_expected"), ("s_adjusted_tco2e", "s_adjusted")] {
        ensure(risk[cli] == svc[http], format!("{cli}: run {} vs service {}", risk[cli], svc[http]))?;
    }
    ensure(report["engine_version"] == svc["engine_version"], "engine versions differ")?;
    Ok(format!("E_expected {} and S_adjusted {} agree; no UI build involved", svc["e_expected"], svc["s_adjusted"]))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("stoichiometry", stoichiometry),
        ("crediting identities", crediting_identities),
        ("segmentation oracle", segmentation_oracle),
        ("parser round trip", parser_round_trip),
        ("monte carlo convergence", monte_carlo),
        ("evpi checks", evpi_checks),
        ("buffer depletion", buffer_depletion),
        ("golden scenario G1", golden_g1),
        ("cli/service parity", cli_service_parity),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
