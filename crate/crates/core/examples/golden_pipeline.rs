//! Runs the bundled G1 scenario end to end and prints the headline numbers.

use pyrocarbon::pipeline::{run, RunOptions};
use pyrocarbon::scenario::{OutputName, Scenario};

pub fn run_example() -> anyhow::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/G1/scenario.json");
    let scenario = Scenario::open(path)?.map_err(|f| anyhow::anyhow!("invalid scenario: {f:?}"))?;
    let report = run(&scenario, &RunOptions::default())?;

    println!("{} ({})", report.scenario_id, report.engine_version);
    println!("input digest {}", report.input_digest);
    for name in [
        OutputName::Co2Kg,
        OutputName::EExpectedTco2e,
        OutputName::SAdjustedTco2e,
        OutputName::PremiumTotal,
    ] {
        println!("{name:>20} = {:?}", report.output(name));
    }
    if let Some(b) = report.buffer.complete() {
        println!("buffer: P(insolvent within {} y) = {}", b.summary.years, b.summary.insolvency_probability);
    }

    let again = run(&scenario, &RunOptions::default())?;
    println!("byte-identical rerun: {}", report.to_json() == again.to_json());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
