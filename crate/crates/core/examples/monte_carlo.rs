//! Monte Carlo propagation of parameter uncertainty through the crediting
//! identity, with normal and percentile intervals and a tornado table.

use pyrocarbon::risk::assess;
use pyrocarbon::uncertainty::{
    propagate, sensitivity, CiMethod, DistributionSpec, McSettings, ParamSet, Sample, Swing,
};

fn s_adjusted(s: &Sample) -> Result<f64, String> {
    assess(s["p"], s["e"], s["s"]).map(|a| a.s_adjusted_tco2e).map_err(|e| e.to_string())
}

pub fn run_example() -> anyhow::Result<()> {
    let params = ParamSet::from([
        ("p".to_string(), DistributionSpec::triangular(0.01, 0.02, 0.05)),
        ("e".to_string(), DistributionSpec::normal(5000.0, 800.0)),
        ("s".to_string(), DistributionSpec::uniform(9000.0, 11_000.0)),
    ]);

    let mut settings = McSettings::new(10_000, 2024);
    for method in [CiMethod::Normal, CiMethod::Percentile] {
        settings.ci_method = method;
        let m = propagate(&params, &settings, s_adjusted)?;
        println!(
            "{method:?}: mean {:.1}, sd {:.1}, {}% CI [{:.1}, {:.1}]",
            m.mean,
            m.sd,
            m.ci_level * 100.0,
            m.ci_low,
            m.ci_high
        );
    }

    let base = Sample::from([("p".into(), 0.02), ("e".into(), 5000.0), ("s".into(), 10_000.0)]);
    let swings = [
        Swing { parameter: "p".into(), low: 0.01, high: 0.05 },
        Swing { parameter: "e".into(), low: 3500.0, high: 6500.0 },
        Swing { parameter: "s".into(), low: 9000.0, high: 11_000.0 },
    ];
    for row in sensitivity(&base, &swings, s_adjusted)? {
        println!("{:>2}: {:.0} .. {:.0} (range {:.0})", row.parameter, row.output_low, row.output_high, row.range);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
