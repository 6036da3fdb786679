//! Wildfire probability from a fire history and the risk-adjusted
//! sequestration used for crediting.

use pyrocarbon::risk::{annual_fire_rate, assess, estimate_p_wildfire, FireHistory, FireRecord, Smoothing};

pub fn run_example() -> anyhow::Result<()> {
    let events = [(2004, 3100.0), (2011, 5200.0), (2011, 400.0), (2019, 4700.0)]
        .map(|(year, emissions_tco2e)| FireRecord { year, emissions_tco2e });
    let history = FireHistory::new(25, Some(2000), events.to_vec())?;
    println!("{} fire years in {} observed years", history.fire_years(), history.observation_years);

    for smoothing in [Smoothing::Mle, Smoothing::Laplace] {
        let rate = annual_fire_rate(&history, smoothing)?;
        let p10 = estimate_p_wildfire(&history, 10, smoothing)?;
        println!("{smoothing:?}: annual rate {rate:.4}, P(fire within 10 y) {p10:.4}");
    }

    let a = assess(0.02, 5000.0, 10_000.0)?;
    println!("E_expected {} tCO2e, S_adjusted {} tCO2e", a.e_expected_tco2e, a.s_adjusted_tco2e);

    let stressed = assess(0.9, 20_000.0, 10_000.0)?;
    println!(
        "stressed: S_adjusted {} tCO2e (negative: {})",
        stressed.s_adjusted_tco2e,
        stressed.is_negative()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
