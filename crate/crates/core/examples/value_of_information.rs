//! Expected value of perfect information for an underwriting decision: write
//! a policy at a fixed premium, or decline it.

use pyrocarbon::insurance::{price_premium, Policy, RiskTier};
use pyrocarbon::uncertainty::{evpi, Action, DistributionSpec, McSettings, ParamSet, Sample};

fn policy(p_wildfire: f64) -> Policy {
    Policy {
        insured_credits_tco2e: 10_000.0,
        credit_price: 10.0,
        p_wildfire,
        expected_loss_fraction: 0.5,
        loading: 0.2,
        risk_tier: RiskTier::from_probability(p_wildfire),
    }
}

pub fn run_example() -> anyhow::Result<()> {
    let premium = price_premium(&policy(0.02))?.premium;
    let utility = |a: Action, s: &Sample| -> Result<f64, String> {
        match a {
            Action::Decline => Ok(0.0),
            Action::Act => price_premium(&policy(s["p"]))
                .map(|q| premium - q.expected_loss)
                .map_err(|e| e.to_string()),
        }
    };
    let settings = McSettings::new(20_000, 5);

    let cases = [
        ("known p", DistributionSpec::point(0.02)),
        ("p uniform on [0, 0.05]", DistributionSpec::uniform(0.0, 0.05)),
        ("p triangular 0.005..0.02..0.08", DistributionSpec::triangular(0.005, 0.02, 0.08)),
    ];
    for (label, dist) in cases {
        let params = ParamSet::from([("p".to_string(), dist)]);
        let v = evpi(&params, &settings, utility)?;
        println!(
            "{label}: EVPI {:.2} (se {:.2}), best action without information: {:?}",
            v.evpi, v.standard_error, v.best_action
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
