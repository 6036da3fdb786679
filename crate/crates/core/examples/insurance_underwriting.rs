//! Premium pricing, exposure screening and an IBNR reserve.

use pyrocarbon::insurance::{estimate_ibnr, price_premium, screen_exposure, Policy, ReportingPattern, RiskTier};

pub fn run_example() -> anyhow::Result<()> {
    let policy = |p_wildfire: f64, credits: f64| Policy {
        insured_credits_tco2e: credits,
        credit_price: 10.0,
        p_wildfire,
        expected_loss_fraction: 0.5,
        loading: 0.2,
        risk_tier: RiskTier::from_probability(p_wildfire),
    };
    let book = [policy(0.02, 10_000.0), policy(0.12, 4_000.0), policy(0.25, 8_000.0)];

    for p in &book {
        let q = price_premium(p)?;
        println!(
            "p={:.2} {:?}: expected loss {:.0}, premium {:.0}",
            p.p_wildfire, p.risk_tier, q.expected_loss, q.premium
        );
    }

    let screened = screen_exposure(&book, 0.15)?;
    println!("accepted {}, declined {}", screened.accept.len(), screened.decline.len());

    let pattern = ReportingPattern::new(vec![0.5, 0.8, 0.95, 1.0])?;
    for elapsed in 0..=pattern.last_period() {
        let r = estimate_ibnr(80_000.0, elapsed, &pattern)?;
        println!("after period {elapsed}: ultimate {:.0}, IBNR {:.0}", r.ultimate, r.ibnr);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
