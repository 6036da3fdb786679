//! Buffer pool depletion: one trajectory, then replicate summaries across
//! fire rates.

use pyrocarbon::risk::{simulate_buffer, simulate_buffer_replicates, BufferPool, BufferSimulation};
use pyrocarbon::uncertainty::DistributionSpec;

pub fn run_example() -> anyhow::Result<()> {
    let mut sim = BufferSimulation {
        pool: BufferPool {
            balance_tco2e: 2000.0,
            contribution_rate: 0.1,
        },
        annual_issuance_tco2e: 5000.0,
        fire_rate: 0.1,
        loss_given_fire: DistributionSpec::triangular(500.0, 2000.0, 6000.0),
        years: 20,
    };

    for y in simulate_buffer(&sim, 11)?.iter().filter(|y| y.fire) {
        println!(
            "year {:2}: drew {:.0}, balance {:.0}{}",
            y.year,
            y.drawn_tco2e,
            y.balance_tco2e,
            if y.insolvent { " INSOLVENT" } else { "" }
        );
    }

    for rate in [0.0, 0.1, 0.3] {
        sim.fire_rate = rate;
        let s = simulate_buffer_replicates(&sim, 1000, 11)?;
        println!(
            "fire rate {rate}: mean terminal {:.0} tCO2e, P(insolvent) {:.3}, first insolvent year {:?}",
            s.mean_terminal_balance_tco2e, s.insolvency_probability, s.mean_first_insolvent_year
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
