use proptest::prelude::*;
use pyrocarbon::insurance::{estimate_ibnr, price_premium, screen_exposure, Policy, ReportingPattern, RiskTier};
use pyrocarbon::risk::{
    assess, estimate_p_wildfire, simulate_buffer, simulate_buffer_replicates, BufferPool, BufferSimulation,
    FireHistory, FireRecord, Smoothing,
};
use pyrocarbon::uncertainty::DistributionSpec;

fn history(n: u32, fire_years: &[i32]) -> FireHistory {
    let events = fire_years.iter().map(|&year| FireRecord { year, emissions_tco2e: 100.0 }).collect();
    FireHistory::new(n, Some(2000), events).unwrap()
}

fn buffer(fire_rate: f64) -> BufferSimulation {
    BufferSimulation {
        pool: BufferPool { balance_tco2e: 1500.0, contribution_rate: 0.1 },
        annual_issuance_tco2e: 3000.0,
        fire_rate,
        loss_given_fire: DistributionSpec::uniform(500.0, 4000.0),
        years: 25,
    }
}

fn policy(credits: f64, price: f64, p: f64, lf: f64, loading: f64) -> Policy {
    Policy {
        insured_credits_tco2e: credits,
        credit_price: price,
        p_wildfire: p,
        expected_loss_fraction: lf,
        loading,
        risk_tier: RiskTier::from_probability(p),
    }
}

proptest! {
    #[test]
    fn crediting_identity(p in 0.0f64..=1.0, e in 0.0f64..1e7, s in 0.0f64..1e7) {
        let a = assess(p, e, s).unwrap();
        prop_assert_eq!(a.e_expected_tco2e, p * e);
        prop_assert_eq!(a.s_adjusted_tco2e, s - a.e_expected_tco2e);
        prop_assert!(a.s_adjusted_tco2e <= s);
    }

    #[test]
    fn assess_scales_with_e_and_s(p in 0.0f64..=1.0, e in 0.0f64..1e6, s in 0.0f64..1e6, lambda in 0.01f64..100.0) {
        let a = assess(p, e, s).unwrap();
        let b = assess(p, lambda * e, lambda * s).unwrap();
        let tol = 1e-12 * (1.0 + lambda * (e + s));
        prop_assert!((b.e_expected_tco2e - lambda * a.e_expected_tco2e).abs() <= tol);
        prop_assert!((b.s_adjusted_tco2e - lambda * a.s_adjusted_tco2e).abs() <= tol);
    }

    #[test]
    fn assess_is_linear_in_each_argument(p in 0.0f64..=0.5, e in 0.0f64..1e5, s in 0.0f64..1e5, de in 0.0f64..1e5) {
        let a = assess(p, e, s).unwrap();
        let b = assess(p, e + de, s).unwrap();
        let c = assess(2.0 * p, e, s).unwrap();
        prop_assert!((b.e_expected_tco2e - a.e_expected_tco2e - p * de).abs() <= 1e-9 * (1.0 + e + de));
        prop_assert!((c.e_expected_tco2e - 2.0 * a.e_expected_tco2e).abs() <= 1e-9 * (1.0 + e));
    }

    #[test]
    fn probability_monotone_in_horizon_and_k(n in 1u32..60, k in 0u32..60, h in 1u32..50, laplace in any::<bool>()) {
        let k = k.min(n);
        let sm = if laplace { Smoothing::Laplace } else { Smoothing::Mle };
        let years: Vec<i32> = (0..k as i32).map(|i| 2000 + i).collect();
        let hist = history(n, &years);
        let p = estimate_p_wildfire(&hist, h, sm).unwrap();
        prop_assert!(estimate_p_wildfire(&hist, h + 1, sm).unwrap() >= p);
        if k < n {
            let more: Vec<i32> = (0..=k as i32).map(|i| 2000 + i).collect();
            prop_assert!(estimate_p_wildfire(&history(n, &more), h, sm).unwrap() >= p);
        }
        if laplace {
            let r = estimate_p_wildfire(&hist, 1, sm).unwrap();
            prop_assert!(r > 0.0 && r < 1.0);
        }
    }

    #[test]
    fn buffer_is_seed_deterministic(seed in any::<u64>(), rate in 0.0f64..=1.0) {
        prop_assert_eq!(simulate_buffer(&buffer(rate), seed).unwrap(), simulate_buffer(&buffer(rate), seed).unwrap());
    }

    #[test]
    fn buffer_pathwise_monotone_in_fire_rate(seed in any::<u64>(), r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = simulate_buffer(&buffer(lo), seed).unwrap();
        let b = simulate_buffer(&buffer(hi), seed).unwrap();
        // common random numbers: every fire at the low rate also happens at the high rate
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(!x.fire || y.fire);
        }
        prop_assert!(b.iter().filter(|y| y.fire).count() >= a.iter().filter(|y| y.fire).count());
    }

    #[test]
    fn premium_is_homogeneous_in_credits_and_price(c in 1.0f64..1e6, pr in 0.1f64..100.0, p in 0.0f64..=1.0, lf in 0.0f64..=1.0, l in 0.0f64..2.0, lambda in 0.01f64..100.0) {
        let q = price_premium(&policy(c, pr, p, lf, l)).unwrap();
        let q2 = price_premium(&policy(c * lambda, pr, p, lf, l)).unwrap();
        let q3 = price_premium(&policy(c, pr * lambda, p, lf, l)).unwrap();
        let tol = 1e-12 * q2.premium.abs().max(1.0);
        prop_assert!((q2.premium - lambda * q.premium).abs() <= tol);
        prop_assert!((q3.premium - lambda * q.premium).abs() <= tol);
        prop_assert!(q.premium >= q.expected_loss);
    }

    #[test]
    fn ibnr_nonnegative_and_decreasing_in_reported_share(reported in 0.0f64..1e7, f in prop::collection::vec(0.01f64..1.0, 1..6)) {
        let mut cum: Vec<f64> = f;
        cum.sort_by(f64::total_cmp);
        cum.push(1.0);
        let pattern = ReportingPattern::new(cum.clone()).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..cum.len() {
            let r = estimate_ibnr(reported, i, &pattern).unwrap();
            prop_assert!(r.ibnr >= 0.0);
            prop_assert!(r.ibnr <= prev);
            prev = r.ibnr;
        }
    }

    #[test]
    fn screening_partitions_the_book(ps in prop::collection::vec(0.0f64..=1.0, 0..20), t in 0.0f64..=1.0) {
        let book: Vec<Policy> = ps.iter().map(|&p| policy(100.0, 1.0, p, 0.5, 0.1)).collect();
        let s = screen_exposure(&book, t).unwrap();
        prop_assert_eq!(s.accept.len() + s.decline.len(), book.len());
        prop_assert!(s.accept.iter().all(|p| p.p_wildfire <= t));
        prop_assert!(s.decline.iter().all(|p| p.p_wildfire > t));
        let mut acc = s.accept.iter();
        let mut dec = s.decline.iter();
        let mut next_a = acc.next();
        let mut next_d = dec.next();
        for p in &book {
            if next_a == Some(p) && p.p_wildfire <= t {
                next_a = acc.next();
            } else {
                prop_assert_eq!(next_d, Some(p));
                next_d = dec.next();
            }
        }
    }
}

#[test]
fn mean_terminal_balance_falls_with_fire_rate() {
    let means: Vec<f64> = [0.0, 0.1, 0.3]
        .iter()
        .map(|&r| simulate_buffer_replicates(&buffer(r), 1000, 99).unwrap().mean_terminal_balance_tco2e)
        .collect();
    assert!(means.windows(2).all(|w| w[1] <= w[0]), "{means:?}");
    assert_eq!(means[0], 1500.0 + 25.0 * 300.0);
}

#[test]
fn premium_wires_to_expected_emissions() {
    // with loss_fraction × credits = E(W), the premium is (1 + loading) × price × E_expected
    let (p, e, s, price, loading) = (0.02, 5000.0, 10_000.0, 10.0, 0.2);
    let a = assess(p, e, s).unwrap();
    let q = price_premium(&policy(10_000.0, price, p, e / 10_000.0, loading)).unwrap();
    assert!((q.premium - (1.0 + loading) * price * a.e_expected_tco2e).abs() < 1e-9);
    assert!((q.premium - 1200.0).abs() < 1e-9);
}
