//! Wildfire probability, risk-adjusted sequestration and buffer pools.

use std::collections::BTreeSet;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::uncertainty::{pairwise_sum, replicate_seed, DistributionSpec, UncertaintyError};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid fire history: {0}")]
    InvalidHistory(String),
    #[error("horizon must be at least one year")]
    InvalidHorizon,
    #[error("{name} must lie in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("loss distribution: {0}")]
    LossDistribution(#[from] UncertaintyError),
    #[error("fire history CSV: {0}")]
    Csv(#[from] csv::Error),
}

fn check(name: &'static str, range: &'static str, value: f64, ok: bool) -> Result<(), RiskError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(RiskError::OutOfRange { name, range, value })
    }
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<(), RiskError> {
    check(name, "[0, 1]", p, (0.0..=1.0).contains(&p))
}

pub(crate) fn check_non_negative(name: &'static str, v: f64) -> Result<(), RiskError> {
    check(name, "[0, inf)", v, v >= 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireRecord {
    pub year: i32,
    #[serde(rename = "emissions_tCO2e", alias = "emissions_tco2e")]
    pub emissions_tco2e: f64,
}

/// Recorded fires over an observation window of `observation_years` years,
/// starting at `first_year` when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireHistory {
    pub observation_years: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_year: Option<i32>,
    #[serde(default)]
    pub events: Vec<FireRecord>,
}

impl FireHistory {
    pub fn new(observation_years: u32, first_year: Option<i32>, events: Vec<FireRecord>) -> Result<Self, RiskError> {
        let h = FireHistory {
            observation_years,
            first_year,
            events,
        };
        h.validate()?;
        Ok(h)
    }

    /// Reads events from CSV with `year` and `emissions_tCO2e` columns.
    pub fn from_csv<R: Read>(reader: R, observation_years: u32, first_year: Option<i32>) -> Result<Self, RiskError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let events = rdr.deserialize().collect::<Result<Vec<FireRecord>, _>>()?;
        Self::new(observation_years, first_year, events)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if self.observation_years == 0 {
            return Err(RiskError::InvalidHistory("observation_years must be at least 1".into()));
        }
        for e in &self.events {
            if !(e.emissions_tco2e.is_finite() && e.emissions_tco2e >= 0.0) {
                return Err(RiskError::InvalidHistory(format!(
                    "event in {} has negative or non-finite emissions {}",
                    e.year, e.emissions_tco2e
                )));
            }
            if let Some(first) = self.first_year {
                let last = first as i64 + self.observation_years as i64 - 1;
                if (e.year as i64) < first as i64 || e.year as i64 > last {
                    return Err(RiskError::InvalidHistory(format!(
                        "event year {} outside observation window {first}..={last}",
                        e.year
                    )));
                }
            }
        }
        let k = self.fire_years();
        if k > self.observation_years as usize {
            return Err(RiskError::InvalidHistory(format!(
                "{k} distinct fire years exceed the {}-year observation window",
                self.observation_years
            )));
        }
        Ok(())
    }

    /// Number of distinct years with at least one fire.
    pub fn fire_years(&self) -> usize {
        self.events.iter().map(|e| e.year).collect::<BTreeSet<_>>().len()
    }

    /// Mean emissions of years with fire, summing events within a year.
    pub fn mean_fire_year_emissions(&self) -> Option<f64> {
        let k = self.fire_years();
        (k > 0).then(|| self.events.iter().map(|e| e.emissions_tco2e).sum::<f64>() / k as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Smoothing {
    /// k / n
    #[default]
    Mle,
    /// (k + 1) / (n + 2)
    Laplace,
}

/// Annual probability of at least one fire.
pub fn annual_fire_rate(history: &FireHistory, smoothing: Smoothing) -> Result<f64, RiskError> {
    history.validate()?;
    let k = history.fire_years() as f64;
    let n = history.observation_years as f64;
    Ok(match smoothing {
        Smoothing::Mle => k / n,
        Smoothing::Laplace => (k + 1.0) / (n + 2.0),
    })
}

/// Probability of at least one fire in `horizon_years` independent years.
pub fn horizon_probability(annual_rate: f64, horizon_years: u32) -> Result<f64, RiskError> {
    if horizon_years == 0 {
        return Err(RiskError::InvalidHorizon);
    }
    check_probability("annual fire rate", annual_rate)?;
    let survive = (1.0 - annual_rate).powf(horizon_years as f64);
    Ok((1.0 - survive).clamp(0.0, 1.0))
}

pub fn estimate_p_wildfire(history: &FireHistory, horizon_years: u32, smoothing: Smoothing) -> Result<f64, RiskError> {
    if horizon_years == 0 {
        return Err(RiskError::InvalidHorizon);
    }
    horizon_probability(annual_fire_rate(history, smoothing)?, horizon_years)
}

/// Crediting figures in tCO2e.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub p_wildfire: f64,
    pub e_wildfire_tco2e: f64,
    pub e_expected_tco2e: f64,
    pub s_estimated_tco2e: f64,
    pub s_adjusted_tco2e: f64,
}

impl RiskAssessment {
    /// Expected reversals exceed the estimated sequestration. Reported, never clamped.
    pub fn is_negative(&self) -> bool {
        self.s_adjusted_tco2e < 0.0
    }
}

/// Expected wildfire emissions `p·E` and adjusted sequestration `S − p·E`.
pub fn assess(p: f64, e_wildfire: f64, s_estimated: f64) -> Result<RiskAssessment, RiskError> {
    check_probability("p_wildfire", p)?;
    check_non_negative("e_wildfire", e_wildfire)?;
    check_non_negative("s_estimated", s_estimated)?;
    let e_expected = p * e_wildfire;
    Ok(RiskAssessment {
        p_wildfire: p,
        e_wildfire_tco2e: e_wildfire,
        e_expected_tco2e: e_expected,
        s_estimated_tco2e: s_estimated,
        s_adjusted_tco2e: s_estimated - e_expected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferPool {
    pub balance_tco2e: f64,
    /// Share of each year's issuance retained in the pool.
    pub contribution_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BufferSimulation {
    pub pool: BufferPool,
    pub annual_issuance_tco2e: f64,
    /// Annual probability of a fire triggering a draw.
    pub fire_rate: f64,
    pub loss_given_fire: DistributionSpec,
    pub years: u32,
}

impl BufferSimulation {
    pub fn validate(&self) -> Result<(), RiskError> {
        check_non_negative("buffer balance", self.pool.balance_tco2e)?;
        check_probability("contribution_rate", self.pool.contribution_rate)?;
        check_non_negative("annual_issuance", self.annual_issuance_tco2e)?;
        check_probability("fire_rate", self.fire_rate)?;
        self.loss_given_fire.validate()?;
        if let Some((lo, _)) = self.loss_given_fire.bounds() {
            check_non_negative("loss_given_fire", lo)?;
        }
        if self.years == 0 {
            return Err(RiskError::InvalidHorizon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BufferYear {
    /// 1-based.
    pub year: u32,
    pub balance_tco2e: f64,
    pub fire: bool,
    /// Amount actually covered by the pool this year.
    pub drawn_tco2e: f64,
    pub shortfall_tco2e: f64,
    pub insolvent: bool,
}

/// One buffer trajectory. Each year the contribution is credited first, then
/// a fire occurs with probability `fire_rate` and its loss is drawn; a loss
/// larger than the balance empties the pool and marks the year insolvent.
///
/// Every year consumes the same random draws whether or not a fire occurs,
/// so runs with the same seed and different fire rates see common random
/// numbers.
pub fn simulate_buffer(sim: &BufferSimulation, seed: u64) -> Result<Vec<BufferYear>, RiskError> {
    sim.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(run_trajectory(sim, &mut rng))
}

fn run_trajectory<R: Rng>(sim: &BufferSimulation, rng: &mut R) -> Vec<BufferYear> {
    let mut balance = sim.pool.balance_tco2e;
    let contribution = sim.annual_issuance_tco2e * sim.pool.contribution_rate;
    (1..=sim.years)
        .map(|year| {
            balance += contribution;
            let u: f64 = rng.random();
            let loss = sim.loss_given_fire.sample(rng).max(0.0);
            let fire = u < sim.fire_rate;
            let (drawn, shortfall, insolvent) = if !fire {
                (0.0, 0.0, false)
            } else if loss > balance {
                (balance, loss - balance, true)
            } else {
                (loss, 0.0, false)
            };
            balance -= drawn;
            if insolvent {
                balance = 0.0;
            }
            BufferYear {
                year,
                balance_tco2e: balance,
                fire,
                drawn_tco2e: drawn,
                shortfall_tco2e: shortfall,
                insolvent,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferSummary {
    pub replicates: usize,
    pub years: u32,
    pub seed: u64,
    pub mean_terminal_balance_tco2e: f64,
    /// Share of replicates with at least one insolvent year.
    pub insolvency_probability: f64,
    /// Mean first insolvent year among replicates that became insolvent.
    pub mean_first_insolvent_year: Option<f64>,
    pub mean_balance_by_year: Vec<f64>,
    pub insolvent_share_by_year: Vec<f64>,
}

/// Independent trajectories seeded per replicate from `seed`.
pub fn simulate_buffer_replicates(
    sim: &BufferSimulation,
    replicates: usize,
    seed: u64,
) -> Result<BufferSummary, RiskError> {
    sim.validate()?;
    if replicates == 0 {
        return Err(RiskError::OutOfRange {
            name: "replicates",
            range: "[1, inf)",
            value: 0.0,
        });
    }
    let runs: Vec<Vec<BufferYear>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, i as u64));
            run_trajectory(sim, &mut rng)
        })
        .collect();
    let n = replicates as f64;
    let years = sim.years as usize;
    let terminal: Vec<f64> = runs.iter().map(|r| r[years - 1].balance_tco2e).collect();
    let mean_balance_by_year = (0..years)
        .map(|y| pairwise_sum(&runs.iter().map(|r| r[y].balance_tco2e).collect::<Vec<_>>()) / n)
        .collect();
    let insolvent_share_by_year = (0..years)
        .map(|y| runs.iter().filter(|r| r[y].insolvent).count() as f64 / n)
        .collect();
    let first: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.iter().find(|y| y.insolvent).map(|y| y.year as f64))
        .collect();
    Ok(BufferSummary {
        replicates,
        years: sim.years,
        seed,
        mean_terminal_balance_tco2e: pairwise_sum(&terminal) / n,
        insolvency_probability: first.len() as f64 / n,
        mean_first_insolvent_year: (!first.is_empty()).then(|| first.iter().sum::<f64>() / first.len() as f64),
        mean_balance_by_year,
        insolvent_share_by_year,
    })
}
