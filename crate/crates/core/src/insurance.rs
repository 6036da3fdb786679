//! Premium pricing, exposure screening and IBNR reserving for reforestation
//! project policies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{check_non_negative, check_probability, RiskError};

#[derive(Debug, Error)]
pub enum InsuranceError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(#[source] RiskError),
    #[error("invalid reporting pattern: {0}")]
    InvalidPattern(String),
    #[error("elapsed period {elapsed} beyond reporting pattern of length {len}")]
    ElapsedOutOfRange { elapsed: usize, len: usize },
    #[error("no claims reported by period {0}; cannot develop to ultimate")]
    UndefinedDevelopment(usize),
    #[error("reported amount must be non-negative and finite, got {0}")]
    InvalidReported(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskTier {
    Low,
    Medium,
    High,
}

impl RiskTier {
    /// Tier from horizon fire probability: below 5% low, below 15% medium.
    pub fn from_probability(p: f64) -> Self {
        if p < 0.05 {
            RiskTier::Low
        } else if p < 0.15 {
            RiskTier::Medium
        } else {
            RiskTier::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    #[serde(rename = "insured_credits_tCO2e", alias = "insured_credits_tco2e")]
    pub insured_credits_tco2e: f64,
    /// Currency per tCO2e.
    pub credit_price: f64,
    pub p_wildfire: f64,
    /// Share of insured credits lost when a fire occurs.
    pub expected_loss_fraction: f64,
    pub loading: f64,
    pub risk_tier: RiskTier,
}

impl Policy {
    pub fn validate(&self) -> Result<(), InsuranceError> {
        (|| {
            check_non_negative("insured_credits", self.insured_credits_tco2e)?;
            check_non_negative("credit_price", self.credit_price)?;
            check_probability("p_wildfire", self.p_wildfire)?;
            check_probability("expected_loss_fraction", self.expected_loss_fraction)?;
            check_non_negative("loading", self.loading)
        })()
        .map_err(InsuranceError::InvalidPolicy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub expected_loss: f64,
    pub premium: f64,
}

/// Expected loss plus a proportional loading.
pub fn price_premium(policy: &Policy) -> Result<Quote, InsuranceError> {
    policy.validate()?;
    let expected_loss =
        policy.p_wildfire * policy.expected_loss_fraction * policy.insured_credits_tco2e * policy.credit_price;
    Ok(Quote {
        expected_loss,
        premium: expected_loss * (1.0 + policy.loading),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Screening<T> {
    pub accept: Vec<T>,
    pub decline: Vec<T>,
}

/// Declines policies whose fire probability strictly exceeds `p_threshold`,
/// preserving input order in both halves.
pub fn screen_exposure(policies: &[Policy], p_threshold: f64) -> Result<Screening<Policy>, InsuranceError> {
    check_probability("p_threshold", p_threshold).map_err(InsuranceError::InvalidPolicy)?;
    let (decline, accept) = policies.iter().partition(|p| p.p_wildfire > p_threshold);
    Ok(Screening { accept, decline })
}

/// Cumulative share of ultimate claims reported after each development period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ReportingPattern {
    cumulative: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ReportingPattern {
    type Error = InsuranceError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        ReportingPattern::new(v)
    }
}

impl From<ReportingPattern> for Vec<f64> {
    fn from(p: ReportingPattern) -> Self {
        p.cumulative
    }
}

impl ReportingPattern {
    pub fn new(cumulative: Vec<f64>) -> Result<Self, InsuranceError> {
        let bad = |m: String| Err(InsuranceError::InvalidPattern(m));
        let Some(&last) = cumulative.last() else {
            return bad("pattern is empty".into());
        };
        if let Some((i, v)) = cumulative.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return bad(format!("F({i}) = {v} outside [0, 1]"));
        }
        if let Some(i) = cumulative.windows(2).position(|w| w[1] < w[0]) {
            return bad(format!("F({}) < F({i}); pattern must be non-decreasing", i + 1));
        }
        if last != 1.0 {
            return bad(format!("final cumulative fraction must be exactly 1, got {last}"));
        }
        Ok(ReportingPattern { cumulative })
    }

    pub fn fractions(&self) -> &[f64] {
        &self.cumulative
    }

    /// Index of the last period, L.
    pub fn last_period(&self) -> usize {
        self.cumulative.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbnrEstimate {
    pub reported: f64,
    pub reported_fraction: f64,
    pub ultimate: f64,
    pub ibnr: f64,
}

/// Grosses reported claims up to ultimate with the reporting pattern.
pub fn estimate_ibnr(reported: f64, elapsed_periods: usize, pattern: &ReportingPattern) -> Result<IbnrEstimate, InsuranceError> {
    if !(reported.is_finite() && reported >= 0.0) {
        return Err(InsuranceError::InvalidReported(reported));
    }
    let f = *pattern
        .cumulative
        .get(elapsed_periods)
        .ok_or(InsuranceError::ElapsedOutOfRange {
            elapsed: elapsed_periods,
            len: pattern.cumulative.len(),
        })?;
    if f == 0.0 {
        return Err(InsuranceError::UndefinedDevelopment(elapsed_periods));
    }
    let ultimate = reported / f;
    Ok(IbnrEstimate {
        reported,
        reported_fraction: f,
        ultimate,
        ibnr: (ultimate - reported).max(0.0),
    })
}
