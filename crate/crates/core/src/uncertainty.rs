//! Monte Carlo propagation, one-at-a-time sensitivity and expected value of
//! perfect information.
//!
//! Every replicate draws from its own generator seeded by
//! [`replicate_seed`]`(master, index)`, so a run is fully determined by the
//! master seed and replicate count no matter how replicates are scheduled
//! across threads. Reductions run over the index-ordered sample vector.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Triangular, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UncertaintyError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid Monte Carlo settings: {0}")]
    InvalidSettings(String),
    #[error("replicate {index} failed: {cause}")]
    Replicate { index: usize, cause: String },
    #[error("sensitivity evaluation for '{parameter}' failed: {cause}")]
    Sensitivity { parameter: String, cause: String },
    #[error("utility evaluation failed on sample {index}: {cause}")]
    Utility { index: usize, cause: String },
}

/// Uncertain scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Point { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
}

/// Accepts either a bare number (a point value) or a tagged distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ValueOrDistribution {
    Value(f64),
    Distribution(DistributionSpec),
}

impl From<ValueOrDistribution> for DistributionSpec {
    fn from(v: ValueOrDistribution) -> Self {
        match v {
            ValueOrDistribution::Value(value) => DistributionSpec::Point { value },
            ValueOrDistribution::Distribution(d) => d,
        }
    }
}

impl DistributionSpec {
    pub fn point(value: f64) -> Self {
        DistributionSpec::Point { value }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        DistributionSpec::Uniform { lo, hi }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        DistributionSpec::Normal { mean, sd }
    }

    pub fn triangular(lo: f64, mode: f64, hi: f64) -> Self {
        DistributionSpec::Triangular { lo, mode, hi }
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        let bad = |m: String| Err(UncertaintyError::InvalidDistribution(m));
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        match *self {
            DistributionSpec::Point { value } if !finite(&[value]) => bad("point value must be finite".into()),
            DistributionSpec::Uniform { lo, hi } if !(finite(&[lo, hi]) && lo < hi) => {
                bad(format!("uniform requires finite lo < hi, got ({lo}, {hi})"))
            }
            DistributionSpec::Normal { mean, sd } if !(finite(&[mean, sd]) && sd > 0.0) => {
                bad(format!("normal requires finite mean and sd > 0, got ({mean}, {sd})"))
            }
            DistributionSpec::Triangular { lo, mode, hi }
                if !(finite(&[lo, mode, hi]) && lo <= mode && mode <= hi && lo < hi) =>
            {
                bad(format!("triangular requires lo <= mode <= hi with lo < hi, got ({lo}, {mode}, {hi})"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, DistributionSpec::Point { .. })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Point { value } => value,
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionSpec::Normal { mean, .. } => mean,
            DistributionSpec::Triangular { lo, mode, hi } => (lo + mode + hi) / 3.0,
        }
    }

    /// Support bounds, `None` for unbounded kinds.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            DistributionSpec::Point { value } => Some((value, value)),
            DistributionSpec::Uniform { lo, hi } | DistributionSpec::Triangular { lo, hi, .. } => Some((lo, hi)),
            DistributionSpec::Normal { .. } => None,
        }
    }

    /// Draws one value. Point values consume no randomness. Callers are
    /// expected to have called `validate` first.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistributionSpec::Point { value } => value,
            DistributionSpec::Uniform { lo, hi } => Uniform::new(lo, hi).expect("validated").sample(rng),
            DistributionSpec::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            DistributionSpec::Triangular { lo, mode, hi } => {
                Triangular::new(lo, hi, mode).expect("validated").sample(rng)
            }
        }
    }
}

/// Named uncertain parameters, sampled in key order.
pub type ParamSet = BTreeMap<String, DistributionSpec>;
/// One joint draw of the parameters.
pub type Sample = BTreeMap<String, f64>;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn replicate_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replicate_seed(master, index))
}

pub fn draw_sample<R: Rng + ?Sized>(params: &ParamSet, rng: &mut R) -> Sample {
    params.iter().map(|(k, d)| (k.clone(), d.sample(rng))).collect()
}

pub fn validate_params(params: &ParamSet) -> Result<(), UncertaintyError> {
    for (name, d) in params {
        d.validate()
            .map_err(|e| UncertaintyError::InvalidDistribution(format!("{name}: {e}")))?;
    }
    Ok(())
}

/// Pairwise summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().fold(0.0, |acc, x| acc + x)
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// mean ± z·sd/√n
    #[default]
    Normal,
    /// Empirical quantiles of the samples.
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default)]
    pub ci_method: CiMethod,
}

fn default_ci_level() -> f64 {
    0.95
}

impl McSettings {
    pub fn new(n: usize, seed: u64) -> Self {
        McSettings {
            n,
            seed,
            ci_level: default_ci_level(),
            ci_method: CiMethod::Normal,
        }
    }

    pub fn validate(&self) -> Result<(), UncertaintyError> {
        if self.n < 2 {
            return Err(UncertaintyError::InvalidSettings(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(UncertaintyError::InvalidSettings(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub ci_method: CiMethod,
    pub seed: u64,
}

impl MonteCarloSummary {
    pub fn from_samples(samples: &[f64], settings: &McSettings) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let sd = if n > 1 { (pairwise_sum(&sq) / (n - 1) as f64).sqrt() } else { 0.0 };
        let std_error = sd / (n as f64).sqrt();
        let (ci_low, ci_high) = match settings.ci_method {
            CiMethod::Normal => {
                let z = z_value(settings.ci_level);
                (mean - z * std_error, mean + z * std_error)
            }
            CiMethod::Percentile => {
                let mut sorted = samples.to_vec();
                sorted.sort_by(f64::total_cmp);
                let tail = 0.5 * (1.0 - settings.ci_level);
                (quantile(&sorted, tail), quantile(&sorted, 1.0 - tail))
            }
        };
        MonteCarloSummary {
            n,
            mean,
            sd,
            std_error,
            ci_low,
            ci_high,
            ci_level: settings.ci_level,
            ci_method: settings.ci_method,
            seed: settings.seed,
        }
    }
}

/// Two-sided standard normal critical value.
pub fn z_value(level: f64) -> f64 {
    StdNormal::standard().inverse_cdf(0.5 + 0.5 * level)
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Runs `settings.n` replicates, each evaluating several outputs at once, and
/// returns the per-output sample vectors in replicate order.
pub fn simulate_outputs<F, E>(
    params: &ParamSet,
    settings: &McSettings,
    outputs: usize,
    eval: F,
) -> Result<Vec<Vec<f64>>, UncertaintyError>
where
    F: Fn(&Sample) -> Result<Vec<f64>, E> + Sync,
    E: fmt::Display,
{
    settings.validate()?;
    validate_params(params)?;
    let results: Vec<Result<Vec<f64>, String>> = (0..settings.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(settings.seed, i as u64);
            let sample = draw_sample(params, &mut rng);
            eval(&sample).map_err(|e| e.to_string())
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(settings.n); outputs];
    for (index, r) in results.into_iter().enumerate() {
        let row = r.map_err(|cause| UncertaintyError::Replicate { index, cause })?;
        if row.len() != outputs {
            return Err(UncertaintyError::Replicate {
                index,
                cause: format!("expected {outputs} outputs, got {}", row.len()),
            });
        }
        for (col, v) in columns.iter_mut().zip(row) {
            if !v.is_finite() {
                return Err(UncertaintyError::Replicate {
                    index,
                    cause: format!("non-finite output {v}"),
                });
            }
            col.push(v);
        }
    }
    Ok(columns)
}

/// Propagates parameter uncertainty through `eval` and summarizes each output.
pub fn propagate_outputs<F, E>(
    params: &ParamSet,
    settings: &McSettings,
    outputs: usize,
    eval: F,
) -> Result<Vec<MonteCarloSummary>, UncertaintyError>
where
    F: Fn(&Sample) -> Result<Vec<f64>, E> + Sync,
    E: fmt::Display,
{
    let columns = simulate_outputs(params, settings, outputs, eval)?;
    Ok(columns
        .iter()
        .map(|c| MonteCarloSummary::from_samples(c, settings))
        .collect())
}

/// Single-output form of [`propagate_outputs`].
pub fn propagate<F, E>(params: &ParamSet, settings: &McSettings, eval: F) -> Result<MonteCarloSummary, UncertaintyError>
where
    F: Fn(&Sample) -> Result<f64, E> + Sync,
    E: fmt::Display,
{
    let mut out = propagate_outputs(params, settings, 1, |s| eval(s).map(|v| vec![v]))?;
    Ok(out.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swing {
    pub parameter: String,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub parameter: String,
    pub output_low: f64,
    pub output_high: f64,
    /// `output_high − output_low`; rows are ordered by its magnitude.
    pub range: f64,
}

/// One-at-a-time sensitivity: each parameter is moved to its low and high
/// value with all others at `base`. Rows come back sorted by descending
/// `|range|`; ties keep input order.
pub fn sensitivity<F, E>(base: &Sample, swings: &[Swing], eval: F) -> Result<Vec<SensitivityRow>, UncertaintyError>
where
    F: Fn(&Sample) -> Result<f64, E>,
    E: fmt::Display,
{
    let mut rows = Vec::with_capacity(swings.len());
    for swing in swings {
        let at = |v: f64| {
            let mut s = base.clone();
            s.insert(swing.parameter.clone(), v);
            eval(&s).map_err(|e| UncertaintyError::Sensitivity {
                parameter: swing.parameter.clone(),
                cause: e.to_string(),
            })
        };
        let output_low = at(swing.low)?;
        let output_high = at(swing.high)?;
        rows.push(SensitivityRow {
            parameter: swing.parameter.clone(),
            output_low,
            output_high,
            range: output_high - output_low,
        });
    }
    rows.sort_by(|a, b| b.range.abs().total_cmp(&a.range.abs()));
    Ok(rows)
}

/// Evaluates the output over a grid of values for one parameter.
pub fn sweep<F, E>(base: &Sample, parameter: &str, values: &[f64], eval: F) -> Result<Vec<(f64, f64)>, UncertaintyError>
where
    F: Fn(&Sample) -> Result<f64, E>,
    E: fmt::Display,
{
    values
        .iter()
        .map(|&v| {
            let mut s = base.clone();
            s.insert(parameter.to_string(), v);
            eval(&s).map(|out| (v, out)).map_err(|e| UncertaintyError::Sensitivity {
                parameter: parameter.to_string(),
                cause: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Act,
    Decline,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Act, Action::Decline];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvpiEstimate {
    /// Clamped at zero.
    pub evpi: f64,
    /// Before clamping.
    pub raw: f64,
    pub standard_error: f64,
    pub expected_utility_act: f64,
    pub expected_utility_decline: f64,
    /// Best action without further information.
    pub best_action: Action,
    pub n: usize,
}

/// Expected value of perfect information for a two-action decision.
///
/// EVPI = mean over samples of `max_a U(a, θ)` minus `max_a` of the mean
/// utility. It is computed as the mean per-sample regret of the action chosen
/// under uncertainty, which gives the standard error directly.
pub fn evpi<F, E>(params: &ParamSet, settings: &McSettings, utility: F) -> Result<EvpiEstimate, UncertaintyError>
where
    F: Fn(Action, &Sample) -> Result<f64, E> + Sync,
    E: fmt::Display,
{
    let columns = simulate_outputs(params, settings, 2, |s| -> Result<Vec<f64>, String> {
        Action::ALL
            .iter()
            .map(|a| utility(*a, s).map_err(|e| e.to_string()))
            .collect()
    })
    .map_err(|e| match e {
        UncertaintyError::Replicate { index, cause } => UncertaintyError::Utility { index, cause },
        other => other,
    })?;
    let (act, decline) = (&columns[0], &columns[1]);
    let n = act.len();
    let mean_act = pairwise_sum(act) / n as f64;
    let mean_decline = pairwise_sum(decline) / n as f64;
    let best_action = if mean_act > mean_decline { Action::Act } else { Action::Decline };
    let chosen = match best_action {
        Action::Act => act,
        Action::Decline => decline,
    };
    let regret: Vec<f64> = act
        .iter()
        .zip(decline)
        .zip(chosen)
        .map(|((a, d), c)| a.max(*d) - c)
        .collect();
    let raw = pairwise_sum(&regret) / n as f64;
    let sq: Vec<f64> = regret.iter().map(|r| (r - raw) * (r - raw)).collect();
    let sd = (pairwise_sum(&sq) / (n - 1) as f64).sqrt();
    Ok(EvpiEstimate {
        evpi: raw.max(0.0),
        raw,
        standard_error: sd / (n as f64).sqrt(),
        expected_utility_act: mean_act,
        expected_utility_decline: mean_decline,
        best_action,
        n,
    })
}
