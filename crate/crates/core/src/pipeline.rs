//! End-to-end scenario runs: deterministic evaluation, buffer simulation,
//! uncertainty propagation and the JSON report.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::carbon::{
    carbon_stock_map, fire_emissions, stock_delta_emissions, ClassTable, Co2eConversion, EmissionsEstimate,
    SeverityTable,
};
use crate::fire::{classify_burn, extract_perimeters, ingest_mask, BoundingBox, BurnMask, Connectivity, FirePerimeter, MaskSummary};
use crate::insurance::{estimate_ibnr, price_premium, IbnrEstimate, Policy, Quote, RiskTier};
use crate::raster::{compute_dnbr, compute_index, Band, Bands, GridPair, GridStats, IndexKind, RasterGrid};
use crate::risk::{
    annual_fire_rate, assess, horizon_probability, simulate_buffer_replicates, BufferPool, BufferSimulation,
    BufferSummary, RiskAssessment, Smoothing,
};
use crate::scenario::{
    all_stages, has_errors, number_at, validate_stages, EmissionsPathway, Finding, OutputName, Scenario,
    ScenarioConfig, Severity, Stage, StageSet,
};
use crate::uncertainty::{
    evpi, propagate_outputs, sensitivity, Action, DistributionSpec, EvpiEstimate, McSettings, MonteCarloSummary,
    ParamSet, Sample, SensitivityRow,
};
use crate::ENGINE_VERSION;

/// A stage that could not complete.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("stage '{stage}' failed: {cause}")]
pub struct StageError {
    pub stage: Stage,
    pub cause: String,
}

impl StageError {
    fn new(stage: Stage, cause: impl ToString) -> Self {
        StageError {
            stage,
            cause: cause.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scenario failed validation with {} error(s)", .0.iter().filter(|f| f.is_error()).count())]
    Validation(Vec<Finding>),
    #[error(transparent)]
    Stage(#[from] StageError),
}

impl PipelineError {
    /// Process exit code: 1 for invalid input, 2 for execution failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Stage(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Config,
    Bands,
    FireHistory,
    Emissions,
    Default,
}

#[derive(Debug, Clone)]
pub struct IndicesOutcome {
    pub pre_ndvi: Arc<RasterGrid>,
    pub post_ndvi: Option<Arc<RasterGrid>>,
    pub dnbr: Option<Arc<RasterGrid>>,
    pub ndvi_source: Provenance,
    pub dnbr_source: Option<Provenance>,
}

#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub mask: BurnMask,
    pub threshold: Option<f64>,
    pub summary: MaskSummary,
}

#[derive(Debug, Clone)]
pub struct EmissionsOutcome {
    pub pathway: EmissionsPathway,
    pub per_fire: Vec<(usize, EmissionsEstimate)>,
    pub total: EmissionsEstimate,
}

#[derive(Debug, Clone)]
pub struct RiskOutcome {
    pub annual_fire_rate: Option<f64>,
    pub p_source: Provenance,
    pub e_source: Provenance,
    pub assessment: RiskAssessment,
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub quote: Quote,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct InsuranceOutcome {
    pub p_threshold: f64,
    pub policies: Vec<PolicyOutcome>,
    pub claims: Option<IbnrEstimate>,
}

impl InsuranceOutcome {
    fn accepted(&self) -> impl Iterator<Item = &PolicyOutcome> {
        self.policies.iter().filter(|p| p.accepted)
    }

    pub fn expected_loss_total(&self) -> f64 {
        self.accepted().fold(0.0, |acc, p| acc + p.quote.expected_loss)
    }

    pub fn premium_total(&self) -> f64 {
        self.accepted().fold(0.0, |acc, p| acc + p.quote.premium)
    }
}

/// Deterministic results of one evaluation; `None` for stages not run.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub indices: Option<IndicesOutcome>,
    pub detection: Option<DetectionOutcome>,
    pub perimeters: Option<Vec<FirePerimeter>>,
    pub emissions: Option<EmissionsOutcome>,
    pub risk: Option<RiskOutcome>,
    pub insurance: Option<InsuranceOutcome>,
}

impl Evaluation {
    pub fn output(&self, name: OutputName) -> Option<f64> {
        let em = self.emissions.as_ref().map(|e| &e.total);
        let risk = self.risk.as_ref().map(|r| &r.assessment);
        let ins = self.insurance.as_ref();
        match name {
            OutputName::BurnedAreaM2 => self.detection.as_ref().map(|d| d.summary.burned_area_m2),
            OutputName::CarbonLossKgc => em.map(|e| e.carbon_loss_kgc),
            OutputName::Co2Kg => em.map(|e| e.co2_kg),
            OutputName::Co2eTotalKg => em.map(|e| e.co2e_total_kg),
            OutputName::PWildfire => risk.map(|r| r.p_wildfire),
            OutputName::EWildfireTco2e => risk.map(|r| r.e_wildfire_tco2e),
            OutputName::EExpectedTco2e => risk.map(|r| r.e_expected_tco2e),
            OutputName::SAdjustedTco2e => risk.map(|r| r.s_adjusted_tco2e),
            OutputName::ExpectedLossTotal => ins.map(InsuranceOutcome::expected_loss_total),
            OutputName::PremiumTotal => ins.map(InsuranceOutcome::premium_total),
            OutputName::Ibnr => ins.and_then(|i| i.claims).map(|c| c.ibnr),
        }
    }

    pub fn require(&self, name: OutputName) -> Result<f64, String> {
        self.output(name)
            .ok_or_else(|| format!("output '{name}' was not produced; its stage is disabled or not configured"))
    }

    /// Every output this evaluation produced, keyed by name.
    pub fn outputs(&self) -> BTreeMap<String, f64> {
        OutputName::ALL
            .into_iter()
            .filter_map(|o| self.output(o).map(|v| (o.name().to_string(), v)))
            .collect()
    }
}

fn with_offset(grid: Arc<RasterGrid>, offset: f64) -> Result<Arc<RasterGrid>, String> {
    if offset == 0.0 {
        return Ok(grid);
    }
    RasterGrid::from_cells(*grid.header(), grid.cells().map(|c| c.map(|v| v + offset)))
        .map(Arc::new)
        .map_err(|e| e.to_string())
}

fn grid_of(scenario: &Scenario, path: &str) -> Result<Arc<RasterGrid>, String> {
    scenario
        .files()
        .grid(path)
        .cloned()
        .ok_or_else(|| format!("raster '{path}' is not loaded"))
}

fn bands_of(scenario: &Scenario, refs: &BTreeMap<Band, String>) -> Result<Bands, String> {
    refs.iter()
        .map(|(b, p)| grid_of(scenario, p).map(|g| (*b, (*g).clone())))
        .collect()
}

fn index_from(
    scenario: &Scenario,
    file: &Option<String>,
    bands: &BTreeMap<Band, String>,
    kind: IndexKind,
) -> Result<Option<(Arc<RasterGrid>, Provenance)>, String> {
    if let Some(path) = file {
        return Ok(Some((grid_of(scenario, path)?, Provenance::Config)));
    }
    if kind.required_bands().iter().all(|b| bands.contains_key(b)) {
        let g = compute_index(kind, &bands_of(scenario, bands)?).map_err(|e| e.to_string())?;
        return Ok(Some((Arc::new(g), Provenance::Bands)));
    }
    Ok(None)
}

fn run_indices(scenario: &Scenario, cfg: &ScenarioConfig) -> Result<IndicesOutcome, String> {
    let inp = &cfg.inputs;
    let (pre_ndvi, ndvi_source) = index_from(scenario, &inp.pre_ndvi, &inp.pre_bands, IndexKind::Ndvi)?
        .ok_or("no pre-fire NDVI source")?;
    let post_ndvi = index_from(scenario, &inp.post_ndvi, &inp.post_bands, IndexKind::Ndvi)?
        .map(|(g, _)| with_offset(g, inp.ndvi_offset))
        .transpose()?;
    let dnbr = match &inp.dnbr {
        Some(path) => Some((grid_of(scenario, path)?, Provenance::Config)),
        None => {
            let pre = index_from(scenario, &inp.pre_nbr, &inp.pre_bands, IndexKind::Nbr)?;
            let post = index_from(scenario, &inp.post_nbr, &inp.post_bands, IndexKind::Nbr)?;
            match (pre, post) {
                (Some((pre, ps)), Some((post, qs))) => {
                    let pair = GridPair::new((*pre).clone(), (*post).clone()).map_err(|e| e.to_string())?;
                    let src = if ps == Provenance::Bands || qs == Provenance::Bands {
                        Provenance::Bands
                    } else {
                        Provenance::Config
                    };
                    Some((Arc::new(compute_dnbr(&pair).map_err(|e| e.to_string())?), src))
                }
                _ => None,
            }
        }
    };
    let (dnbr, dnbr_source) = match dnbr {
        Some((g, s)) => (Some(with_offset(g, inp.dnbr_offset)?), Some(s)),
        None => (None, None),
    };
    Ok(IndicesOutcome {
        pre_ndvi: with_offset(pre_ndvi, inp.ndvi_offset)?,
        post_ndvi,
        dnbr,
        ndvi_source,
        dnbr_source,
    })
}

fn needs(stage: Stage, upstream: Stage) -> StageError {
    StageError::new(stage, format!("requires the '{upstream}' stage"))
}

/// Runs the deterministic stages in `stages` for `cfg`, using the files
/// loaded with `scenario`. Buffer and uncertainty stages are not touched.
pub fn evaluate(scenario: &Scenario, cfg: &ScenarioConfig, stages: &StageSet) -> Result<Evaluation, StageError> {
    let mut ev = Evaluation::default();
    let on = |s: Stage| stages.contains(&s);

    if on(Stage::Indices) {
        ev.indices = Some(run_indices(scenario, cfg).map_err(|e| StageError::new(Stage::Indices, e))?);
    }

    if on(Stage::Detection) {
        let st = Stage::Detection;
        let (mask, threshold) = match (cfg.burn.threshold, &cfg.burn.mask) {
            (Some(t), None) => {
                let ix = ev.indices.as_ref().ok_or_else(|| needs(st, Stage::Indices))?;
                let dnbr = ix.dnbr.as_ref().ok_or_else(|| StageError::new(st, "no dNBR source for threshold detection"))?;
                (classify_burn(dnbr, t), Some(t))
            }
            (None, Some(path)) => {
                let g = grid_of(scenario, path).map_err(|e| StageError::new(st, e))?;
                (ingest_mask(&g).map_err(|e| StageError::new(st, e))?, None)
            }
            _ => return Err(StageError::new(st, "give exactly one of burn.threshold or burn.mask")),
        };
        let summary = mask.summary();
        ev.detection = Some(DetectionOutcome { mask, threshold, summary });
    }

    if on(Stage::Perimeters) {
        let det = ev.detection.as_ref().ok_or_else(|| needs(Stage::Perimeters, Stage::Detection))?;
        ev.perimeters = Some(extract_perimeters(&det.mask, cfg.burn.connectivity));
    }

    if on(Stage::Emissions) {
        ev.emissions = Some(run_emissions(scenario, cfg, &ev)?);
    }

    if on(Stage::Risk) {
        ev.risk = Some(run_risk(scenario, cfg, &ev)?);
    }

    if on(Stage::Insurance) {
        if let Some(ins) = &cfg.insurance {
            ev.insurance = Some(run_insurance(ins, &ev)?);
        }
    }
    Ok(ev)
}

fn run_emissions(scenario: &Scenario, cfg: &ScenarioConfig, ev: &Evaluation) -> Result<EmissionsOutcome, StageError> {
    let st = Stage::Emissions;
    let err = |e: &dyn ToString| StageError::new(st, e.to_string());
    let ix = ev.indices.as_ref().ok_or_else(|| needs(st, Stage::Indices))?;
    let perimeters = ev.perimeters.as_ref().ok_or_else(|| needs(st, Stage::Perimeters))?;
    let conv = Co2eConversion::new(cfg.emissions.non_co2_share, cfg.emissions.convention).map_err(|e| err(&e))?;
    let classes = ClassTable::new(cfg.vegetation_classes.iter().cloned()).map_err(|e| err(&e))?;
    let class_map = grid_of(scenario, &cfg.inputs.class_map).map_err(|e| err(&e))?;
    let pre_carbon = carbon_stock_map(&ix.pre_ndvi, &class_map, &classes).map_err(|e| err(&e))?;
    let per_fire = match cfg.emissions.pathway {
        EmissionsPathway::Severity => {
            let table = SeverityTable::new(cfg.severity_table.clone()).map_err(|e| err(&e))?;
            let dnbr = ix.dnbr.as_ref().ok_or_else(|| StageError::new(st, "severity pathway needs dNBR"))?;
            perimeters
                .iter()
                .map(|p| fire_emissions(p, &pre_carbon, dnbr, &table, &conv).map(|e| (p.component_id, e)))
                .collect::<Result<Vec<_>, _>>()
        }
        EmissionsPathway::StockDelta => {
            let post = ix
                .post_ndvi
                .as_ref()
                .ok_or_else(|| StageError::new(st, "stock_delta pathway needs post-fire NDVI"))?;
            let post_carbon = carbon_stock_map(post, &class_map, &classes).map_err(|e| err(&e))?;
            perimeters
                .iter()
                .map(|p| stock_delta_emissions(p, &pre_carbon, &post_carbon, &conv).map(|e| (p.component_id, e)))
                .collect::<Result<Vec<_>, _>>()
        }
    }
    .map_err(|e| err(&e))?;
    let total = EmissionsEstimate::total(per_fire.iter().map(|(_, e)| e), &conv);
    Ok(EmissionsOutcome {
        pathway: cfg.emissions.pathway,
        per_fire,
        total,
    })
}

fn run_risk(scenario: &Scenario, cfg: &ScenarioConfig, ev: &Evaluation) -> Result<RiskOutcome, StageError> {
    let st = Stage::Risk;
    let r = &cfg.risk;
    let history = scenario
        .fire_history(cfg)
        .transpose()
        .map_err(|e| StageError::new(st, e))?;
    let rate_from_history = history
        .as_ref()
        .map(|h| annual_fire_rate(h, r.smoothing))
        .transpose()
        .map_err(|e| StageError::new(st, e))?;
    let (p, p_source, annual) = match (r.p_wildfire, rate_from_history) {
        (Some(p), _) => {
            if r.horizon_years == 0 || !(0.0..=1.0).contains(&p) {
                return Err(StageError::new(st, format!("invalid p_wildfire {p} or horizon")));
            }
            // annual rate implied by the horizon probability
            let annual = 1.0 - (1.0 - p).powf(1.0 / r.horizon_years as f64);
            (p, Provenance::Config, Some(annual))
        }
        (None, Some(rate)) => {
            let p = horizon_probability(rate, r.horizon_years).map_err(|e| StageError::new(st, e))?;
            (p, Provenance::FireHistory, Some(rate))
        }
        (None, None) => (0.0, Provenance::Default, None),
    };
    let (e, e_source) = match r.e_wildfire_tco2e {
        Some(e) => (e, Provenance::Config),
        None => {
            let em = ev.emissions.as_ref().ok_or_else(|| {
                StageError::new(st, "e_wildfire_tCO2e is not set and the 'emissions' stage did not run")
            })?;
            (em.total.co2e_total_tonnes(), Provenance::Emissions)
        }
    };
    let assessment = assess(p, e, r.s_estimated_tco2e).map_err(|e| StageError::new(st, e))?;
    Ok(RiskOutcome {
        annual_fire_rate: annual,
        p_source,
        e_source,
        assessment,
    })
}

fn run_insurance(ins: &crate::scenario::InsuranceConfig, ev: &Evaluation) -> Result<InsuranceOutcome, StageError> {
    let st = Stage::Insurance;
    let scenario_p = ev.risk.as_ref().map(|r| r.assessment.p_wildfire);
    let mut policies = Vec::with_capacity(ins.policies.len());
    for (i, pc) in ins.policies.iter().enumerate() {
        let p = pc
            .p_wildfire
            .or(scenario_p)
            .ok_or_else(|| StageError::new(st, format!("policy {i} has no p_wildfire and the 'risk' stage did not run")))?;
        let policy = Policy {
            insured_credits_tco2e: pc.insured_credits_tco2e,
            credit_price: pc.credit_price,
            p_wildfire: p,
            expected_loss_fraction: pc.expected_loss_fraction,
            loading: pc.loading,
            risk_tier: pc.risk_tier.unwrap_or_else(|| RiskTier::from_probability(p)),
        };
        let quote = price_premium(&policy).map_err(|e| StageError::new(st, format!("policy {i}: {e}")))?;
        if !(0.0..=1.0).contains(&ins.p_threshold) {
            return Err(StageError::new(st, format!("p_threshold {} outside [0, 1]", ins.p_threshold)));
        }
        policies.push(PolicyOutcome {
            policy,
            quote,
            accepted: p <= ins.p_threshold,
        });
    }
    let claims = ins
        .claims
        .as_ref()
        .map(|c| {
            let pattern = c.pattern()?;
            estimate_ibnr(c.reported_to_date, c.elapsed_periods, &pattern).map_err(|e| e.to_string())
        })
        .transpose()
        .map_err(|e| StageError::new(st, e))?;
    Ok(InsuranceOutcome {
        p_threshold: ins.p_threshold,
        policies,
        claims,
    })
}

/// Overrides applied on top of the scenario's own run settings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub stages: Option<StageSet>,
}

impl RunOptions {
    pub fn effective_stages(&self, scenario: &Scenario) -> StageSet {
        self.stages.clone().unwrap_or_else(|| scenario.config().stage_set())
    }

    pub fn effective_seed(&self, scenario: &Scenario) -> u64 {
        self.seed
            .or_else(|| scenario.config().uncertainty.as_ref().map(|u| u.mc.seed))
            .unwrap_or(0)
    }
}

/// Content hash over the scenario document, the run settings and the bytes
/// of every referenced file.
pub fn input_digest(scenario: &Scenario, stages: &StageSet, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(b"pyrocarbon-input-v1\n");
    h.update(serde_json::to_vec(scenario.document()).expect("JSON values serialize"));
    let names: Vec<&str> = stages.iter().map(|s| s.name()).collect();
    h.update(format!("\nstages={}\nseed={seed}\n", names.join(",")).as_bytes());
    for (path, bytes) in scenario.files().raw_files() {
        h.update(format!("file {path} {}\n", bytes.len()).as_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Section<T> {
    Complete(T),
    Skipped { reason: String },
}

impl<T> Section<T> {
    fn skipped(reason: &str) -> Self {
        Section::Skipped { reason: reason.into() }
    }

    pub fn complete(&self) -> Option<&T> {
        match self {
            Section::Complete(t) => Some(t),
            Section::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndicesReport {
    pub ndvi_source: Provenance,
    pub pre_ndvi: GridStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_ndvi: Option<GridStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dnbr_source: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dnbr: Option<GridStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub from_mask: bool,
    #[serde(flatten)]
    pub summary: MaskSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerimeterReport {
    pub component_id: usize,
    pub pixel_count: usize,
    pub area_m2: f64,
    pub bounding_box: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerimetersReport {
    pub connectivity: Connectivity,
    pub count: usize,
    pub fires: Vec<PerimeterReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FireEmissions {
    pub component_id: usize,
    #[serde(flatten)]
    pub estimate: EmissionsEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmissionsReport {
    pub pathway: EmissionsPathway,
    pub per_fire: Vec<FireEmissions>,
    pub total: EmissionsEstimate,
    #[serde(rename = "co2e_total_tCO2e")]
    pub co2e_total_tco2e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub horizon_years: u32,
    pub smoothing: Smoothing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annual_fire_rate: Option<f64>,
    pub p_source: Provenance,
    pub e_source: Provenance,
    #[serde(flatten)]
    pub assessment: RiskAssessment,
    pub negative_adjusted_sequestration: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferReport {
    pub fire_rate: f64,
    pub loss_given_fire: DistributionSpec,
    #[serde(flatten)]
    pub summary: BufferSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyReport {
    pub index: usize,
    #[serde(flatten)]
    pub policy: Policy,
    #[serde(flatten)]
    pub quote: Quote,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsuranceReport {
    pub p_threshold: f64,
    pub policies: Vec<PolicyReport>,
    pub accepted: usize,
    pub declined: usize,
    pub expected_loss_total: f64,
    pub premium_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claims: Option<IbnrEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub output: OutputName,
    pub rows: Vec<SensitivityRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvpiReport {
    pub policy: usize,
    pub premium: f64,
    #[serde(flatten)]
    pub estimate: EvpiEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyReport {
    pub settings: McSettings,
    pub parameters: ParamSet,
    pub outputs: BTreeMap<OutputName, MonteCarloSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evpi: Option<EvpiReport>,
}

/// The full run report. Serialization is deterministic: no timestamps,
/// sorted maps, shortest round-trip floats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub engine_version: String,
    pub scenario_id: String,
    pub input_digest: String,
    pub seed: u64,
    pub indices: Section<IndicesReport>,
    pub detection: Section<DetectionReport>,
    pub perimeters: Section<PerimetersReport>,
    pub emissions: Section<EmissionsReport>,
    pub risk: Section<RiskReport>,
    pub buffer: Section<BufferReport>,
    pub insurance: Section<InsuranceReport>,
    pub uncertainty: Section<UncertaintyReport>,
    pub warnings: Vec<Finding>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Scalar output read back from the completed sections.
    pub fn output(&self, name: OutputName) -> Option<f64> {
        let em = self.emissions.complete().map(|e| &e.total);
        let risk = self.risk.complete().map(|r| &r.assessment);
        let ins = self.insurance.complete();
        match name {
            OutputName::BurnedAreaM2 => self.detection.complete().map(|d| d.summary.burned_area_m2),
            OutputName::CarbonLossKgc => em.map(|e| e.carbon_loss_kgc),
            OutputName::Co2Kg => em.map(|e| e.co2_kg),
            OutputName::Co2eTotalKg => em.map(|e| e.co2e_total_kg),
            OutputName::PWildfire => risk.map(|r| r.p_wildfire),
            OutputName::EWildfireTco2e => risk.map(|r| r.e_wildfire_tco2e),
            OutputName::EExpectedTco2e => risk.map(|r| r.e_expected_tco2e),
            OutputName::SAdjustedTco2e => risk.map(|r| r.s_adjusted_tco2e),
            OutputName::ExpectedLossTotal => ins.map(|i| i.expected_loss_total),
            OutputName::PremiumTotal => ins.map(|i| i.premium_total),
            OutputName::Ibnr => ins.and_then(|i| i.claims).map(|c| c.ibnr),
        }
    }

    pub fn outputs(&self) -> BTreeMap<String, f64> {
        OutputName::ALL
            .into_iter()
            .filter_map(|o| self.output(o).map(|v| (o.name().to_string(), v)))
            .collect()
    }
}

fn section<T>(enabled: bool, value: Option<T>) -> Section<T> {
    match (enabled, value) {
        (false, _) => Section::skipped("disabled"),
        (true, Some(v)) => Section::Complete(v),
        (true, None) => Section::skipped("not configured"),
    }
}

/// Validates and runs a scenario end to end.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Report, PipelineError> {
    let stages = opts.effective_stages(scenario);
    let seed = opts.effective_seed(scenario);
    let findings = validate_stages(scenario, &stages);
    if has_errors(&findings) {
        return Err(PipelineError::Validation(findings));
    }
    let cfg = scenario.config();
    let ev = evaluate(scenario, cfg, &stages)?;
    let on = |s: Stage| stages.contains(&s);

    let buffer = if on(Stage::Buffer) { run_buffer(cfg, &ev, seed)? } else { None };
    let uncertainty = if on(Stage::Uncertainty) {
        run_uncertainty(scenario, &ev, seed)?
    } else {
        None
    };

    let indices = ev.indices.as_ref().map(|ix| IndicesReport {
        ndvi_source: ix.ndvi_source,
        pre_ndvi: ix.pre_ndvi.stats(),
        post_ndvi: ix.post_ndvi.as_ref().map(|g| g.stats()),
        dnbr_source: ix.dnbr_source,
        dnbr: ix.dnbr.as_ref().map(|g| g.stats()),
    });
    let detection = ev.detection.as_ref().map(|d| DetectionReport {
        threshold: d.threshold,
        from_mask: d.threshold.is_none(),
        summary: d.summary,
    });
    let perimeters = ev.perimeters.as_ref().map(|ps| PerimetersReport {
        connectivity: cfg.burn.connectivity,
        count: ps.len(),
        fires: ps
            .iter()
            .map(|p| PerimeterReport {
                component_id: p.component_id,
                pixel_count: p.pixel_count(),
                area_m2: p.area_m2,
                bounding_box: p.bounding_box,
            })
            .collect(),
    });
    let emissions = ev.emissions.as_ref().map(|e| EmissionsReport {
        pathway: e.pathway,
        per_fire: e
            .per_fire
            .iter()
            .map(|(id, est)| FireEmissions {
                component_id: *id,
                estimate: *est,
            })
            .collect(),
        total: e.total,
        co2e_total_tco2e: e.total.co2e_total_tonnes(),
    });
    let risk = ev.risk.as_ref().map(|r| RiskReport {
        horizon_years: cfg.risk.horizon_years,
        smoothing: cfg.risk.smoothing,
        annual_fire_rate: r.annual_fire_rate,
        p_source: r.p_source,
        e_source: r.e_source,
        assessment: r.assessment,
        negative_adjusted_sequestration: r.assessment.is_negative(),
    });
    let insurance = ev.insurance.as_ref().map(|i| InsuranceReport {
        p_threshold: i.p_threshold,
        policies: i
            .policies
            .iter()
            .enumerate()
            .map(|(index, p)| PolicyReport {
                index,
                policy: p.policy,
                quote: p.quote,
                accepted: p.accepted,
            })
            .collect(),
        accepted: i.accepted().count(),
        declined: i.policies.len() - i.accepted().count(),
        expected_loss_total: i.expected_loss_total(),
        premium_total: i.premium_total(),
        claims: i.claims,
    });

    Ok(Report {
        engine_version: ENGINE_VERSION.to_string(),
        scenario_id: cfg.id.clone(),
        input_digest: input_digest(scenario, &stages, seed),
        seed,
        indices: section(on(Stage::Indices), indices),
        detection: section(on(Stage::Detection), detection),
        perimeters: section(on(Stage::Perimeters), perimeters),
        emissions: section(on(Stage::Emissions), emissions),
        risk: section(on(Stage::Risk), risk),
        buffer: section(on(Stage::Buffer), buffer),
        insurance: section(on(Stage::Insurance), insurance),
        uncertainty: section(on(Stage::Uncertainty), uncertainty),
        warnings: findings.into_iter().filter(|f| f.severity == Severity::Warning).collect(),
    })
}

fn run_buffer(cfg: &ScenarioConfig, ev: &Evaluation, seed: u64) -> Result<Option<BufferReport>, StageError> {
    let st = Stage::Buffer;
    let Some(b) = &cfg.buffer else { return Ok(None) };
    let risk = ev.risk.as_ref();
    let fire_rate = match (b.fire_rate, risk.and_then(|r| r.annual_fire_rate)) {
        (Some(r), _) => r,
        (None, Some(r)) => r,
        (None, None) if risk.is_some() => 0.0,
        (None, None) => return Err(StageError::new(st, "fire_rate is not set and the 'risk' stage did not run")),
    };
    let loss_given_fire = match (b.loss_given_fire_tco2e, risk) {
        (Some(l), _) => DistributionSpec::from(l),
        (None, Some(r)) => DistributionSpec::point(r.assessment.e_wildfire_tco2e),
        (None, None) => {
            return Err(StageError::new(st, "loss_given_fire_tCO2e is not set and the 'risk' stage did not run"))
        }
    };
    let sim = BufferSimulation {
        pool: BufferPool {
            balance_tco2e: b.initial_balance_tco2e,
            contribution_rate: b.contribution_rate,
        },
        annual_issuance_tco2e: b.annual_issuance_tco2e,
        fire_rate,
        loss_given_fire,
        years: b.years,
    };
    let summary = simulate_buffer_replicates(&sim, b.replicates, seed).map_err(|e| StageError::new(st, e))?;
    Ok(Some(BufferReport {
        fire_rate,
        loss_given_fire,
        summary,
    }))
}

/// Deterministic stages needed to produce scalar outputs.
fn output_stages() -> StageSet {
    all_stages()
        .into_iter()
        .filter(|s| !matches!(s, Stage::Buffer | Stage::Uncertainty))
        .collect()
}

/// Evaluates `outputs` with the numeric parameters in `sample` set by JSON pointer.
pub fn evaluate_sample(scenario: &Scenario, sample: &Sample, outputs: &[OutputName]) -> Result<Vec<f64>, String> {
    let cfg = scenario.config_with_values(sample)?;
    let ev = evaluate(scenario, &cfg, &output_stages()).map_err(|e| e.to_string())?;
    outputs.iter().map(|o| ev.require(*o)).collect()
}

fn run_uncertainty(scenario: &Scenario, base: &Evaluation, seed: u64) -> Result<Option<UncertaintyReport>, StageError> {
    let st = Stage::Uncertainty;
    let Some(u) = &scenario.config().uncertainty else { return Ok(None) };
    let mut settings = u.mc;
    settings.seed = seed;
    let params: ParamSet = u.distributions.clone();
    let summaries = propagate_outputs(&params, &settings, u.outputs.len(), |s| {
        evaluate_sample(scenario, s, &u.outputs)
    })
    .map_err(|e| StageError::new(st, e))?;
    let outputs = u.outputs.iter().copied().zip(summaries).collect();

    let sensitivity = if u.sensitivity.is_empty() {
        None
    } else {
        let base_sample: Sample = u
            .sensitivity
            .iter()
            .filter_map(|s| number_at(scenario.document(), &s.parameter).map(|v| (s.parameter.clone(), v)))
            .collect();
        let out = u.sensitivity_output;
        let rows = sensitivity(&base_sample, &u.sensitivity, |s| {
            evaluate_sample(scenario, s, &[out]).map(|v| v[0])
        })
        .map_err(|e| StageError::new(st, e))?;
        Some(SensitivityReport { output: out, rows })
    };

    let evpi_report = match &u.evpi {
        None => None,
        Some(e) => {
            let priced = match &base.insurance {
                Some(_) => None,
                None => Some(evaluate(scenario, scenario.config(), &output_stages())?),
            };
            let premium = priced
                .as_ref()
                .unwrap_or(base)
                .insurance
                .as_ref()
                .and_then(|i| i.policies.get(e.policy))
                .map(|p| p.quote.premium)
                .ok_or_else(|| StageError::new(st, format!("EVPI policy {} was not priced", e.policy)))?;
            let idx = e.policy;
            let estimate = evpi(&params, &settings, |action, s| -> Result<f64, String> {
                match action {
                    Action::Decline => Ok(0.0),
                    Action::Act => {
                        let cfg = scenario.config_with_values(s)?;
                        let ev = evaluate(scenario, &cfg, &output_stages()).map_err(|e| e.to_string())?;
                        let loss = ev
                            .insurance
                            .as_ref()
                            .and_then(|i| i.policies.get(idx))
                            .map(|p| p.quote.expected_loss)
                            .ok_or("policy not priced")?;
                        Ok(premium - loss)
                    }
                }
            })
            .map_err(|e| StageError::new(st, e))?;
            Some(EvpiReport {
                policy: idx,
                premium,
                estimate,
            })
        }
    };

    Ok(Some(UncertaintyReport {
        settings,
        parameters: params,
        outputs,
        sensitivity,
        evpi: evpi_report,
    }))
}
