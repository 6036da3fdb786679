//! Declarative scenarios: the JSON document, the files it references, what-if
//! overrides and validation findings.
//!
//! A scenario is one JSON file; rasters and CSV histories are referenced by
//! paths relative to the scenario's directory. Overrides address any value in
//! the document with a JSON pointer (`/risk/p_wildfire`,
//! `/vegetation_classes/0/agb_a`), and the same pointers name the uncertain
//! parameters of a Monte Carlo run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::carbon::{validate_severity_entries, Co2eConvention, SeverityEntry, VegetationClass};
use crate::fire::{ingest_mask, Connectivity};
use crate::insurance::{ReportingPattern, RiskTier};
use crate::raster::{check_reflectance, parse_grid, Band, RasterGrid, ReflectanceCheck};
use crate::risk::{FireHistory, FireRecord, Smoothing};
use crate::uncertainty::{DistributionSpec, McSettings, Swing, ValueOrDistribution};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A validation result tied to a location in the scenario document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    /// JSON pointer into the scenario document; empty for the whole document.
    pub path: String,
    pub message: String,
}

impl Finding {
    pub fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{sev} at {path}: {}", self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(Finding::is_error)
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Indices,
    Detection,
    Perimeters,
    Emissions,
    Risk,
    Buffer,
    Insurance,
    Uncertainty,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Indices,
        Stage::Detection,
        Stage::Perimeters,
        Stage::Emissions,
        Stage::Risk,
        Stage::Buffer,
        Stage::Insurance,
        Stage::Uncertainty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Indices => "indices",
            Stage::Detection => "detection",
            Stage::Perimeters => "perimeters",
            Stage::Emissions => "emissions",
            Stage::Risk => "risk",
            Stage::Buffer => "buffer",
            Stage::Insurance => "insurance",
            Stage::Uncertainty => "uncertainty",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

pub type StageSet = BTreeSet<Stage>;

pub fn all_stages() -> StageSet {
    Stage::ALL.into_iter().collect()
}

/// Scalar outputs that can be reported, swept or propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputName {
    BurnedAreaM2,
    CarbonLossKgc,
    Co2Kg,
    Co2eTotalKg,
    PWildfire,
    EWildfireTco2e,
    EExpectedTco2e,
    SAdjustedTco2e,
    ExpectedLossTotal,
    PremiumTotal,
    Ibnr,
}

impl OutputName {
    pub const ALL: [OutputName; 11] = [
        OutputName::BurnedAreaM2,
        OutputName::CarbonLossKgc,
        OutputName::Co2Kg,
        OutputName::Co2eTotalKg,
        OutputName::PWildfire,
        OutputName::EWildfireTco2e,
        OutputName::EExpectedTco2e,
        OutputName::SAdjustedTco2e,
        OutputName::ExpectedLossTotal,
        OutputName::PremiumTotal,
        OutputName::Ibnr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutputName::BurnedAreaM2 => "burned_area_m2",
            OutputName::CarbonLossKgc => "carbon_loss_kgc",
            OutputName::Co2Kg => "co2_kg",
            OutputName::Co2eTotalKg => "co2e_total_kg",
            OutputName::PWildfire => "p_wildfire",
            OutputName::EWildfireTco2e => "e_wildfire_tco2e",
            OutputName::EExpectedTco2e => "e_expected_tco2e",
            OutputName::SAdjustedTco2e => "s_adjusted_tco2e",
            OutputName::ExpectedLossTotal => "expected_loss_total",
            OutputName::PremiumTotal => "premium_total",
            OutputName::Ibnr => "ibnr",
        }
    }
}

impl fmt::Display for OutputName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for OutputName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutputName::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| format!("unknown output '{s}'"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputsConfig {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pre_bands: BTreeMap<Band, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub post_bands: BTreeMap<Band, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_ndvi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_ndvi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_nbr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_nbr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dnbr: Option<String>,
    pub class_map: String,
    #[serde(default)]
    pub reflectance_check: ReflectanceCheck,
    /// Additive perturbation of every NDVI cell, for index noise studies.
    #[serde(default)]
    pub ndvi_offset: f64,
    /// Additive perturbation of every dNBR cell.
    #[serde(default)]
    pub dnbr_offset: f64,
}

impl InputsConfig {
    /// Every raster reference with its JSON pointer.
    pub fn raster_refs(&self) -> Vec<(String, String)> {
        let mut refs = Vec::new();
        for (b, p) in &self.pre_bands {
            refs.push((format!("/inputs/pre_bands/{b}"), p.clone()));
        }
        for (b, p) in &self.post_bands {
            refs.push((format!("/inputs/post_bands/{b}"), p.clone()));
        }
        let singles = [
            ("pre_ndvi", &self.pre_ndvi),
            ("post_ndvi", &self.post_ndvi),
            ("pre_nbr", &self.pre_nbr),
            ("post_nbr", &self.post_nbr),
            ("dnbr", &self.dnbr),
        ];
        for (key, p) in singles {
            if let Some(p) = p {
                refs.push((format!("/inputs/{key}"), p.clone()));
            }
        }
        refs.push(("/inputs/class_map".into(), self.class_map.clone()));
        refs
    }

    fn has_bands(bands: &BTreeMap<Band, String>, needed: [Band; 2]) -> bool {
        needed.iter().all(|b| bands.contains_key(b))
    }

    pub fn can_make_pre_ndvi(&self) -> bool {
        self.pre_ndvi.is_some() || Self::has_bands(&self.pre_bands, [Band::Nir, Band::Red])
    }

    pub fn can_make_post_ndvi(&self) -> bool {
        self.post_ndvi.is_some() || Self::has_bands(&self.post_bands, [Band::Nir, Band::Red])
    }

    pub fn can_make_dnbr(&self) -> bool {
        let pre = self.pre_nbr.is_some() || Self::has_bands(&self.pre_bands, [Band::Nir, Band::Swir]);
        let post = self.post_nbr.is_some() || Self::has_bands(&self.post_bands, [Band::Nir, Band::Swir]);
        self.dnbr.is_some() || (pre && post)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurnConfig {
    /// dNBR threshold; pixels at or above it are burned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// External 0/1 mask grid, used instead of a threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default)]
    pub connectivity: Connectivity,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionsPathway {
    /// Pre-fire stock times the combustion fraction of the dNBR severity class.
    #[default]
    Severity,
    /// Pre-fire minus post-fire carbon stock.
    StockDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissionsConfig {
    pub non_co2_share: f64,
    #[serde(default)]
    pub convention: Co2eConvention,
    #[serde(default)]
    pub pathway: EmissionsPathway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireHistoryConfig {
    pub observation_years: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_year: Option<i32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<FireRecord>,
    /// CSV file with `year,emissions_tCO2e` rows, appended to `events`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    #[serde(default = "one")]
    pub horizon_years: u32,
    #[serde(default)]
    pub smoothing: Smoothing,
    /// Horizon fire probability; estimated from the fire history when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_wildfire: Option<f64>,
    /// Emissions if a fire occurs within the horizon; taken from this
    /// scene's detected fires when absent.
    #[serde(default, rename = "e_wildfire_tCO2e", alias = "e_wildfire_tco2e", skip_serializing_if = "Option::is_none")]
    pub e_wildfire_tco2e: Option<f64>,
    #[serde(rename = "s_estimated_tCO2e", alias = "s_estimated_tco2e")]
    pub s_estimated_tco2e: f64,
}

fn default_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferConfig {
    #[serde(rename = "initial_balance_tCO2e", alias = "initial_balance_tco2e")]
    pub initial_balance_tco2e: f64,
    pub contribution_rate: f64,
    #[serde(rename = "annual_issuance_tCO2e", alias = "annual_issuance_tco2e")]
    pub annual_issuance_tco2e: f64,
    /// Annual fire probability; defaults to the annual rate behind P(W).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fire_rate: Option<f64>,
    /// Defaults to a point at E(W).
    #[serde(default, rename = "loss_given_fire_tCO2e", alias = "loss_given_fire_tco2e", skip_serializing_if = "Option::is_none")]
    pub loss_given_fire_tco2e: Option<ValueOrDistribution>,
    pub years: u32,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(rename = "insured_credits_tCO2e", alias = "insured_credits_tco2e")]
    pub insured_credits_tco2e: f64,
    pub credit_price: f64,
    /// Defaults to the scenario's P(W).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_wildfire: Option<f64>,
    pub expected_loss_fraction: f64,
    #[serde(default)]
    pub loading: f64,
    /// Derived from the policy's fire probability when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_tier: Option<RiskTier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimsConfig {
    pub reported_to_date: f64,
    pub elapsed_periods: usize,
    pub reporting_pattern: Vec<f64>,
}

impl ClaimsConfig {
    pub fn pattern(&self) -> Result<ReportingPattern, String> {
        ReportingPattern::new(self.reporting_pattern.clone()).map_err(|e| e.to_string())
    }
}

fn full_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsuranceConfig {
    #[serde(default = "full_threshold")]
    pub p_threshold: f64,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claims: Option<ClaimsConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvpiConfig {
    /// Index into `insurance.policies` of the policy being underwritten.
    pub policy: usize,
}

fn default_outputs() -> Vec<OutputName> {
    vec![
        OutputName::Co2eTotalKg,
        OutputName::EExpectedTco2e,
        OutputName::SAdjustedTco2e,
    ]
}

fn default_sensitivity_output() -> OutputName {
    OutputName::SAdjustedTco2e
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub mc: McSettings,
    /// Uncertain parameters keyed by JSON pointer.
    #[serde(default)]
    pub distributions: BTreeMap<String, DistributionSpec>,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputName>,
    /// One-at-a-time swings; `parameter` is a JSON pointer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivity: Vec<Swing>,
    #[serde(default = "default_sensitivity_output")]
    pub sensitivity_output: OutputName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evpi: Option<EvpiConfig>,
}

/// The full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub inputs: InputsConfig,
    pub burn: BurnConfig,
    pub vegetation_classes: Vec<VegetationClass>,
    pub severity_table: Vec<SeverityEntry>,
    pub emissions: EmissionsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fire_history: Option<FireHistoryConfig>,
    pub risk: RiskConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<BufferConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insurance: Option<InsuranceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<UncertaintyConfig>,
    /// Stages to run; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<Stage>>,
}

impl ScenarioConfig {
    pub fn stage_set(&self) -> StageSet {
        match &self.stages {
            Some(list) => list.iter().copied().collect(),
            None => all_stages(),
        }
    }
}

/// Raw bytes and parsed contents of the files a scenario references, keyed by
/// the path string as written in the document.
#[derive(Debug, Clone, Default)]
pub struct FileCache {
    raw: BTreeMap<String, Arc<[u8]>>,
    grids: BTreeMap<String, Arc<RasterGrid>>,
    records: BTreeMap<String, Arc<Vec<FireRecord>>>,
}

impl FileCache {
    pub fn grid(&self, path: &str) -> Option<&Arc<RasterGrid>> {
        self.grids.get(path)
    }

    pub fn records(&self, path: &str) -> Option<&Arc<Vec<FireRecord>>> {
        self.records.get(path)
    }

    /// File contents in path order.
    pub fn raw_files(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.raw.iter().map(|(k, v)| (k.as_str(), &**v))
    }

    fn read(&mut self, root: &Path, pointer: &str, path: &str) -> Result<Arc<[u8]>, Finding> {
        if let Some(bytes) = self.raw.get(path) {
            return Ok(bytes.clone());
        }
        let full = root.join(path);
        let bytes: Arc<[u8]> = fs::read(&full)
            .map_err(|e| Finding::error(pointer, format!("cannot read '{path}': {e}")))?
            .into();
        self.raw.insert(path.to_string(), bytes.clone());
        Ok(bytes)
    }

    fn load_grid(&mut self, root: &Path, pointer: &str, path: &str) -> Result<Arc<RasterGrid>, Finding> {
        if let Some(g) = self.grids.get(path) {
            return Ok(g.clone());
        }
        let bytes = self.read(root, pointer, path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Finding::error(pointer, format!("'{path}' is not UTF-8 text")))?;
        let grid = Arc::new(
            parse_grid(text).map_err(|e| Finding::error(pointer, format!("cannot parse '{path}': {e}")))?,
        );
        self.grids.insert(path.to_string(), grid.clone());
        Ok(grid)
    }

    fn load_records(&mut self, root: &Path, pointer: &str, path: &str) -> Result<(), Finding> {
        if self.records.contains_key(path) {
            return Ok(());
        }
        let bytes = self.read(root, pointer, path)?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(&*bytes);
        let records = rdr
            .deserialize()
            .collect::<Result<Vec<FireRecord>, _>>()
            .map_err(|e| Finding::error(pointer, format!("cannot parse '{path}': {e}")))?;
        self.records.insert(path.to_string(), Arc::new(records));
        Ok(())
    }

    /// Loads everything `config` references; failures become findings.
    pub fn load_for(&mut self, root: &Path, config: &ScenarioConfig) -> Vec<Finding> {
        let mut findings = Vec::new();
        for (pointer, path) in config.inputs.raster_refs() {
            if let Err(f) = self.load_grid(root, &pointer, &path) {
                findings.push(f);
            }
        }
        if let Some(mask) = &config.burn.mask {
            if let Err(f) = self.load_grid(root, "/burn/mask", mask) {
                findings.push(f);
            }
        }
        if let Some(csv) = config.fire_history.as_ref().and_then(|h| h.csv.as_ref()) {
            if let Err(f) = self.load_records(root, "/fire_history/csv", csv) {
                findings.push(f);
            }
        }
        findings
    }

    /// The subset of cached files referenced by `config`.
    pub fn restricted_to(&self, config: &ScenarioConfig) -> FileCache {
        let mut wanted: BTreeSet<String> = config.inputs.raster_refs().into_iter().map(|(_, p)| p).collect();
        wanted.extend(config.burn.mask.clone());
        wanted.extend(config.fire_history.as_ref().and_then(|h| h.csv.clone()));
        FileCache {
            raw: self.raw.iter().filter(|(k, _)| wanted.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
            grids: self.grids.iter().filter(|(k, _)| wanted.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
            records: self.records.iter().filter(|(k, _)| wanted.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect(),
        }
    }
}

/// One what-if edit: set the value at a JSON pointer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

fn unescape_token(tok: &str) -> String {
    tok.replace("~1", "/").replace("~0", "~")
}

/// Sets `value` at `pointer`. The parent must exist; object members are
/// created or replaced, array elements must already exist.
pub fn apply_override(doc: &mut Value, pointer: &str, value: Value) -> Result<(), String> {
    if !pointer.starts_with('/') {
        return Err(format!("path '{pointer}' must be a JSON pointer starting with '/'"));
    }
    let split = pointer.rfind('/').expect("starts with '/'");
    let (parent_ptr, last) = (&pointer[..split], unescape_token(&pointer[split + 1..]));
    let parent = doc
        .pointer_mut(parent_ptr)
        .ok_or_else(|| format!("path '{pointer}': parent '{parent_ptr}' does not exist"))?;
    match parent {
        Value::Object(map) => {
            map.insert(last, value);
            Ok(())
        }
        Value::Array(items) => {
            let idx: usize = last
                .parse()
                .map_err(|_| format!("path '{pointer}': '{last}' is not an array index"))?;
            let len = items.len();
            let slot = items
                .get_mut(idx)
                .ok_or_else(|| format!("path '{pointer}': index {idx} out of range for array of {len}"))?;
            *slot = value;
            Ok(())
        }
        _ => Err(format!("path '{pointer}': parent '{parent_ptr}' is not an object or array")),
    }
}

/// Reads a number at `pointer`, if one is there.
pub fn number_at(doc: &Value, pointer: &str) -> Option<f64> {
    doc.pointer(pointer).and_then(Value::as_f64)
}

fn json_finding(e: &serde_json::Error) -> Finding {
    Finding::error("", format!("scenario does not match the schema: {e}"))
}

/// A parsed scenario with its referenced files loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    document: Value,
    config: ScenarioConfig,
    root: PathBuf,
    files: Arc<FileCache>,
    load_findings: Vec<Finding>,
}

impl Scenario {
    /// Reads a scenario JSON file; referenced paths resolve against its directory.
    pub fn open(path: impl AsRef<Path>) -> Result<Result<Scenario, Vec<Finding>>, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let document: Value = serde_json::from_str(&text)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Scenario::from_document(document, root))
    }

    /// Builds a scenario from an in-memory document. Schema mismatches come
    /// back as findings; unreadable files are kept as findings on the
    /// scenario and reported by [`validate`].
    pub fn from_document(document: Value, root: impl Into<PathBuf>) -> Result<Scenario, Vec<Finding>> {
        let config: ScenarioConfig = serde_json::from_value(document.clone()).map_err(|e| vec![json_finding(&e)])?;
        let root = root.into();
        let mut files = FileCache::default();
        let load_findings = files.load_for(&root, &config);
        Ok(Scenario {
            document,
            config,
            root,
            files: Arc::new(files),
            load_findings,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn document(&self) -> &Value {
        &self.document
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &FileCache {
        &self.files
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    /// A new scenario with `overrides` applied; the receiver is unchanged.
    pub fn with_overrides(&self, overrides: &[Override]) -> Result<Scenario, Vec<Finding>> {
        let mut doc = self.document.clone();
        let mut findings = Vec::new();
        for o in overrides {
            if let Err(msg) = apply_override(&mut doc, &o.path, o.value.clone()) {
                findings.push(Finding::error(o.path.clone(), msg));
            }
        }
        if !findings.is_empty() {
            return Err(findings);
        }
        let config: ScenarioConfig = serde_json::from_value(doc.clone()).map_err(|e| vec![json_finding(&e)])?;
        let mut files = self.files.restricted_to(&config);
        let load_findings = files.load_for(&self.root, &config);
        Ok(Scenario {
            document: doc,
            config,
            root: self.root.clone(),
            files: Arc::new(files),
            load_findings,
        })
    }

    /// Config with numeric overrides applied, without touching the file cache.
    /// Used per Monte Carlo replicate.
    pub fn config_with_values(&self, values: &BTreeMap<String, f64>) -> Result<ScenarioConfig, String> {
        if values.is_empty() {
            return Ok(self.config.clone());
        }
        let mut doc = self.document.clone();
        for (path, v) in values {
            let n = serde_json::Number::from_f64(*v).ok_or_else(|| format!("{path}: non-finite value {v}"))?;
            apply_override(&mut doc, path, Value::Number(n))?;
        }
        serde_json::from_value(doc).map_err(|e| e.to_string())
    }

    pub(crate) fn load_findings(&self) -> &[Finding] {
        &self.load_findings
    }

    /// Fire history with CSV events merged in.
    pub fn fire_history(&self, config: &ScenarioConfig) -> Option<Result<FireHistory, String>> {
        let h = config.fire_history.as_ref()?;
        let mut events = h.events.clone();
        if let Some(csv) = &h.csv {
            match self.files.records(csv) {
                Some(r) => events.extend(r.iter().cloned()),
                None => return Some(Err(format!("fire history CSV '{csv}' not loaded"))),
            }
        }
        Some(FireHistory::new(h.observation_years, h.first_year, events).map_err(|e| e.to_string()))
    }
}

/// Structural and semantic checks of a scenario. Errors block a run;
/// warnings are carried into the report. The base point is evaluated when
/// no structural error is found, so evaluation failures and a negative
/// adjusted sequestration surface here as well.
pub fn validate(scenario: &Scenario) -> Vec<Finding> {
    validate_stages(scenario, &scenario.config().stage_set())
}

/// [`validate`] with the base evaluation limited to `stages`.
pub fn validate_stages(scenario: &Scenario, stages: &StageSet) -> Vec<Finding> {
    let mut out: Vec<Finding> = scenario.load_findings().to_vec();
    let cfg = scenario.config();
    let files = scenario.files();

    check_inputs(cfg, files, &mut out);
    check_burn(cfg, files, &mut out);

    for (i, c) in cfg.vegetation_classes.iter().enumerate() {
        if let Err(e) = c.validate() {
            out.push(Finding::error(format!("/vegetation_classes/{i}"), e.to_string()));
        }
    }
    let mut ids = BTreeSet::new();
    for (i, c) in cfg.vegetation_classes.iter().enumerate() {
        if !ids.insert(c.class_id) {
            out.push(Finding::error(
                format!("/vegetation_classes/{i}/class_id"),
                format!("duplicate class id {}", c.class_id),
            ));
        }
    }
    if let Err(msg) = validate_severity_entries(&cfg.severity_table) {
        out.push(Finding::error("/severity_table", format!("severity table rule violated: {msg}")));
    }
    if !(0.0..0.5).contains(&cfg.emissions.non_co2_share) {
        out.push(Finding::error(
            "/emissions/non_co2_share",
            format!("non_co2_share must lie in [0, 0.5), got {}", cfg.emissions.non_co2_share),
        ));
    }
    if cfg.emissions.pathway == EmissionsPathway::StockDelta && !cfg.inputs.can_make_post_ndvi() {
        out.push(Finding::error(
            "/emissions/pathway",
            "stock_delta pathway needs post_ndvi or post-fire nir and red bands",
        ));
    }
    if cfg.emissions.pathway == EmissionsPathway::Severity && !cfg.inputs.can_make_dnbr() {
        out.push(Finding::error("/emissions/pathway", "severity pathway needs a dNBR source"));
    }

    if let Some(Err(msg)) = scenario.fire_history(cfg) {
        out.push(Finding::error("/fire_history", msg));
    }
    check_risk(cfg, &mut out);
    check_buffer(cfg, &mut out);
    check_insurance(cfg, &mut out);
    check_uncertainty(scenario, &mut out);

    if !has_errors(&out) {
        match crate::pipeline::evaluate(scenario, cfg, stages) {
            Ok(eval) => {
                if let Some(r) = &eval.risk {
                    if r.assessment.is_negative() {
                        out.push(Finding::warning(
                            "/risk/s_estimated_tCO2e",
                            format!(
                                "adjusted sequestration is negative at base values ({} tCO2e): expected wildfire emissions exceed estimated sequestration",
                                r.assessment.s_adjusted_tco2e
                            ),
                        ));
                    }
                }
                if let Some(d) = &eval.detection {
                    if d.summary.unknown_pixels > 0 {
                        out.push(Finding::warning(
                            "/burn",
                            format!(
                                "{} pixel(s) ({} m2) have unknown burn state and are excluded from perimeters",
                                d.summary.unknown_pixels, d.summary.unknown_area_m2
                            ),
                        ));
                    }
                }
            }
            Err(e) => out.push(Finding::error(format!("/stages/{}", e.stage), e.to_string())),
        }
    }
    out
}

fn check_inputs(cfg: &ScenarioConfig, files: &FileCache, out: &mut Vec<Finding>) {
    let inputs = &cfg.inputs;
    if !inputs.can_make_pre_ndvi() {
        out.push(Finding::error("/inputs", "no pre-fire NDVI source: give pre_ndvi or pre_bands nir and red"));
    }
    for (key, v) in [("ndvi_offset", inputs.ndvi_offset), ("dnbr_offset", inputs.dnbr_offset)] {
        if !v.is_finite() {
            out.push(Finding::error(format!("/inputs/{key}"), "offset must be finite"));
        }
    }
    let mut reference: Option<(String, &RasterGrid)> = None;
    for (pointer, path) in inputs.raster_refs() {
        let Some(grid) = files.grid(&path) else { continue };
        match &reference {
            None => reference = Some((pointer.clone(), grid)),
            Some((ref_ptr, ref_grid)) => {
                if !grid.congruent_with(ref_grid) {
                    out.push(Finding::error(
                        pointer.clone(),
                        format!("grid '{path}' is not congruent with {ref_ptr}"),
                    ));
                }
            }
        }
        if pointer.contains("_bands/") {
            match check_reflectance(grid, inputs.reflectance_check) {
                Err(e) => out.push(Finding::error(pointer.clone(), e.to_string())),
                Ok(rep) if !rep.out_of_range.is_empty() => out.push(Finding::warning(
                    pointer.clone(),
                    format!("{} reflectance value(s) outside [0, 1]", rep.out_of_range.len()),
                )),
                Ok(_) => {}
            }
        }
    }
    if let Some(class_map) = files.grid(&inputs.class_map) {
        let known: BTreeSet<i64> = cfg.vegetation_classes.iter().map(|c| c.class_id).collect();
        let mut missing = BTreeSet::new();
        let mut fractional = 0usize;
        for v in class_map.valid_values() {
            match crate::carbon::class_id_of(v) {
                Some(id) if !known.contains(&id) => {
                    missing.insert(id);
                }
                Some(_) => {}
                None => fractional += 1,
            }
        }
        for id in missing {
            out.push(Finding::error(
                "/inputs/class_map",
                format!("class map references vegetation class {id}, which is not in vegetation_classes"),
            ));
        }
        if fractional > 0 {
            out.push(Finding::error(
                "/inputs/class_map",
                format!("{fractional} class map cell(s) are not integer class ids"),
            ));
        }
    }
}

fn check_burn(cfg: &ScenarioConfig, files: &FileCache, out: &mut Vec<Finding>) {
    match (&cfg.burn.threshold, &cfg.burn.mask) {
        (Some(_), Some(_)) | (None, None) => {
            out.push(Finding::error("/burn", "give exactly one of threshold or mask"));
        }
        (Some(t), None) => {
            if !t.is_finite() {
                out.push(Finding::error("/burn/threshold", "threshold must be finite"));
            }
            if !cfg.inputs.can_make_dnbr() {
                out.push(Finding::error("/burn/threshold", "threshold detection needs a dNBR source"));
            }
        }
        (None, Some(mask)) => {
            if let Some(grid) = files.grid(mask) {
                if let Err(e) = ingest_mask(grid) {
                    out.push(Finding::error("/burn/mask", e.to_string()));
                }
                if let Some(class_map) = files.grid(&cfg.inputs.class_map) {
                    if !grid.congruent_with(class_map) {
                        out.push(Finding::error("/burn/mask", "mask is not congruent with the input grids"));
                    }
                }
            }
        }
    }
}

fn check_range(out: &mut Vec<Finding>, path: &str, v: f64, lo: f64, hi: f64) {
    if !(v.is_finite() && v >= lo && v <= hi) {
        let range = if hi.is_infinite() { format!("[{lo}, inf)") } else { format!("[{lo}, {hi}]") };
        out.push(Finding::error(path, format!("value {v} out of {range}")));
    }
}

fn check_risk(cfg: &ScenarioConfig, out: &mut Vec<Finding>) {
    let r = &cfg.risk;
    if r.horizon_years == 0 {
        out.push(Finding::error("/risk/horizon_years", "horizon must be at least one year"));
    }
    if let Some(p) = r.p_wildfire {
        check_range(out, "/risk/p_wildfire", p, 0.0, 1.0);
    } else if cfg.fire_history.is_none() {
        out.push(Finding::warning(
            "/risk/p_wildfire",
            "no p_wildfire and no fire history; P(W) is taken as 0",
        ));
    }
    if let Some(e) = r.e_wildfire_tco2e {
        check_range(out, "/risk/e_wildfire_tCO2e", e, 0.0, f64::INFINITY);
    }
    check_range(out, "/risk/s_estimated_tCO2e", r.s_estimated_tco2e, 0.0, f64::INFINITY);
}

fn check_buffer(cfg: &ScenarioConfig, out: &mut Vec<Finding>) {
    let Some(b) = &cfg.buffer else { return };
    check_range(out, "/buffer/initial_balance_tCO2e", b.initial_balance_tco2e, 0.0, f64::INFINITY);
    check_range(out, "/buffer/contribution_rate", b.contribution_rate, 0.0, 1.0);
    check_range(out, "/buffer/annual_issuance_tCO2e", b.annual_issuance_tco2e, 0.0, f64::INFINITY);
    if let Some(r) = b.fire_rate {
        check_range(out, "/buffer/fire_rate", r, 0.0, 1.0);
    }
    if let Some(loss) = b.loss_given_fire_tco2e {
        let d = DistributionSpec::from(loss);
        if let Err(e) = d.validate() {
            out.push(Finding::error("/buffer/loss_given_fire_tCO2e", e.to_string()));
        } else if d.bounds().is_some_and(|(lo, _)| lo < 0.0) {
            out.push(Finding::error("/buffer/loss_given_fire_tCO2e", "losses must be non-negative"));
        }
    }
    if b.years == 0 {
        out.push(Finding::error("/buffer/years", "years must be at least 1"));
    }
    if b.replicates == 0 {
        out.push(Finding::error("/buffer/replicates", "replicates must be at least 1"));
    }
}

fn check_insurance(cfg: &ScenarioConfig, out: &mut Vec<Finding>) {
    let Some(ins) = &cfg.insurance else { return };
    check_range(out, "/insurance/p_threshold", ins.p_threshold, 0.0, 1.0);
    for (i, p) in ins.policies.iter().enumerate() {
        let base = format!("/insurance/policies/{i}");
        check_range(out, &format!("{base}/insured_credits_tCO2e"), p.insured_credits_tco2e, 0.0, f64::INFINITY);
        check_range(out, &format!("{base}/credit_price"), p.credit_price, 0.0, f64::INFINITY);
        if let Some(pw) = p.p_wildfire {
            check_range(out, &format!("{base}/p_wildfire"), pw, 0.0, 1.0);
        }
        check_range(out, &format!("{base}/expected_loss_fraction"), p.expected_loss_fraction, 0.0, 1.0);
        check_range(out, &format!("{base}/loading"), p.loading, 0.0, f64::INFINITY);
    }
    if let Some(c) = &ins.claims {
        check_range(out, "/insurance/claims/reported_to_date", c.reported_to_date, 0.0, f64::INFINITY);
        match c.pattern() {
            Err(msg) => out.push(Finding::error("/insurance/claims/reporting_pattern", msg)),
            Ok(p) => match p.fractions().get(c.elapsed_periods) {
                None => out.push(Finding::error(
                    "/insurance/claims/elapsed_periods",
                    format!("elapsed period {} beyond pattern of length {}", c.elapsed_periods, p.fractions().len()),
                )),
                Some(&0.0) => out.push(Finding::error(
                    "/insurance/claims/elapsed_periods",
                    "nothing reported by the elapsed period; development to ultimate is undefined",
                )),
                Some(_) => {}
            },
        }
    }
}

fn check_uncertainty(scenario: &Scenario, out: &mut Vec<Finding>) {
    let cfg = scenario.config();
    let Some(u) = &cfg.uncertainty else { return };
    if let Err(e) = u.mc.validate() {
        out.push(Finding::error("/uncertainty/mc", e.to_string()));
    }
    for (path, d) in &u.distributions {
        let here = format!("/uncertainty/distributions/{}", path.replace('~', "~0").replace('/', "~1"));
        if let Err(e) = d.validate() {
            out.push(Finding::error(here.clone(), e.to_string()));
            continue;
        }
        let probe = BTreeMap::from([(path.clone(), d.mean())]);
        if let Err(msg) = scenario.config_with_values(&probe) {
            out.push(Finding::error(here, format!("parameter '{path}' cannot be set: {msg}")));
        }
    }
    for (i, s) in u.sensitivity.iter().enumerate() {
        let here = format!("/uncertainty/sensitivity/{i}");
        if number_at(scenario.document(), &s.parameter).is_none() {
            out.push(Finding::error(
                here.clone(),
                format!("parameter '{}' has no numeric base value in the scenario", s.parameter),
            ));
            continue;
        }
        for v in [s.low, s.high] {
            let probe = BTreeMap::from([(s.parameter.clone(), v)]);
            if let Err(msg) = scenario.config_with_values(&probe) {
                out.push(Finding::error(here.clone(), format!("parameter '{}' cannot be set: {msg}", s.parameter)));
                break;
            }
        }
    }
    if let Some(e) = &u.evpi {
        let n = cfg.insurance.as_ref().map_or(0, |i| i.policies.len());
        if e.policy >= n {
            out.push(Finding::error(
                "/uncertainty/evpi/policy",
                format!("policy index {} out of range ({n} policies)", e.policy),
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn override_sets_nested_values() {
        let mut doc = json!({"risk": {"s": 1}, "list": [1, 2]});
        apply_override(&mut doc, "/risk/p", json!(0.5)).unwrap();
        apply_override(&mut doc, "/list/1", json!(9)).unwrap();
        assert_eq!(doc, json!({"risk": {"s": 1, "p": 0.5}, "list": [1, 9]}));
    }

    #[test]
    fn override_errors() {
        let mut doc = json!({"risk": {"s": 1}, "list": [1]});
        assert!(apply_override(&mut doc, "risk/s", json!(1)).is_err());
        assert!(apply_override(&mut doc, "/nope/x", json!(1)).is_err());
        assert!(apply_override(&mut doc, "/list/3", json!(1)).is_err());
        assert!(apply_override(&mut doc, "/risk/s/x", json!(1)).is_err());
    }

    #[test]
    fn escaped_pointer_tokens() {
        let mut doc = json!({"a/b": {"c~d": 1}});
        apply_override(&mut doc, "/a~1b/c~0d", json!(2)).unwrap();
        assert_eq!(doc, json!({"a/b": {"c~d": 2}}));
    }

    #[test]
    fn stage_and_output_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
            assert_eq!(serde_json::to_value(s).unwrap(), json!(s.name()));
        }
        for o in OutputName::ALL {
            assert_eq!(o.name().parse::<OutputName>().unwrap(), o);
            assert_eq!(serde_json::to_value(o).unwrap(), json!(o.name()));
        }
    }

    #[test]
    fn finding_display() {
        let f = Finding::error("/risk/p_wildfire", "p out of [0,1]");
        assert_eq!(f.to_string(), "error at /risk/p_wildfire: p out of [0,1]");
    }
}
