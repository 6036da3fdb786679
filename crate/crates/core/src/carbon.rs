//! Biomass, carbon stock, burn severity and emissions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fire::FirePerimeter;
use crate::raster::{combine, RasterError, RasterGrid};

/// kg CO2 released per kg carbon fully oxidized.
pub const CO2_PER_CARBON: f64 = 44.0 / 12.0;

#[derive(Debug, Error)]
pub enum CarbonError {
    #[error("vegetation class {class_id}: {reason}")]
    InvalidClass { class_id: i64, reason: String },
    #[error("duplicate vegetation class id {0}")]
    DuplicateClass(i64),
    #[error("class map references unknown vegetation class {0}")]
    UnknownClass(i64),
    #[error("class map cell ({row}, {col}) holds non-integer class id {value}")]
    NonIntegerClass { row: usize, col: usize, value: f64 },
    #[error("severity table: {0}")]
    InvalidSeverityTable(String),
    #[error("non-CO2 share must lie in [0, 0.5), got {0}")]
    InvalidNonCo2Share(f64),
    #[error("perimeter pixel ({row}, {col}) lies outside the {nrows}x{ncols} grid")]
    PixelOutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("biomass for class {class_id} at NDVI {ndvi} is not finite")]
    NonFiniteBiomass { class_id: i64, ndvi: f64 },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Per-class allometry: AGB = a·(NDVI − b)^c in kg/m², and the carbon
/// fraction converting biomass to carbon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VegetationClass {
    pub class_id: i64,
    #[serde(default)]
    pub name: String,
    pub agb_a: f64,
    pub agb_b: f64,
    pub agb_c: f64,
    pub carbon_fraction: f64,
}

impl VegetationClass {
    pub fn validate(&self) -> Result<(), CarbonError> {
        let fail = |reason: &str| {
            Err(CarbonError::InvalidClass {
                class_id: self.class_id,
                reason: reason.to_string(),
            })
        };
        if ![self.agb_a, self.agb_b, self.agb_c, self.carbon_fraction]
            .iter()
            .all(|v| v.is_finite())
        {
            return fail("coefficients must be finite");
        }
        if self.agb_a < 0.0 {
            return fail("agb_a must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.carbon_fraction) {
            return fail("carbon_fraction must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Aboveground biomass in kg/m². NDVI at or below `b` gives zero biomass.
pub fn agb_from_ndvi(ndvi: f64, class: &VegetationClass) -> Result<f64, CarbonError> {
    class.validate()?;
    if ndvi <= class.agb_b {
        return Ok(0.0);
    }
    let agb = class.agb_a * (ndvi - class.agb_b).powf(class.agb_c);
    if !agb.is_finite() {
        return Err(CarbonError::NonFiniteBiomass {
            class_id: class.class_id,
            ndvi,
        });
    }
    Ok(agb)
}

/// Vegetation classes keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassTable {
    classes: BTreeMap<i64, VegetationClass>,
}

impl ClassTable {
    pub fn new(classes: impl IntoIterator<Item = VegetationClass>) -> Result<Self, CarbonError> {
        let mut map = BTreeMap::new();
        for class in classes {
            class.validate()?;
            let id = class.class_id;
            if map.insert(id, class).is_some() {
                return Err(CarbonError::DuplicateClass(id));
            }
        }
        Ok(ClassTable { classes: map })
    }

    pub fn get(&self, id: i64) -> Option<&VegetationClass> {
        self.classes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Reads an integral class id from a class-map cell.
pub fn class_id_of(value: f64) -> Option<i64> {
    (value.fract() == 0.0 && value.abs() < 2f64.powi(53)).then_some(value as i64)
}

/// Carbon stock in kg C/m² for every pixel with both an NDVI value and a class.
pub fn carbon_stock_map(
    ndvi: &RasterGrid,
    class_map: &RasterGrid,
    classes: &ClassTable,
) -> Result<RasterGrid, CarbonError> {
    ndvi.ensure_congruent(class_map, "NDVI and class map")?;
    let ncols = class_map.ncols();
    // fail on the first bad class cell in row-major order
    for (i, cell) in class_map.cells().enumerate() {
        let Some(v) = cell else { continue };
        let id = class_id_of(v).ok_or(CarbonError::NonIntegerClass {
            row: i / ncols,
            col: i % ncols,
            value: v,
        })?;
        if classes.get(id).is_none() {
            return Err(CarbonError::UnknownClass(id));
        }
    }
    let stock = combine(ndvi, class_map, |n, id| {
        let class = classes.get(id as i64)?;
        agb_from_ndvi(n, class).ok().map(|agb| agb * class.carbon_fraction)
    })?;
    Ok(stock)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityEntry {
    pub lower_dnbr: f64,
    pub label: String,
    pub combustion_fraction: f64,
}

/// Ordered dNBR severity breaks with the share of carbon consumed at each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SeverityEntry>", into = "Vec<SeverityEntry>")]
pub struct SeverityTable {
    entries: Vec<SeverityEntry>,
}

impl TryFrom<Vec<SeverityEntry>> for SeverityTable {
    type Error = CarbonError;

    fn try_from(entries: Vec<SeverityEntry>) -> Result<Self, Self::Error> {
        SeverityTable::new(entries)
    }
}

impl From<SeverityTable> for Vec<SeverityEntry> {
    fn from(t: SeverityTable) -> Self {
        t.entries
    }
}

/// Result of a severity lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeverityLevel<'a> {
    /// dNBR below the first break.
    Unburned,
    Class(&'a SeverityEntry),
}

impl SeverityLevel<'_> {
    pub fn label(&self) -> &str {
        match self {
            SeverityLevel::Unburned => "unburned",
            SeverityLevel::Class(e) => &e.label,
        }
    }

    pub fn combustion_fraction(&self) -> f64 {
        match self {
            SeverityLevel::Unburned => 0.0,
            SeverityLevel::Class(e) => e.combustion_fraction,
        }
    }
}

impl SeverityTable {
    pub fn new(entries: Vec<SeverityEntry>) -> Result<Self, CarbonError> {
        validate_severity_entries(&entries).map_err(CarbonError::InvalidSeverityTable)?;
        Ok(SeverityTable { entries })
    }

    pub fn entries(&self) -> &[SeverityEntry] {
        &self.entries
    }

    /// Entry with the greatest lower bound not exceeding `dnbr`.
    pub fn severity_of(&self, dnbr: f64) -> SeverityLevel<'_> {
        let idx = self.entries.partition_point(|e| e.lower_dnbr <= dnbr);
        match idx {
            0 => SeverityLevel::Unburned,
            i => SeverityLevel::Class(&self.entries[i - 1]),
        }
    }
}

/// Checks the table rules, returning a message naming the first violation.
pub fn validate_severity_entries(entries: &[SeverityEntry]) -> Result<(), String> {
    if entries.is_empty() {
        return Err("table is empty".into());
    }
    for (i, e) in entries.iter().enumerate() {
        if !e.lower_dnbr.is_finite() {
            return Err(format!("entry {i}: lower_dnbr must be finite"));
        }
        if !(0.0..=1.0).contains(&e.combustion_fraction) {
            return Err(format!("entry {i}: combustion_fraction must lie in [0, 1]"));
        }
    }
    for (i, w) in entries.windows(2).enumerate() {
        if w[1].lower_dnbr <= w[0].lower_dnbr {
            return Err(format!(
                "entry {}: lower_dnbr must be strictly increasing ({} after {})",
                i + 1,
                w[1].lower_dnbr,
                w[0].lower_dnbr
            ));
        }
        if w[1].combustion_fraction < w[0].combustion_fraction {
            return Err(format!(
                "entry {}: combustion_fraction must not decrease with severity",
                i + 1
            ));
        }
    }
    Ok(())
}

/// How the non-CO2 share converts CO2 into total CO2e.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Co2eConvention {
    /// The share is a fraction of the total: total = CO2 / (1 − share).
    #[default]
    ShareOfTotal,
    /// The share is added on top of CO2: total = CO2 · (1 + share).
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Co2eConversion {
    pub non_co2_share: f64,
    #[serde(default)]
    pub convention: Co2eConvention,
}

impl Co2eConversion {
    pub fn new(non_co2_share: f64, convention: Co2eConvention) -> Result<Self, CarbonError> {
        let c = Co2eConversion {
            non_co2_share,
            convention,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn share_of_total(non_co2_share: f64) -> Result<Self, CarbonError> {
        Self::new(non_co2_share, Co2eConvention::ShareOfTotal)
    }

    pub fn validate(&self) -> Result<(), CarbonError> {
        if (0.0..0.5).contains(&self.non_co2_share) {
            Ok(())
        } else {
            Err(CarbonError::InvalidNonCo2Share(self.non_co2_share))
        }
    }

    pub fn total_co2e(&self, co2_kg: f64) -> f64 {
        match self.convention {
            Co2eConvention::ShareOfTotal => co2_kg / (1.0 - self.non_co2_share),
            Co2eConvention::Additive => co2_kg * (1.0 + self.non_co2_share),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionsEstimate {
    pub carbon_loss_kgc: f64,
    pub co2_kg: f64,
    pub co2e_total_kg: f64,
    pub non_co2_share: f64,
    /// Perimeter pixels lacking a carbon or dNBR value; they contribute nothing.
    pub nodata_pixels: usize,
}

impl EmissionsEstimate {
    pub fn from_carbon_loss(carbon_loss_kgc: f64, conversion: &Co2eConversion) -> Self {
        let co2_kg = carbon_loss_kgc * CO2_PER_CARBON;
        EmissionsEstimate {
            carbon_loss_kgc,
            co2_kg,
            co2e_total_kg: conversion.total_co2e(co2_kg),
            non_co2_share: conversion.non_co2_share,
            nodata_pixels: 0,
        }
    }

    /// Combined estimate for disjoint perimeters, summed in the given order.
    pub fn total<'a>(
        parts: impl IntoIterator<Item = &'a EmissionsEstimate>,
        conversion: &Co2eConversion,
    ) -> Self {
        let mut loss = 0.0;
        let mut nodata = 0;
        for p in parts {
            loss += p.carbon_loss_kgc;
            nodata += p.nodata_pixels;
        }
        let mut total = Self::from_carbon_loss(loss, conversion);
        total.nodata_pixels = nodata;
        total
    }

    pub fn co2e_total_tonnes(&self) -> f64 {
        self.co2e_total_kg / 1000.0
    }
}

fn check_in_bounds(perimeter: &FirePerimeter, grid: &RasterGrid) -> Result<(), CarbonError> {
    for &(row, col) in &perimeter.pixels {
        if !grid.in_bounds(row, col) {
            return Err(CarbonError::PixelOutOfBounds {
                row,
                col,
                nrows: grid.nrows(),
                ncols: grid.ncols(),
            });
        }
    }
    Ok(())
}

/// Emissions of one fire via burn severity: each perimeter pixel loses its
/// pre-fire stock times the combustion fraction of its dNBR severity class.
///
/// Pixels are accumulated in the perimeter's row-major order so results are
/// reproducible bit for bit.
pub fn fire_emissions(
    perimeter: &FirePerimeter,
    pre_carbon: &RasterGrid,
    dnbr: &RasterGrid,
    table: &SeverityTable,
    conversion: &Co2eConversion,
) -> Result<EmissionsEstimate, CarbonError> {
    conversion.validate()?;
    pre_carbon.ensure_congruent(dnbr, "pre-fire carbon and dNBR")?;
    check_in_bounds(perimeter, pre_carbon)?;
    let cell_area = pre_carbon.cell_area();
    let mut loss = 0.0;
    let mut nodata = 0;
    for &(r, c) in &perimeter.pixels {
        match (pre_carbon.get(r, c), dnbr.get(r, c)) {
            (Some(stock), Some(d)) => {
                loss += stock * table.severity_of(d).combustion_fraction() * cell_area;
            }
            _ => nodata += 1,
        }
    }
    let mut est = EmissionsEstimate::from_carbon_loss(loss, conversion);
    est.nodata_pixels = nodata;
    Ok(est)
}

/// Emissions of one fire as the drop between pre- and post-fire carbon stock
/// maps. Pixels whose stock rose contribute zero.
pub fn stock_delta_emissions(
    perimeter: &FirePerimeter,
    pre_carbon: &RasterGrid,
    post_carbon: &RasterGrid,
    conversion: &Co2eConversion,
) -> Result<EmissionsEstimate, CarbonError> {
    conversion.validate()?;
    pre_carbon.ensure_congruent(post_carbon, "pre- and post-fire carbon")?;
    check_in_bounds(perimeter, pre_carbon)?;
    let cell_area = pre_carbon.cell_area();
    let mut loss = 0.0;
    let mut nodata = 0;
    for &(r, c) in &perimeter.pixels {
        match (pre_carbon.get(r, c), post_carbon.get(r, c)) {
            (Some(pre), Some(post)) => loss += (pre - post).max(0.0) * cell_area,
            _ => nodata += 1,
        }
    }
    let mut est = EmissionsEstimate::from_carbon_loss(loss, conversion);
    est.nodata_pixels = nodata;
    Ok(est)
}
