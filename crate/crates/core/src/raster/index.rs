use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridPair, RasterError, RasterGrid};

/// Spectral band identifiers accepted as index inputs.
///
/// The visible bands are accepted so true-color scenes can be carried along
/// with a scenario, but no index here reads them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Nir,
    Red,
    Swir,
    Green,
    Blue,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Nir => "nir",
            Band::Red => "red",
            Band::Swir => "swir",
            Band::Green => "green",
            Band::Blue => "blue",
        })
    }
}

impl FromStr for Band {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nir" => Ok(Band::Nir),
            "red" => Ok(Band::Red),
            "swir" => Ok(Band::Swir),
            "green" => Ok(Band::Green),
            "blue" => Ok(Band::Blue),
            other => Err(format!("unknown band '{other}'")),
        }
    }
}

pub type Bands = BTreeMap<Band, RasterGrid>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Ndvi,
    Nbr,
    Bai,
}

impl IndexKind {
    pub fn required_bands(self) -> [Band; 2] {
        match self {
            IndexKind::Ndvi => [Band::Nir, Band::Red],
            IndexKind::Nbr => [Band::Nir, Band::Swir],
            IndexKind::Bai => [Band::Red, Band::Nir],
        }
    }

    /// Evaluates the index for one pixel; `None` where the formula is singular.
    pub fn evaluate(self, first: f64, second: f64) -> Option<f64> {
        match self {
            IndexKind::Ndvi | IndexKind::Nbr => normalized_difference(first, second),
            IndexKind::Bai => {
                let (red, nir) = (first, second);
                let denom = (0.1 - red).powi(2) + (0.06 - nir).powi(2);
                (denom != 0.0).then(|| 1.0 / denom)
            }
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Ndvi => "ndvi",
            IndexKind::Nbr => "nbr",
            IndexKind::Bai => "bai",
        })
    }
}

impl FromStr for IndexKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ndvi" => Ok(IndexKind::Ndvi),
            "nbr" => Ok(IndexKind::Nbr),
            "bai" => Ok(IndexKind::Bai),
            other => Err(format!("unknown index '{other}' (expected ndvi, nbr or bai)")),
        }
    }
}

fn normalized_difference(a: f64, b: f64) -> Option<f64> {
    let denom = a + b;
    (denom != 0.0).then(|| (a - b) / denom)
}

/// Applies `f` pixel-wise over two congruent grids. Output nodata is the first
/// grid's sentinel; a pixel is nodata when either input is or `f` yields `None`.
pub fn combine<F>(a: &RasterGrid, b: &RasterGrid, f: F) -> Result<RasterGrid, RasterError>
where
    F: Fn(f64, f64) -> Option<f64> + Sync,
{
    a.ensure_congruent(b, "pixel-wise combination")?;
    let header = *a.header();
    let nodata = header.nodata;
    let values = (0..header.cell_count())
        .into_par_iter()
        .map(|i| match (a.cell(i), b.cell(i)) {
            (Some(x), Some(y)) => f(x, y).filter(|v| v.is_finite()).unwrap_or(nodata),
            _ => nodata,
        })
        .collect();
    RasterGrid::new(header, values)
}

pub fn compute_index(kind: IndexKind, bands: &Bands) -> Result<RasterGrid, RasterError> {
    let [first, second] = kind.required_bands();
    let a = bands.get(&first).ok_or(RasterError::MissingBand(first))?;
    let b = bands.get(&second).ok_or(RasterError::MissingBand(second))?;
    combine(a, b, |x, y| kind.evaluate(x, y))
}

/// Differenced NBR: pre minus post.
pub fn compute_dnbr(pair: &GridPair) -> Result<RasterGrid, RasterError> {
    combine(pair.pre(), pair.post(), |pre, post| Some(pre - post))
}
