//! Raster grids, ASCII grid I/O and spectral indices.

mod ascii;
mod grid;
mod index;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ascii::{parse_grid, read_grid, serialize_grid, write_grid, ParseError, ParseErrorClass, ParseErrorKind};
pub use grid::{GridHeader, GridPair, GridStats, RasterGrid};
pub use index::{combine, compute_dnbr, compute_index, Band, Bands, IndexKind};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("grid origin must be finite")]
    InvalidOrigin,
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("{what}: grids are not congruent ({left:?} vs {right:?})")]
    NotCongruent {
        what: String,
        left: GridHeader,
        right: GridHeader,
    },
    #[error("missing required band '{0}'")]
    MissingBand(Band),
    #[error("{count} reflectance value(s) outside [0, 1], first at row {row}, col {col}: {value}")]
    ReflectanceOutOfRange {
        count: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How out-of-range reflectances are treated when bands are loaded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReflectanceCheck {
    #[default]
    Error,
    Warn,
}

/// Out-of-range reflectance cells found by [`check_reflectance`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceReport {
    pub out_of_range: Vec<(usize, usize, f64)>,
}

/// Checks that every valid cell of a reflectance band lies in `[0, 1]`.
///
/// In `Error` mode any offending cell fails; in `Warn` mode the offending cells
/// are returned for the caller to report.
pub fn check_reflectance(
    grid: &RasterGrid,
    mode: ReflectanceCheck,
) -> Result<ReflectanceReport, RasterError> {
    let ncols = grid.ncols();
    let out_of_range: Vec<_> = grid
        .cells()
        .enumerate()
        .filter_map(|(i, v)| v.filter(|v| !(0.0..=1.0).contains(v)).map(|v| (i / ncols, i % ncols, v)))
        .collect();
    if mode == ReflectanceCheck::Error {
        if let Some(&(row, col, value)) = out_of_range.first() {
            return Err(RasterError::ReflectanceOutOfRange {
                count: out_of_range.len(),
                row,
                col,
                value,
            });
        }
    }
    Ok(ReflectanceReport { out_of_range })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflectance_modes() {
        let g = RasterGrid::from_rows(GridHeader::new(3, 1, 1.0), &[&[0.2, 1.4, -9999.0]]).unwrap();
        let err = check_reflectance(&g, ReflectanceCheck::Error).unwrap_err();
        assert!(matches!(err, RasterError::ReflectanceOutOfRange { count: 1, row: 0, col: 1, .. }));
        let rep = check_reflectance(&g, ReflectanceCheck::Warn).unwrap();
        assert_eq!(rep.out_of_range, vec![(0, 1, 1.4)]);
    }
}
