use super::RasterError;

/// Georeferencing and nodata metadata shared by every grid on the same lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHeader {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner, same length unit as `cell_size`.
    pub x_origin: f64,
    pub y_origin: f64,
    /// Meters per cell edge.
    pub cell_size: f64,
    pub nodata: f64,
}

impl GridHeader {
    pub fn new(ncols: usize, nrows: usize, cell_size: f64) -> Self {
        GridHeader {
            ncols,
            nrows,
            x_origin: 0.0,
            y_origin: 0.0,
            cell_size,
            nodata: -9999.0,
        }
    }

    pub fn with_origin(mut self, x: f64, y: f64) -> Self {
        self.x_origin = x;
        self.y_origin = y;
        self
    }

    pub fn with_nodata(mut self, nodata: f64) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn cell_count(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Two headers describe the same lattice. The nodata sentinel is per-file
    /// metadata and does not take part in the comparison.
    pub fn congruent_with(&self, other: &GridHeader) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.x_origin == other.x_origin
            && self.y_origin == other.y_origin
            && self.cell_size == other.cell_size
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if self.ncols == 0 || self.nrows == 0 {
            return Err(RasterError::EmptyGrid);
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(RasterError::InvalidCellSize(self.cell_size));
        }
        if !self.x_origin.is_finite() || !self.y_origin.is_finite() {
            return Err(RasterError::InvalidOrigin);
        }
        Ok(())
    }
}

/// A single band of values on a regular lattice, stored row-major with the
/// top row first. Cells equal to the header's nodata sentinel are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    header: GridHeader,
    values: Vec<f64>,
}

impl RasterGrid {
    pub fn new(header: GridHeader, values: Vec<f64>) -> Result<Self, RasterError> {
        header.validate()?;
        if values.len() != header.cell_count() {
            return Err(RasterError::LengthMismatch {
                expected: header.cell_count(),
                actual: values.len(),
            });
        }
        Ok(RasterGrid { header, values })
    }

    /// Builds a grid from optional cell values; `None` becomes the nodata sentinel.
    pub fn from_cells<I>(header: GridHeader, cells: I) -> Result<Self, RasterError>
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let nodata = header.nodata;
        let values = cells.into_iter().map(|c| c.unwrap_or(nodata)).collect();
        Self::new(header, values)
    }

    /// Convenience constructor for small grids written out by hand.
    pub fn from_rows(header: GridHeader, rows: &[&[f64]]) -> Result<Self, RasterError> {
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(header, values)
    }

    pub fn filled(header: GridHeader, value: f64) -> Result<Self, RasterError> {
        Self::new(header, vec![value; header.cell_count()])
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn ncols(&self) -> usize {
        self.header.ncols
    }

    pub fn nrows(&self) -> usize {
        self.header.nrows
    }

    pub fn cell_size(&self) -> f64 {
        self.header.cell_size
    }

    pub fn cell_area(&self) -> f64 {
        self.header.cell_area()
    }

    pub fn nodata(&self) -> f64 {
        self.header.nodata
    }

    /// Raw row-major storage, nodata cells included as the sentinel.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.header.nodata || (v.is_nan() && self.header.nodata.is_nan())
    }

    pub fn in_bounds(&self, row: usize, col: usize) -> bool {
        row < self.header.nrows && col < self.header.ncols
    }

    /// Value at `(row, col)`, `None` for nodata.
    ///
    /// Panics when the position is outside the grid.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        assert!(
            self.in_bounds(row, col),
            "cell ({row}, {col}) outside {}x{} grid",
            self.header.nrows,
            self.header.ncols
        );
        self.cell(row * self.header.ncols + col)
    }

    pub(crate) fn cell(&self, idx: usize) -> Option<f64> {
        let v = self.values[idx];
        if self.is_nodata(v) {
            None
        } else {
            Some(v)
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.values.len()).map(move |i| self.cell(i))
    }

    /// Non-nodata values in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells().flatten()
    }

    pub fn congruent_with(&self, other: &RasterGrid) -> bool {
        self.header.congruent_with(&other.header)
    }

    pub fn ensure_congruent(&self, other: &RasterGrid, what: &str) -> Result<(), RasterError> {
        if self.congruent_with(other) {
            Ok(())
        } else {
            Err(RasterError::NotCongruent {
                what: what.to_string(),
                left: self.header,
                right: other.header,
            })
        }
    }

    pub fn stats(&self) -> GridStats {
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in self.valid_values() {
            count += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        GridStats {
            valid_cells: count,
            nodata_cells: self.values.len() - count,
            min: (count > 0).then_some(min),
            max: (count > 0).then_some(max),
            mean: (count > 0).then(|| sum / count as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridStats {
    pub valid_cells: usize,
    pub nodata_cells: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

/// Pre-fire and post-fire grids on one lattice.
#[derive(Debug, Clone)]
pub struct GridPair {
    pre: RasterGrid,
    post: RasterGrid,
}

impl GridPair {
    pub fn new(pre: RasterGrid, post: RasterGrid) -> Result<Self, RasterError> {
        pre.ensure_congruent(&post, "pre/post pair")?;
        Ok(GridPair { pre, post })
    }

    pub fn pre(&self) -> &RasterGrid {
        &self.pre
    }

    pub fn post(&self) -> &RasterGrid {
        &self.post
    }
}
