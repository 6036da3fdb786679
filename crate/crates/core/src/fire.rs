//! Burn classification and fire perimeter extraction.
//!
//! A [`BurnMask`] comes either from thresholding a dNBR grid or from an
//! external detector's 0/1 mask grid. Perimeters are the maximal connected
//! sets of burned pixels, labeled with a two-pass union-find scan.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{GridHeader, RasterError, RasterGrid};

#[derive(Debug, Error)]
pub enum FireError {
    #[error("mask contains {} value(s) other than 0, 1 or nodata: {}", .cells.len(), format_cells(.cells))]
    InvalidMaskValues { cells: Vec<(usize, usize, f64)> },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn format_cells(cells: &[(usize, usize, f64)]) -> String {
    const SHOWN: usize = 8;
    let mut parts: Vec<String> = cells
        .iter()
        .take(SHOWN)
        .map(|(r, c, v)| format!("({r}, {c})={v}"))
        .collect();
    if cells.len() > SHOWN {
        parts.push(format!("... {} more", cells.len() - SHOWN));
    }
    parts.join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BurnState {
    Burned,
    Unburned,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurnMask {
    header: GridHeader,
    pixels: Vec<BurnState>,
}

impl BurnMask {
    pub fn new(header: GridHeader, pixels: Vec<BurnState>) -> Result<Self, RasterError> {
        header.validate()?;
        if pixels.len() != header.cell_count() {
            return Err(RasterError::LengthMismatch {
                expected: header.cell_count(),
                actual: pixels.len(),
            });
        }
        Ok(BurnMask { header, pixels })
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn pixels(&self) -> &[BurnState] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> BurnState {
        self.pixels[row * self.header.ncols + col]
    }

    pub fn burned_count(&self) -> usize {
        self.pixels.iter().filter(|p| **p == BurnState::Burned).count()
    }

    pub fn summary(&self) -> MaskSummary {
        let mut s = MaskSummary::default();
        for p in &self.pixels {
            match p {
                BurnState::Burned => s.burned_pixels += 1,
                BurnState::Unburned => s.unburned_pixels += 1,
                BurnState::Unknown => s.unknown_pixels += 1,
            }
        }
        let area = self.header.cell_area();
        s.burned_area_m2 = s.burned_pixels as f64 * area;
        s.unknown_area_m2 = s.unknown_pixels as f64 * area;
        s
    }

    /// 1 for burned, 0 for unburned, nodata for unknown.
    pub fn to_grid(&self) -> RasterGrid {
        let nodata = self.header.nodata;
        let values = self
            .pixels
            .iter()
            .map(|p| match p {
                BurnState::Burned => 1.0,
                BurnState::Unburned => 0.0,
                BurnState::Unknown => nodata,
            })
            .collect();
        RasterGrid::new(self.header, values).expect("mask geometry is valid")
    }
}

/// Pixel tallies of a mask. Unknown pixels never join a perimeter, so a large
/// unknown area means emissions are likely underestimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MaskSummary {
    pub burned_pixels: usize,
    pub unburned_pixels: usize,
    pub unknown_pixels: usize,
    pub burned_area_m2: f64,
    pub unknown_area_m2: f64,
}

/// Burned iff dNBR >= threshold; nodata pixels are unknown.
pub fn classify_burn(dnbr: &RasterGrid, threshold: f64) -> BurnMask {
    let pixels = dnbr
        .cells()
        .map(|c| match c {
            None => BurnState::Unknown,
            Some(v) if v >= threshold => BurnState::Burned,
            Some(_) => BurnState::Unburned,
        })
        .collect();
    BurnMask {
        header: *dnbr.header(),
        pixels,
    }
}

/// Adapts an external detector's 0/1 grid into a mask.
pub fn ingest_mask(grid: &RasterGrid) -> Result<BurnMask, FireError> {
    let ncols = grid.ncols();
    let mut bad = Vec::new();
    let pixels = grid
        .cells()
        .enumerate()
        .map(|(i, c)| match c {
            None => BurnState::Unknown,
            Some(1.0) => BurnState::Burned,
            Some(0.0) => BurnState::Unburned,
            Some(v) => {
                bad.push((i / ncols, i % ncols, v));
                BurnState::Unknown
            }
        })
        .collect();
    if !bad.is_empty() {
        return Err(FireError::InvalidMaskValues { cells: bad });
    }
    Ok(BurnMask {
        header: *grid.header(),
        pixels,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// Edge neighbors only.
    #[default]
    Four,
    /// Edge and corner neighbors.
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(format!("connectivity must be 4 or 8, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundingBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

/// One connected burned component.
#[derive(Debug, Clone, PartialEq)]
pub struct FirePerimeter {
    /// 1-based rank after ordering.
    pub component_id: usize,
    /// Member pixels as `(row, col)` in row-major order.
    pub pixels: Vec<(usize, usize)>,
    pub area_m2: f64,
    pub bounding_box: BoundingBox,
}

impl FirePerimeter {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn with_capacity(n: usize) -> Self {
        DisjointSet {
            parent: Vec::with_capacity(n),
        }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Extracts maximal connected burned components.
///
/// Components come back sorted by descending area, ties broken by the
/// bounding box's `(row_min, col_min)`, and are numbered from 1 in that order.
pub fn extract_perimeters(mask: &BurnMask, connectivity: Connectivity) -> Vec<FirePerimeter> {
    const NONE: u32 = u32::MAX;
    let (nrows, ncols) = (mask.header.nrows, mask.header.ncols);
    let mut labels = vec![NONE; nrows * ncols];
    let mut sets = DisjointSet::with_capacity(16);

    // already-visited neighbors in scan order
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };

    for r in 0..nrows {
        for c in 0..ncols {
            let idx = r * ncols + c;
            if mask.pixels[idx] != BurnState::Burned {
                continue;
            }
            let mut label = NONE;
            for &(dr, dc) in back {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= ncols as isize {
                    continue;
                }
                let n = labels[nr as usize * ncols + nc as usize];
                if n == NONE {
                    continue;
                }
                label = if label == NONE { n } else { sets.union(label, n) };
            }
            labels[idx] = if label == NONE { sets.make_set() } else { label };
        }
    }

    let mut slot_of_root = vec![NONE; sets.parent.len()];
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for (idx, &label) in labels.iter().enumerate() {
        if label == NONE {
            continue;
        }
        let root = sets.find(label) as usize;
        if slot_of_root[root] == NONE {
            slot_of_root[root] = groups.len() as u32;
            groups.push(Vec::new());
        }
        groups[slot_of_root[root] as usize].push((idx / ncols, idx % ncols));
    }

    let cell_area = mask.header.cell_area();
    let mut perimeters: Vec<FirePerimeter> = groups
        .into_iter()
        .map(|pixels| {
            let mut bb = BoundingBox {
                row_min: usize::MAX,
                col_min: usize::MAX,
                row_max: 0,
                col_max: 0,
            };
            for &(r, c) in &pixels {
                bb.row_min = bb.row_min.min(r);
                bb.col_min = bb.col_min.min(c);
                bb.row_max = bb.row_max.max(r);
                bb.col_max = bb.col_max.max(c);
            }
            FirePerimeter {
                component_id: 0,
                area_m2: pixels.len() as f64 * cell_area,
                pixels,
                bounding_box: bb,
            }
        })
        .collect();

    perimeters.sort_by(|a, b| {
        b.pixels
            .len()
            .cmp(&a.pixels.len())
            .then(a.bounding_box.row_min.cmp(&b.bounding_box.row_min))
            .then(a.bounding_box.col_min.cmp(&b.bounding_box.col_min))
    });
    for (i, p) in perimeters.iter_mut().enumerate() {
        p.component_id = i + 1;
    }
    perimeters
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&str], cell: f64) -> BurnMask {
        let nrows = rows.len();
        let ncols = rows[0].len();
        let pixels = rows
            .iter()
            .flat_map(|r| {
                r.chars().map(|ch| match ch {
                    '#' => BurnState::Burned,
                    '?' => BurnState::Unknown,
                    _ => BurnState::Unburned,
                })
            })
            .collect();
        BurnMask::new(GridHeader::new(ncols, nrows, cell), pixels).unwrap()
    }

    #[test]
    fn threshold_classification() {
        let g = RasterGrid::from_rows(GridHeader::new(3, 1, 10.0), &[&[0.5, 0.05, -9999.0]]).unwrap();
        let m = classify_burn(&g, 0.1);
        assert_eq!(
            m.pixels(),
            &[BurnState::Burned, BurnState::Unburned, BurnState::Unknown]
        );
        let m = classify_burn(&g, 2.0);
        assert_eq!(m.burned_count(), 0);
        assert_eq!(m.get(0, 2), BurnState::Unknown);
    }

    #[test]
    fn threshold_is_inclusive() {
        let g = RasterGrid::filled(GridHeader::new(1, 1, 1.0), 0.1).unwrap();
        assert_eq!(classify_burn(&g, 0.1).get(0, 0), BurnState::Burned);
    }

    #[test]
    fn ingest_maps_values() {
        let g = RasterGrid::from_rows(GridHeader::new(2, 2, 1.0), &[&[1.0, 0.0], &[-9999.0, 1.0]]).unwrap();
        let m = ingest_mask(&g).unwrap();
        assert_eq!(
            m.pixels(),
            &[
                BurnState::Burned,
                BurnState::Unburned,
                BurnState::Unknown,
                BurnState::Burned
            ]
        );
        assert_eq!(m.to_grid(), g);
    }

    #[test]
    fn ingest_all_zero() {
        let g = RasterGrid::filled(GridHeader::new(3, 2, 1.0), 0.0).unwrap();
        assert!(ingest_mask(&g)
            .unwrap()
            .pixels()
            .iter()
            .all(|p| *p == BurnState::Unburned));
    }

    #[test]
    fn ingest_rejects_fractional_values() {
        let g = RasterGrid::from_rows(GridHeader::new(2, 1, 1.0), &[&[1.0, 0.5]]).unwrap();
        match ingest_mask(&g) {
            Err(FireError::InvalidMaskValues { cells }) => assert_eq!(cells, vec![(0, 1, 0.5)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_components_in_3x3() {
        let m = mask(&["##.", "...", "..#"], 1.0);
        let p = extract_perimeters(&m, Connectivity::Four);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].pixels, vec![(0, 0), (0, 1)]);
        assert_eq!(p[1].pixels, vec![(2, 2)]);
        assert_eq!(p[0].component_id, 1);
        assert_eq!(p[1].component_id, 2);
    }

    #[test]
    fn single_pixel_area() {
        let m = mask(&["...", ".#.", "..."], 10.0);
        let p = extract_perimeters(&m, Connectivity::Four);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].area_m2, 100.0);
        assert_eq!(
            p[0].bounding_box,
            BoundingBox {
                row_min: 1,
                col_min: 1,
                row_max: 1,
                col_max: 1
            }
        );
    }

    #[test]
    fn all_unburned_is_empty() {
        assert!(extract_perimeters(&mask(&["..", ".."], 1.0), Connectivity::Four).is_empty());
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let m = mask(&["#.", ".#"], 1.0);
        assert_eq!(extract_perimeters(&m, Connectivity::Four).len(), 2);
        assert_eq!(extract_perimeters(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn u_shape_merges_late() {
        // the two arms get separate provisional labels and merge on the last row
        let m = mask(&["#.#", "#.#", "###"], 1.0);
        let p = extract_perimeters(&m, Connectivity::Four);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].pixel_count(), 7);
    }

    #[test]
    fn unknown_pixels_do_not_bridge() {
        let m = mask(&["#?#"], 5.0);
        let p = extract_perimeters(&m, Connectivity::Four);
        assert_eq!(p.len(), 2);
        let s = m.summary();
        assert_eq!(s.unknown_pixels, 1);
        assert_eq!(s.unknown_area_m2, 25.0);
        assert_eq!(s.burned_area_m2, 50.0);
    }

    #[test]
    fn ties_ordered_by_position() {
        let m = mask(&["..#", "#..", "..."], 1.0);
        let p = extract_perimeters(&m, Connectivity::Four);
        assert_eq!(p[0].pixels, vec![(0, 2)]);
        assert_eq!(p[1].pixels, vec![(1, 0)]);
    }

    #[test]
    fn connectivity_serde() {
        let c: Connectivity = serde_json::from_str("8").unwrap();
        assert_eq!(c, Connectivity::Eight);
        assert!(serde_json::from_str::<Connectivity>("6").is_err());
    }
}
