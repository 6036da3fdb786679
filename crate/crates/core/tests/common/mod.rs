#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use pyrocarbon::fire::{ingest_mask, BurnMask};
use pyrocarbon::raster::{GridHeader, RasterGrid};
use rand::Rng;

pub const NODATA: f64 = -9999.0;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn scenario_path(id: &str) -> PathBuf {
    fixtures().join(id).join("scenario.json")
}

/// Random mask cells: 0 unburned, 1 burned, 2 unknown.
pub fn random_cells<R: Rng>(rng: &mut R, max_side: usize) -> Vec<Vec<u8>> {
    let rows = rng.random_range(1..=max_side);
    let cols = rng.random_range(1..=max_side);
    let p_burn: f64 = rng.random_range(0.1..0.8);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < 0.05 {
                        2
                    } else if u < 0.05 + p_burn {
                        1
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect()
}

pub fn mask_of(cells: &[Vec<u8>], cell_size: f64) -> BurnMask {
    let header = GridHeader::new(cells[0].len(), cells.len(), cell_size);
    let values = cells
        .iter()
        .flatten()
        .map(|&c| if c == 2 { NODATA } else { c as f64 })
        .collect();
    ingest_mask(&RasterGrid::new(header, values).unwrap()).unwrap()
}

fn fill(cells: &[Vec<u8>], seen: &mut [Vec<bool>], r: usize, c: usize, diag: bool, out: &mut BTreeSet<(usize, usize)>) {
    if seen[r][c] || cells[r][c] != 1 {
        return;
    }
    seen[r][c] = true;
    out.insert((r, c));
    let (nr, nc) = (cells.len() as isize, cells[0].len() as isize);
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            let edge = (dr == 0) != (dc == 0);
            let corner = dr != 0 && dc != 0;
            if !(edge || (diag && corner)) {
                continue;
            }
            let (rr, cc) = (r as isize + dr, c as isize + dc);
            if rr >= 0 && cc >= 0 && rr < nr && cc < nc {
                fill(cells, seen, rr as usize, cc as usize, diag, out);
            }
        }
    }
}

/// Connected burned components by recursive flood fill.
pub fn flood_fill_components(cells: &[Vec<u8>], diag: bool) -> BTreeSet<BTreeSet<(usize, usize)>> {
    let mut seen = vec![vec![false; cells[0].len()]; cells.len()];
    let mut comps = BTreeSet::new();
    for r in 0..cells.len() {
        for c in 0..cells[0].len() {
            let mut comp = BTreeSet::new();
            fill(cells, &mut seen, r, c, diag, &mut comp);
            if !comp.is_empty() {
                comps.insert(comp);
            }
        }
    }
    comps
}

/// Random ASCII grid document text and the values it encodes.
pub fn random_document<R: Rng>(rng: &mut R) -> (String, usize, usize, Vec<f64>) {
    let ncols = rng.random_range(1..=12);
    let nrows = rng.random_range(1..=12);
    let nodata = if rng.random_bool(0.5) { -9999.0 } else { -3.4e38 };
    let values: Vec<f64> = (0..ncols * nrows)
        .map(|_| match rng.random_range(0..10) {
            0 => nodata,
            1 => rng.random_range(-1e6..1e6),
            2 => rng.random_range(-1e-6..1e-6),
            3 => rng.random_range(-100i32..100) as f64,
            _ => rng.random_range(-1.0..1.0),
        })
        .collect();
    let keys = ["ncols", "NCOLS", "Ncols"];
    let mut text = format!(
        "{} {ncols}\nnrows {nrows}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {nodata}\n",
        keys[rng.random_range(0..3)],
        rng.random_range(-1e6..1e6),
        rng.random_range(-1e6..1e6),
        rng.random_range(0.5..100.0),
    );
    for row in values.chunks(ncols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        text.push_str(&line.join("  "));
        text.push('\n');
    }
    (text, ncols, nrows, values)
}

pub fn open_scenario(path: &std::path::Path) -> pyrocarbon::scenario::Scenario {
    pyrocarbon::scenario::Scenario::open(path)
        .expect("scenario file readable")
        .unwrap_or_else(|f| panic!("schema findings: {f:?}"))
}

pub fn fixture(id: &str) -> pyrocarbon::scenario::Scenario {
    open_scenario(&scenario_path(id))
}

/// Copies a fixture directory into a temp dir and rewrites its scenario document.
pub fn edited_copy(id: &str, edit: impl FnOnce(&mut serde_json::Value)) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures().join(id)).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
    }
    let path = dir.path().join("scenario.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut doc);
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    (dir, path)
}
