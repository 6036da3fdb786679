//! NDVI, NBR and BAI from band grids, and dNBR from a pre/post pair.

use pyrocarbon::raster::{compute_dnbr, compute_index, parse_grid, serialize_grid, Band, Bands, GridPair, IndexKind};

fn band(text: &str) -> anyhow::Result<pyrocarbon::raster::RasterGrid> {
    let header = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 30\nNODATA_value -9999\n";
    Ok(parse_grid(&format!("{header}{text}"))?)
}

pub fn run_example() -> anyhow::Result<()> {
    let pre = Bands::from([
        (Band::Nir, band("0.45 0.44 0.46\n0.43 -9999 0.45\n")?),
        (Band::Red, band("0.05 0.06 0.05\n0.07 0.05 0.06\n")?),
        (Band::Swir, band("0.12 0.13 0.12\n0.14 0.12 0.13\n")?),
    ]);
    let post = Bands::from([
        (Band::Nir, band("0.20 0.41 0.44\n0.18 0.30 0.43\n")?),
        (Band::Red, band("0.09 0.06 0.05\n0.10 0.07 0.06\n")?),
        (Band::Swir, band("0.31 0.15 0.13\n0.33 0.20 0.14\n")?),
    ]);

    for kind in [IndexKind::Ndvi, IndexKind::Nbr, IndexKind::Bai] {
        let grid = compute_index(kind, &pre)?;
        let s = grid.stats();
        println!("pre-fire {kind}: {} valid, mean {:.4}", s.valid_cells, s.mean.unwrap_or(f64::NAN));
    }

    let pair = GridPair::new(compute_index(IndexKind::Nbr, &pre)?, compute_index(IndexKind::Nbr, &post)?)?;
    let dnbr = compute_dnbr(&pair)?;
    println!("dNBR grid (nodata propagates from the missing NIR cell):");
    print!("{}", serialize_grid(&dnbr));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
