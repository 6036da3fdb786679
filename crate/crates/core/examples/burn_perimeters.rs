//! Threshold a dNBR grid into a burn mask and label connected fires.

use pyrocarbon::fire::{classify_burn, extract_perimeters, Connectivity};
use pyrocarbon::raster::{GridHeader, RasterGrid};

pub fn run_example() -> anyhow::Result<()> {
    let header = GridHeader::new(5, 4, 30.0);
    let dnbr = RasterGrid::from_rows(
        header,
        &[
            &[0.50, 0.45, 0.02, 0.00, 0.00],
            &[0.60, 0.00, 0.00, 0.00, 0.31],
            &[0.00, 0.00, 0.00, 0.28, 0.00],
            &[0.12, -9999.0, 0.00, 0.00, 0.00],
        ],
    )?;
    let mask = classify_burn(&dnbr, 0.1);
    let summary = mask.summary();
    println!(
        "burned {} px ({} m2), unknown {} px",
        summary.burned_pixels, summary.burned_area_m2, summary.unknown_pixels
    );

    for conn in [Connectivity::Four, Connectivity::Eight] {
        let fires = extract_perimeters(&mask, conn);
        println!("{}-connectivity: {} fire(s)", u8::from(conn), fires.len());
        for f in &fires {
            let b = f.bounding_box;
            println!(
                "  #{} {} px {} m2 rows {}..={} cols {}..={}",
                f.component_id,
                f.pixel_count(),
                f.area_m2,
                b.row_min,
                b.row_max,
                b.col_min,
                b.col_max
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
