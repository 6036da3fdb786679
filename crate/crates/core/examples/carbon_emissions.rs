//! Biomass and carbon stock from NDVI, then per-fire emissions through the
//! severity and stock-delta pathways.

use pyrocarbon::carbon::{
    carbon_stock_map, fire_emissions, stock_delta_emissions, ClassTable, Co2eConvention, Co2eConversion, SeverityEntry,
    SeverityTable, VegetationClass,
};
use pyrocarbon::fire::{classify_burn, extract_perimeters, Connectivity};
use pyrocarbon::raster::{GridHeader, RasterGrid};

pub fn run_example() -> anyhow::Result<()> {
    let header = GridHeader::new(2, 2, 10.0);
    let pre_ndvi = RasterGrid::filled(header, 0.75)?;
    let post_ndvi = RasterGrid::from_rows(header, &[&[0.35, 0.75], &[0.75, 0.75]])?;
    let dnbr = RasterGrid::from_rows(header, &[&[0.5, 0.0], &[0.0, 0.0]])?;
    let class_map = RasterGrid::filled(header, 1.0)?;

    let classes = ClassTable::new([VegetationClass {
        class_id: 1,
        name: "conifer".into(),
        agb_a: 100.0,
        agb_b: 0.25,
        agb_c: 2.0,
        carbon_fraction: 0.5,
    }])?;
    let entry = |lower_dnbr, label: &str, combustion_fraction| SeverityEntry {
        lower_dnbr,
        label: label.into(),
        combustion_fraction,
    };
    let table = SeverityTable::new(vec![
        entry(0.1, "low", 0.2),
        entry(0.27, "moderate-low", 0.4),
        entry(0.44, "moderate-high", 0.6),
        entry(0.66, "high", 0.8),
    ])?;

    let pre_carbon = carbon_stock_map(&pre_ndvi, &class_map, &classes)?;
    let post_carbon = carbon_stock_map(&post_ndvi, &class_map, &classes)?;
    println!("pre-fire stock {:?} kgC/m2", pre_carbon.get(0, 0));
    println!("severity at dNBR 0.5: {}", table.severity_of(0.5).label());

    let fire = &extract_perimeters(&classify_burn(&dnbr, 0.1), Connectivity::Four)[0];
    for convention in [Co2eConvention::ShareOfTotal, Co2eConvention::Additive] {
        let conv = Co2eConversion::new(0.08, convention)?;
        let e = fire_emissions(fire, &pre_carbon, &dnbr, &table, &conv)?;
        println!(
            "{convention:?}: C {} kg, CO2 {} kg, CO2e {:.1} kg",
            e.carbon_loss_kgc, e.co2_kg, e.co2e_total_kg
        );
    }
    let delta = stock_delta_emissions(fire, &pre_carbon, &post_carbon, &Co2eConversion::share_of_total(0.08)?)?;
    println!("stock delta: C {} kg, CO2 {:.1} kg", delta.carbon_loss_kgc, delta.co2_kg);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
