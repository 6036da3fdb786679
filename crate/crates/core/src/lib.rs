//! Wildfire emissions accounting and reversal-risk engine.
//!
//! The crate turns band rasters (or precomputed index rasters and external
//! burn masks) into burned-area perimeters, per-fire carbon and CO2e
//! emissions, risk-adjusted sequestration for crediting, buffer-pool
//! depletion trajectories, insurance premiums and IBNR reserves. Any scalar
//! parameter of a scenario can carry a distribution, and Monte Carlo
//! propagation, one-at-a-time sensitivity and expected value of perfect
//! information run over the same evaluation path as the point estimate.
//!
//! The modules mirror the processing chain:
//!
//! - [`raster`]: grids, ASCII grid I/O, NDVI/NBR/BAI and dNBR
//! - [`fire`]: burn classification, mask ingestion, perimeter extraction
//! - [`carbon`]: biomass, carbon stock, burn severity, emissions
//! - [`risk`]: wildfire probability, crediting adjustment, buffer pools
//! - [`insurance`]: premiums, exposure screening, IBNR reserves
//! - [`uncertainty`]: distributions, Monte Carlo, sensitivity, EVPI
//! - [`scenario`], [`pipeline`], [`service`]: declarative scenarios, the
//!   end-to-end run producing a report, and the HTTP what-if service

pub mod carbon;
pub mod fire;
pub mod insurance;
pub mod pipeline;
pub mod raster;
pub mod risk;
pub mod scenario;
pub mod service;
pub mod uncertainty;

pub const ENGINE_VERSION: &str = concat!("pyrocarbon/", env!("CARGO_PKG_VERSION"));
