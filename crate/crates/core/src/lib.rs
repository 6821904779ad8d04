//! Air-quality estimation from heterogeneous sources.
//!
//! Sky photos become AOD estimates through solar geometry, sky segmentation
//! and an R/G lookup table. Filter photos become PM estimates through blob
//! counting. Web payloads and pages are scraped into the same observation
//! store, and [`fusion`] residual-krigs any one phenomenon onto a base map.

pub mod observation;
pub mod solar;
pub mod raster;
pub mod sky;
pub mod aod;
pub mod blob;
pub mod ingest;
pub mod fusion;
