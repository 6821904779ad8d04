//! Reference implementations used by the test suites as independent oracles.
//!
//! Nothing in here shares code with `hazefuse-core`: every routine is written
//! from its textbook definition, favouring obviousness over speed.

pub mod ccl;
pub mod kriging;
pub mod linalg;
pub mod noaa;
pub mod render;
