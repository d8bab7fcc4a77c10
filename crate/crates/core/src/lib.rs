//! Drone road system simulation: geometry, road description, radio channel,
//! decentralized guidance, discrete-event engine and sensitivity analysis.

pub mod analysis;
pub mod cli;
pub mod drs;
pub mod engine;
pub mod geometry;
pub mod guidance;
pub mod radio;
