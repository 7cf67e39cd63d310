//! Simulation and analysis of EPR-type position and momentum correlations
//! between photon pairs recorded on photon-counting cameras.

pub mod config;
pub mod correlation;
pub mod detector;
pub mod error;
pub mod frames;
pub mod io;
pub mod physics;
pub mod pipeline;
pub mod sampler;
pub mod simulate;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use physics::{Axis, BiphotonParams, HEISENBERG_BOUND};
pub use sampler::PlaneKind;
