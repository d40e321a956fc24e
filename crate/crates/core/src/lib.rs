//! Shape estimation of a cable-driven continuum manipulator from fiber Bragg
//! grating wavelength shifts, with Monte Carlo dropout uncertainty.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fbg;
pub mod kinematics;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod uncertainty;
pub mod verify;

pub use error::{Error, Result};
