pub mod acoustics;
pub mod beamforming;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod neural;
pub mod seed;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
