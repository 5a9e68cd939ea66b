//! FMCW chirp configurations, the range/Doppler/angle-of-arrival relations,
//! FFT-bin quantization and Doppler aliasing.

mod config;
mod measurement;

pub use config::*;
pub use measurement::*;
