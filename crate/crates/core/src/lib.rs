//! Radar-inertial odometry with quantization-aware FMCW measurement models.

pub mod analysis;
pub mod atmosphere;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod mapping;
pub mod noise;
pub mod sim;
pub mod radar;

pub use error::{Result, RioError};
