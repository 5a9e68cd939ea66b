//! Field-of-view studies of the noise model and trajectory error metrics.

mod fov;
mod trajectory;

pub use fov::*;
pub use trajectory::*;
