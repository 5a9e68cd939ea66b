//! Synthetic trajectories, IMU/barometer streams and quantized, aliased radar
//! scans of static scenes.

mod dataset;
mod scene;
mod sensors;
mod trajectory;

pub use dataset::*;
pub use scene::*;
pub use sensors::*;
pub use trajectory::*;
