//! Fixed-lag smoother fusing preintegrated IMU, radar Doppler, scan-to-map
//! registration and barometric altitude.

pub mod config;
pub mod factors;
pub mod graph;
pub mod init;
pub mod linear;
pub mod loss;
pub mod pipeline;
pub mod preintegration;
pub mod solver;
pub mod state;
pub mod window;

pub use config::{EstimatorConfig, InitConfig, PointFilter};
pub use graph::{Context, Factor, Key, KeyValue, LinearFactor, MarginalPrior, Node, Values};
pub use init::initialize_at_rest;
pub use loss::RobustLoss;
pub use pipeline::{Estimator, PoseRecord, ScanStats};
pub use preintegration::{BiasWalk, ImuFactor, PreintegratedImu};
pub use solver::{LmConfig, OptimizeReport};
pub use state::{Extrinsics, NavState, EXT_DIM, NAV_DIM};
pub use window::SlidingWindow;
