use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::RobustLoss;
use super::solver::LmConfig;
use crate::error::{Result, RioError};
use crate::mapping::MapConfig;
use crate::sim::ImuNoise;

/// Stationary start-up: how long to average and how much spread still
/// counts as "at rest".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// s
    pub duration: f64,
    /// rad/s, per axis
    pub max_gyro_std: f64,
    /// m/s², per axis
    pub max_accel_std: f64,
    /// Accelerometer bias uncertainty that leaks into roll and pitch, m/s².
    pub accel_bias_sigma: f64,
    /// rad/s
    pub gyro_bias_sigma: f64,
    /// rad
    pub yaw_sigma: f64,
    /// m
    pub position_sigma: f64,
    /// m/s
    pub velocity_sigma: f64,
    /// m
    pub baro_bias_sigma: f64,
    /// rad
    pub extrinsic_rotation_sigma: f64,
    /// m
    pub lever_arm_sigma: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            duration: 1.0,
            max_gyro_std: 0.01,
            max_accel_std: 0.1,
            accel_bias_sigma: 0.05,
            gyro_bias_sigma: 1e-3,
            yaw_sigma: 1e-2,
            position_sigma: 1e-3,
            velocity_sigma: 1e-2,
            baro_bias_sigma: 0.5,
            extrinsic_rotation_sigma: 0.02,
            lever_arm_sigma: 0.02,
        }
    }
}

/// Validity window applied to radar points before any factor is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointFilter {
    /// m
    pub min_range: f64,
    /// m
    pub max_range: f64,
    /// deg, half-angle
    pub azimuth_fov: f64,
    /// deg, half-angle
    pub elevation_fov: f64,
}

impl Default for PointFilter {
    fn default() -> Self {
        Self {
            min_range: 0.3,
            max_range: 100.0,
            azimuth_fov: 60.0,
            elevation_fov: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Include the bearing contribution in the Doppler variance; off means
    /// the constant quantization variance.
    pub angle_noise_on: bool,
    pub registration_on: bool,
    pub baro_on: bool,
    /// Include gyro noise through the lever arm in the Doppler variance.
    pub gyro_term_on: bool,
    pub estimate_extrinsics: bool,
    /// Smoother lag, s.
    pub lag: f64,
    /// Whitened Doppler threshold for a point to count as static.
    pub kappa_static: f64,
    pub doppler_loss: RobustLoss,
    pub registration_loss: RobustLoss,
    pub baro_loss: RobustLoss,
    /// m
    pub baro_sigma: f64,
    /// m/√s
    pub baro_bias_walk: f64,
    pub imu: ImuNoise,
    /// Overrides the AoA phase noise derived from the chirp, rad.
    pub phase_noise: Option<f64>,
    /// Bias change (rad/s or m/s²) that triggers re-preintegration.
    pub repreintegrate_threshold: f64,
    /// m², added to neighborhood covariances.
    pub registration_cov_floor: f64,
    pub solver: LmConfig,
    pub map: MapConfig,
    pub init: InitConfig,
    pub filter: PointFilter,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            angle_noise_on: true,
            registration_on: false,
            baro_on: false,
            gyro_term_on: false,
            estimate_extrinsics: false,
            lag: 2.0,
            kappa_static: 3.0,
            doppler_loss: RobustLoss::Cauchy { scale: 1.0 },
            registration_loss: RobustLoss::Cauchy { scale: 1.0 },
            baro_loss: RobustLoss::Huber { scale: 1.345 },
            baro_sigma: 0.5,
            baro_bias_walk: 0.01,
            imu: ImuNoise::default(),
            phase_noise: None,
            repreintegrate_threshold: 1e-3,
            registration_cov_floor: 1e-3,
            solver: LmConfig::default(),
            map: MapConfig::default(),
            init: InitConfig::default(),
            filter: PointFilter::default(),
        }
    }
}

pub const PRESET_NAMES: [&str; 4] = ["base", "noise", "geometry", "baro"];

impl EstimatorConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let noise = Self::default();
        Some(match name {
            "base" => Self {
                angle_noise_on: false,
                ..noise
            },
            "noise" => noise,
            "geometry" => Self {
                registration_on: true,
                ..noise
            },
            "baro" => Self {
                baro_on: true,
                ..noise
            },
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lag", self.lag),
            ("baro_sigma", self.baro_sigma),
            ("init.duration", self.init.duration),
            ("registration_cov_floor", self.registration_cov_floor),
            ("repreintegrate_threshold", self.repreintegrate_threshold),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RioError::config(field, "must be positive"));
            }
        }
        if !(self.kappa_static >= 0.0) {
            return Err(RioError::config("kappa_static", "must be non-negative"));
        }
        for (field, loss) in [
            ("doppler_loss", self.doppler_loss),
            ("registration_loss", self.registration_loss),
            ("baro_loss", self.baro_loss),
        ] {
            if let RobustLoss::Huber { scale } | RobustLoss::Cauchy { scale } = loss {
                if !(scale > 0.0) {
                    return Err(RioError::config(field, "scale must be positive"));
                }
            }
        }
        if self.solver.max_iterations == 0 {
            return Err(RioError::config("solver.max_iterations", "must be at least 1"));
        }
        if let Some(p) = self.phase_noise {
            if !(p >= 0.0) {
                return Err(RioError::config("phase_noise", "must be non-negative"));
            }
        }
        let f = &self.filter;
        if !(f.min_range >= 0.0 && f.max_range > f.min_range) {
            return Err(RioError::config("filter", "range limits must satisfy 0 <= min < max"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| RioError::config("estimator config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// A preset name or the path of a TOML file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::preset(name_or_path) {
            Some(c) => Ok(c),
            None if Path::new(name_or_path).is_file() => Self::load(Path::new(name_or_path)),
            None => Err(RioError::config(
                "config",
                format!("`{name_or_path}` is neither a preset ({}) nor a file", PRESET_NAMES.join(", ")),
            )),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("estimator config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let c = EstimatorConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(EstimatorConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        }
        assert!(!EstimatorConfig::preset("base").unwrap().angle_noise_on);
        assert!(EstimatorConfig::preset("geometry").unwrap().registration_on);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = EstimatorConfig::from_toml_str("angle_noise_on = false\nlag = 1.5\n").unwrap();
        assert_eq!(c.lag, 1.5);
        assert_eq!(c.kappa_static, 3.0);
        let e = EstimatorConfig::from_toml_str("lag = -1.0\n").unwrap_err();
        assert!(e.is_validation());
    }
}
