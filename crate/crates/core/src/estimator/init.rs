use nalgebra::Vector3;

use super::config::InitConfig;
use super::state::{NavState, NAV_DIM};
use crate::error::{Result, RioError};
use crate::geometry::from_rpy;
use crate::sim::{ImuSample, GRAVITY};

/// Gravity-aligned state at rest with yaw 0, and the standard deviations
/// of its prior. Uses the samples in `[imu[0].t, imu[0].t + cfg.duration]`.
pub fn initialize_at_rest(imu: &[ImuSample], cfg: &InitConfig) -> Result<(NavState, [f64; NAV_DIM])> {
    let Some(first) = imu.first() else {
        return Err(RioError::Initialization("no IMU samples".into()));
    };
    let end = first.t + cfg.duration;
    if imu.last().is_none_or(|s| s.t < end - 1e-9) {
        return Err(RioError::Initialization(format!(
            "IMU buffer spans less than {} s",
            cfg.duration
        )));
    }
    let window: Vec<&ImuSample> = imu.iter().take_while(|s| s.t <= end + 1e-9).collect();
    let n = window.len() as f64;
    let mean_w = window.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / n;
    let mean_f = window.iter().map(|s| s.accel).sum::<Vector3<f64>>() / n;
    let std = |f: &dyn Fn(&ImuSample) -> Vector3<f64>, mean: &Vector3<f64>| -> Vector3<f64> {
        let var = window.iter().map(|s| (f(s) - mean).component_mul(&(f(s) - mean))).sum::<Vector3<f64>>() / n;
        var.map(f64::sqrt)
    };
    let sw = std(&|s| s.gyro, &mean_w);
    let sf = std(&|s| s.accel, &mean_f);
    if sw.max() > cfg.max_gyro_std || sf.max() > cfg.max_accel_std {
        return Err(RioError::Initialization(format!(
            "motion detected while averaging (gyro std {:.3e} rad/s, accel std {:.3e} m/s²)",
            sw.max(),
            sf.max()
        )));
    }
    let roll = mean_f.y.atan2(mean_f.z);
    let pitch = (-mean_f.x).atan2(mean_f.yz().norm());
    let state = NavState {
        rot: from_rpy(roll, pitch, 0.0),
        bg: mean_w,
        ..NavState::default()
    };
    // Tilt cannot be separated from accelerometer bias at rest, so the
    // bias uncertainty is folded into roll and pitch.
    let g = GRAVITY.norm();
    let tilt = ((sf.max() / g).powi(2) / n + (cfg.accel_bias_sigma / g).powi(2)).sqrt();
    let mut sig = [0.0; NAV_DIM];
    sig[0] = tilt;
    sig[1] = tilt;
    sig[2] = cfg.yaw_sigma;
    for k in 3..6 {
        sig[k] = cfg.position_sigma;
    }
    for k in 6..9 {
        sig[k] = cfg.velocity_sigma;
    }
    for k in 9..12 {
        sig[k] = cfg.accel_bias_sigma;
    }
    for k in 12..15 {
        sig[k] = cfg.gyro_bias_sigma.max(sw.max() / n.sqrt());
    }
    sig[15] = cfg.baro_bias_sigma;
    Ok((state, sig))
}
