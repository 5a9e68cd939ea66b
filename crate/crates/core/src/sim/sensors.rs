use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::trajectory::{Trajectory, TrajectorySample};
use crate::atmosphere::pressure_from_altitude;
use crate::error::{Result, RioError};
use crate::geometry::from_rpy;

/// Inertial-frame gravity, z up.
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

/// Continuous-time IMU noise densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoise {
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// rad/s²/√Hz
    pub gyro_bias_random_walk: f64,
    /// m/s³/√Hz
    pub accel_bias_random_walk: f64,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            gyro_noise_density: 5.4380545e-5,
            accel_noise_density: 1.3886656e-3,
            gyro_bias_random_walk: 1.6587925e-6,
            accel_bias_random_walk: 8.5382127e-5,
        }
    }
}

impl ImuNoise {
    pub fn zero() -> Self {
        Self {
            gyro_noise_density: 0.0,
            accel_noise_density: 0.0,
            gyro_bias_random_walk: 0.0,
            accel_bias_random_walk: 0.0,
        }
    }
}

/// Radar mounting: rotation from radar to body frame as roll/pitch/yaw in
/// degrees, and the radar origin in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicsSpec {
    pub rpy_deg: [f64; 3],
    pub lever_arm: [f64; 3],
}

impl Default for ExtrinsicsSpec {
    fn default() -> Self {
        Self {
            rpy_deg: [0.0, 0.0, 0.0],
            lever_arm: [0.05, 0.0, -0.03],
        }
    }
}

impl ExtrinsicsSpec {
    pub fn rotation(&self) -> Matrix3<f64> {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        from_rpy(r, p, y)
    }

    pub fn lever(&self) -> Vector3<f64> {
        Vector3::from(self.lever_arm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigSpec {
    pub imu_rate: f64,
    pub radar_rate: f64,
    pub baro_rate: f64,
    pub extrinsics: ExtrinsicsSpec,
    pub imu_noise: ImuNoise,
    pub initial_gyro_bias: [f64; 3],
    pub initial_accel_bias: [f64; 3],
    /// m
    pub baro_std: f64,
    /// m/√s
    pub baro_bias_drift: f64,
    /// m
    pub initial_baro_bias: f64,
    /// Offset of the first radar scan from t = 0, s.
    pub radar_time_offset: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            imu_rate: 200.0,
            radar_rate: 10.0,
            baro_rate: 20.0,
            extrinsics: ExtrinsicsSpec::default(),
            imu_noise: ImuNoise::default(),
            initial_gyro_bias: [0.0; 3],
            initial_accel_bias: [0.0; 3],
            baro_std: 0.1,
            baro_bias_drift: 0.01,
            initial_baro_bias: 0.0,
            radar_time_offset: 0.0123,
        }
    }
}

impl RigSpec {
    /// Same rates and mounting with every stochastic term switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            imu_noise: ImuNoise::zero(),
            initial_gyro_bias: [0.0; 3],
            initial_accel_bias: [0.0; 3],
            baro_std: 0.0,
            baro_bias_drift: 0.0,
            initial_baro_bias: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, rate) in [
            ("imu_rate", self.imu_rate),
            ("radar_rate", self.radar_rate),
            ("baro_rate", self.baro_rate),
        ] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(RioError::config(field, "must be positive"));
            }
        }
        let n = &self.imu_noise;
        for (field, v) in [
            ("gyro_noise_density", n.gyro_noise_density),
            ("accel_noise_density", n.accel_noise_density),
            ("gyro_bias_random_walk", n.gyro_bias_random_walk),
            ("accel_bias_random_walk", n.accel_bias_random_walk),
            ("baro_std", self.baro_std),
            ("baro_bias_drift", self.baro_bias_drift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(RioError::config(field, "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaroSample {
    pub t: f64,
    /// Pa
    pub pressure: f64,
}

/// Ground truth at one IMU instant, including the biases used to corrupt it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub omega_body: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng))
}

/// Sample times `offset + k/rate` inside `[0, duration]`.
pub fn sample_times(rate: f64, offset: f64, duration: f64) -> Vec<f64> {
    let n = ((duration - offset) * rate + 1e-9).floor().max(-1.0) as i64;
    (0..=n).map(|k| offset + k as f64 / rate).collect()
}

/// Specific force measured by an ideal accelerometer.
pub fn specific_force(s: &TrajectorySample) -> Vector3<f64> {
    s.rot.transpose() * (s.a - GRAVITY)
}

/// IMU stream and matching truth at the IMU rate. White noise is discretized
/// as `density·√rate`, bias random walks as `density·√dt` per step.
pub fn synth_imu(traj: &Trajectory, rig: &RigSpec, seed: u64) -> Result<(Vec<ImuSample>, Vec<TruthSample>)> {
    rig.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let n = &rig.imu_noise;
    let dt = 1.0 / rig.imu_rate;
    let (sg, sa) = (
        n.gyro_noise_density * rig.imu_rate.sqrt(),
        n.accel_noise_density * rig.imu_rate.sqrt(),
    );
    let (rg, ra) = (n.gyro_bias_random_walk * dt.sqrt(), n.accel_bias_random_walk * dt.sqrt());
    let mut bg = Vector3::from(rig.initial_gyro_bias);
    let mut ba = Vector3::from(rig.initial_accel_bias);
    let times = sample_times(rig.imu_rate, 0.0, traj.duration());
    let mut imu = Vec::with_capacity(times.len());
    let mut truth = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            bg += rg * normal3(&mut rng);
            ba += ra * normal3(&mut rng);
        }
        let s = traj.sample(t)?;
        imu.push(ImuSample {
            t,
            gyro: s.omega_body + bg + sg * normal3(&mut rng),
            accel: specific_force(&s) + ba + sa * normal3(&mut rng),
        });
        truth.push(TruthSample {
            t,
            rot: s.rot,
            p: s.p,
            v: s.v,
            omega_body: s.omega_body,
            gyro_bias: bg,
            accel_bias: ba,
        });
    }
    Ok((imu, truth))
}

/// Pressure readings whose standard-atmosphere altitude equals true height
/// plus a drifting bias and white noise.
pub fn synth_baro(traj: &Trajectory, rig: &RigSpec, seed: u64) -> Result<Vec<BaroSample>> {
    rig.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let dt = 1.0 / rig.baro_rate;
    let mut bias = rig.initial_baro_bias;
    let times = sample_times(rig.baro_rate, 0.0, traj.duration());
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            bias += rig.baro_bias_drift * dt.sqrt() * z;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let h = traj.sample(t)?.p.z + bias + rig.baro_std * z;
        out.push(BaroSample {
            t,
            pressure: pressure_from_altitude(h),
        });
    }
    Ok(out)
}
