use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::sensors::ExtrinsicsSpec;
use crate::error::{Result, RioError};
use crate::radar::{
    alias_wrap, derive_properties, quantize_doppler, quantize_phase, quantize_range, AoaPhases,
    ChirpConfig, PointTruth, RadarPoint, RadarScan,
};

/// Static scatterer layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneSpec {
    Explicit {
        targets: Vec<[f64; 3]>,
    },
    /// Uniform in the volume of an axis-aligned box.
    Box {
        min: [f64; 3],
        max: [f64; 3],
        count: usize,
    },
    /// Uniform on the lateral surface of a vertical cylinder, with radial
    /// jitter.
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
        jitter: f64,
        count: usize,
    },
    /// Box volume with an empty corridor `|y| < clear_y, |z - z_center| <
    /// clear_z` along the x axis, for straight-line flights.
    Corridor {
        x_min: f64,
        x_max: f64,
        half_width: f64,
        z_min: f64,
        z_max: f64,
        clear_y: f64,
        clear_z: f64,
        z_center: f64,
        count: usize,
    },
    /// Uniform on a sphere around a point.
    Sphere {
        center: [f64; 3],
        radius: f64,
        count: usize,
    },
}

impl SceneSpec {
    pub fn generate(&self, seed: u64) -> Result<Vec<Vector3<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let mut u = |a: f64, b: f64| a + (b - a) * rng.random::<f64>();
        let pts = match self {
            SceneSpec::Explicit { targets } => targets.iter().map(|t| Vector3::from(*t)).collect(),
            SceneSpec::Box { min, max, count } => (0..*count)
                .map(|_| Vector3::new(u(min[0], max[0]), u(min[1], max[1]), u(min[2], max[2])))
                .collect(),
            SceneSpec::Cylinder {
                center,
                radius,
                z_min,
                z_max,
                jitter,
                count,
            } => {
                if !(*radius > 0.0) {
                    return Err(RioError::config("radius", "must be positive"));
                }
                (0..*count)
                    .map(|_| {
                        let a = u(0.0, 2.0 * PI);
                        let r = radius + u(-jitter, *jitter);
                        Vector3::new(center[0] + r * a.cos(), center[1] + r * a.sin(), u(*z_min, *z_max))
                    })
                    .collect()
            }
            SceneSpec::Corridor {
                x_min,
                x_max,
                half_width,
                z_min,
                z_max,
                clear_y,
                clear_z,
                z_center,
                count,
            } => {
                if !(half_width > clear_y) {
                    return Err(RioError::config("clear_y", "must be smaller than half_width"));
                }
                let mut out = Vec::with_capacity(*count);
                while out.len() < *count {
                    let p = Vector3::new(u(*x_min, *x_max), u(-half_width, *half_width), u(*z_min, *z_max));
                    if p.y.abs() >= *clear_y || (p.z - z_center).abs() >= *clear_z {
                        out.push(p);
                    }
                }
                out
            }
            SceneSpec::Sphere { center, radius, count } => {
                let c = Vector3::from(*center);
                (0..*count)
                    .map(|_| {
                        let z = u(-1.0, 1.0);
                        let a = u(0.0, 2.0 * PI);
                        let s = (1.0 - z * z).sqrt();
                        c + *radius * Vector3::new(s * a.cos(), s * a.sin(), z)
                    })
                    .collect()
            }
        };
        Ok(pts)
    }
}

/// Detection model applied when synthesizing scans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionSpec {
    pub max_points: usize,
    /// Half-angle, deg
    pub azimuth_fov: f64,
    /// Half-angle, deg
    pub elevation_fov: f64,
    pub min_range: f64,
    /// Defaults to the chirp configuration's maximum range.
    pub max_range: Option<f64>,
    pub dropout: f64,
    pub quantize: bool,
    /// Optional zero-mean Gaussian noise added before quantization.
    pub range_noise: f64,
    pub doppler_noise: f64,
    pub phase_noise: f64,
}

impl Default for DetectionSpec {
    fn default() -> Self {
        Self {
            max_points: 64,
            azimuth_fov: 60.0,
            elevation_fov: 60.0,
            min_range: 0.3,
            max_range: None,
            dropout: 0.0,
            quantize: true,
            range_noise: 0.0,
            doppler_noise: 0.0,
            phase_noise: 0.0,
        }
    }
}

impl DetectionSpec {
    pub fn validate(&self, cfg: &ChirpConfig) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(RioError::config("dropout", "must lie in [0, 1]"));
        }
        if !(self.azimuth_fov > 0.0 && self.azimuth_fov < 90.0) {
            return Err(RioError::config("azimuth_fov", "must lie in (0, 90) deg"));
        }
        if !(self.elevation_fov > 0.0 && self.elevation_fov < 90.0) {
            return Err(RioError::config("elevation_fov", "must lie in (0, 90) deg"));
        }
        if let Some(r) = self.max_range {
            if !(r > self.min_range && r <= cfg.max_range) {
                return Err(RioError::config(
                    "max_range",
                    "must exceed min_range and not exceed the chirp maximum range",
                ));
            }
        }
        for (f, v) in [
            ("range_noise", self.range_noise),
            ("doppler_noise", self.doppler_noise),
            ("phase_noise", self.phase_noise),
        ] {
            if !(v >= 0.0) {
                return Err(RioError::config(f, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Platform state needed to synthesize one scan.
#[derive(Debug, Clone, Copy)]
pub struct PlatformState {
    /// body to inertial
    pub rot: Matrix3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub omega_body: Vector3<f64>,
}

/// Radar-frame velocity of the radar origin.
pub fn radar_velocity(state: &PlatformState, ext: &ExtrinsicsSpec) -> Vector3<f64> {
    ext.rotation().transpose() * (state.rot.transpose() * state.v + state.omega_body.cross(&ext.lever()))
}

/// One radar scan of a static scene: visibility filter, true radial speed
/// including the lever-arm term, Doppler aliasing, optional noise, FFT-grid
/// quantization, dropout and a nearest-first point cap.
#[allow(clippy::too_many_arguments)]
pub fn synth_radar_scan(
    t: f64,
    state: &PlatformState,
    targets: &[Vector3<f64>],
    det: &DetectionSpec,
    cfg: &ChirpConfig,
    ext: &ExtrinsicsSpec,
    rng: &mut impl Rng,
) -> Result<RadarScan> {
    det.validate(cfg)?;
    let props = derive_properties(cfg)?;
    let r_ir = state.rot * ext.rotation();
    let p_r = state.p + state.rot * ext.lever();
    let v_r = radar_velocity(state, ext);
    let max_range = det.max_range.unwrap_or(cfg.max_range);
    let (tan_az, sin_el) = (det.azimuth_fov.to_radians().tan(), det.elevation_fov.to_radians().sin());

    let mut candidates: Vec<(f64, usize, RadarPoint)> = Vec::new();
    for (idx, q) in targets.iter().enumerate() {
        let local = r_ir.transpose() * (q - p_r);
        let d = local.norm();
        if !(d >= det.min_range && d <= max_range) {
            continue;
        }
        let mu = local / d;
        if mu.x <= 0.0 || mu.y.abs() > tan_az * mu.x || mu.z.abs() > sin_el {
            continue;
        }
        let true_vr = -mu.dot(&v_r);
        let truth_phases = AoaPhases::new(PI * mu.y, PI * mu.z);
        let (wrapped, aliased) = alias_wrap(true_vr, cfg.max_doppler);

        let mut range = d;
        let mut vr = wrapped;
        let mut w = truth_phases;
        if det.range_noise > 0.0 {
            range += det.range_noise * { let z: f64 = StandardNormal.sample(rng); z };
        }
        if det.doppler_noise > 0.0 {
            vr += det.doppler_noise * { let z: f64 = StandardNormal.sample(rng); z };
        }
        if det.phase_noise > 0.0 {
            w.w_y += det.phase_noise * { let z: f64 = StandardNormal.sample(rng); z };
            w.w_z += det.phase_noise * { let z: f64 = StandardNormal.sample(rng); z };
        }
        if det.quantize {
            range = quantize_range(range, cfg, &props);
            vr = quantize_doppler(vr, cfg, &props);
            w = AoaPhases::new(quantize_phase(w.w_y, cfg, &props), quantize_phase(w.w_z, cfg, &props));
        }
        if w.boresight_term() <= 0.0 {
            continue;
        }
        if det.dropout > 0.0 && rng.random::<f64>() < det.dropout {
            continue;
        }
        let mut point = RadarPoint::new(range, vr, w);
        point.truth = Some(PointTruth {
            range: d,
            radial_speed: true_vr,
            phases: truth_phases,
            aliased,
        });
        candidates.push((d, idx, point));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    candidates.truncate(det.max_points);
    Ok(RadarScan {
        timestamp: t,
        points: candidates.into_iter().map(|c| c.2).collect(),
    })
}
