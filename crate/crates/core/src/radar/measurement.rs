use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::{ChirpConfig, DerivedRadarProperties, SPEED_OF_LIGHT};
use crate::error::{Result, RioError};

/// Smallest admissible value of `1 - (w_y² + w_z²)/π²`; closer to the edge of
/// the hemisphere the bearing map is too nonlinear to linearize.
pub const EDGE_OF_FOV_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalQuantities {
    /// Hz
    pub beat_frequency: f64,
    /// rad
    pub interchirp_phase_shift: f64,
}

/// Horizontal and vertical inter-antenna phase shifts (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AoaPhases {
    pub w_y: f64,
    pub w_z: f64,
}

impl AoaPhases {
    pub fn new(w_y: f64, w_z: f64) -> Self {
        Self { w_y, w_z }
    }

    /// `1 - (w_y² + w_z²)/π²`, the squared x-component of the bearing.
    pub fn boresight_term(&self) -> f64 {
        1.0 - (self.w_y * self.w_y + self.w_z * self.w_z) / (PI * PI)
    }
}

/// Unit direction to a target in the radar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bearing {
    pub mu: Vector3<f64>,
}

impl Bearing {
    pub fn from_angles(azimuth: f64, elevation: f64) -> Self {
        let (st, ct) = azimuth.sin_cos();
        let (sp, cp) = elevation.sin_cos();
        Self {
            mu: Vector3::new(ct * cp, st * cp, sp),
        }
    }

    pub fn azimuth(&self) -> f64 {
        self.mu.y.atan2(self.mu.x)
    }

    pub fn elevation(&self) -> f64 {
        self.mu.z.clamp(-1.0, 1.0).asin()
    }
}

/// Simulator-side truth attached to a synthesized point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTruth {
    pub range: f64,
    pub radial_speed: f64,
    pub phases: AoaPhases,
    pub aliased: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarPoint {
    pub range: f64,
    pub radial_speed: f64,
    pub phases: AoaPhases,
    pub snr: Option<f64>,
    pub truth: Option<PointTruth>,
}

impl RadarPoint {
    pub fn new(range: f64, radial_speed: f64, phases: AoaPhases) -> Self {
        Self {
            range,
            radial_speed,
            phases,
            snr: None,
            truth: None,
        }
    }

    pub fn aliased(&self) -> bool {
        self.truth.is_some_and(|t| t.aliased)
    }

    pub fn bearing(&self) -> Result<Bearing> {
        phases_to_bearing(self.phases)
    }
}

/// Point cloud stamped at the mid-chirp time of its frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadarScan {
    pub timestamp: f64,
    pub points: Vec<RadarPoint>,
}

pub fn range_from_beat(beat_frequency: f64, cfg: &ChirpConfig) -> Result<f64> {
    let slope = cfg.chirp_slope.ok_or(RioError::MissingChirpField("chirp_slope"))?;
    if !(beat_frequency >= 0.0) {
        return Err(RioError::Domain(format!(
            "beat frequency must be non-negative, got {beat_frequency}"
        )));
    }
    Ok(beat_frequency * SPEED_OF_LIGHT / (2.0 * slope))
}

pub fn doppler_from_phase(phase_shift: f64, cfg: &ChirpConfig) -> Result<f64> {
    let tc = cfg
        .chirp_duration
        .ok_or(RioError::MissingChirpField("chirp_duration"))?;
    if !(phase_shift.abs() <= PI) {
        return Err(RioError::Domain(format!(
            "inter-chirp phase shift must lie in [-pi, pi], got {phase_shift}"
        )));
    }
    Ok(cfg.wavelength() * phase_shift / (4.0 * PI * tc))
}

/// Inverse of the two relations above, for synthesizing raw signal values.
pub fn signal_quantities(range: f64, radial_speed: f64, cfg: &ChirpConfig) -> Result<SignalQuantities> {
    let slope = cfg.chirp_slope.ok_or(RioError::MissingChirpField("chirp_slope"))?;
    let tc = cfg
        .chirp_duration
        .ok_or(RioError::MissingChirpField("chirp_duration"))?;
    Ok(SignalQuantities {
        beat_frequency: 2.0 * slope * range / SPEED_OF_LIGHT,
        interchirp_phase_shift: 4.0 * PI * tc * radial_speed / cfg.wavelength(),
    })
}

pub fn angles_to_phases(azimuth: f64, elevation: f64) -> Result<AoaPhases> {
    if !(azimuth.abs() < PI / 2.0 && elevation.abs() < PI / 2.0) {
        return Err(RioError::Domain(format!(
            "angles ({azimuth}, {elevation}) rad lie outside the front hemisphere"
        )));
    }
    Ok(AoaPhases {
        w_y: PI * azimuth.sin() * elevation.cos(),
        w_z: PI * elevation.sin(),
    })
}

pub fn phases_to_bearing(w: AoaPhases) -> Result<Bearing> {
    let s = w.boresight_term();
    if !(s >= 0.0) {
        return Err(RioError::Domain(format!(
            "phases ({}, {}) have w_y^2 + w_z^2 > pi^2",
            w.w_y, w.w_z
        )));
    }
    let mu = Vector3::new(s.sqrt(), w.w_y / PI, w.w_z / PI);
    // Normalizing removes the last ulp of drift so downstream norms are exact.
    Ok(Bearing { mu: mu / mu.norm() })
}

/// Radial speed of a static target seen from a radar moving with `v_radar`
/// (radar frame); negative when closing.
pub fn radial_speed(bearing: &Bearing, v_radar: &Vector3<f64>) -> f64 {
    -bearing.mu.dot(v_radar)
}

pub fn target_position(bearing: &Bearing, range: f64) -> Vector3<f64> {
    bearing.mu * range
}

/// Nearest center of the grid `{offset + k·bin_width}`; exact halfway values
/// go to the lower center.
pub fn quantize_to_bin(value: f64, bin_width: f64, offset: f64) -> f64 {
    offset + bin_index(value, bin_width, offset) as f64 * bin_width
}

fn bin_index(value: f64, bin_width: f64, offset: f64) -> i64 {
    ((value - offset) / bin_width - 0.5).ceil() as i64
}

/// Wrap into `[-max_doppler, max_doppler)`.
pub fn alias_wrap(v_true: f64, max_doppler: f64) -> (f64, bool) {
    let span = 2.0 * max_doppler;
    if (-max_doppler..max_doppler).contains(&v_true) {
        return (v_true, false);
    }
    let wrapped = v_true - span * ((v_true + max_doppler) / span).floor();
    // Guard against the modulo landing on +max through round-off.
    let wrapped = if wrapped >= max_doppler { wrapped - span } else { wrapped };
    (wrapped, true)
}

/// Quantize onto a grid centered at zero with `bins` cells spanning
/// `[-bins/2·w, bins/2·w)`; indices wrap around like FFT bins.
fn quantize_symmetric(value: f64, bin_width: f64, bins: u32) -> f64 {
    let n = bins as i64;
    let k = bin_index(value, bin_width, 0.0);
    let k = (k + n / 2).rem_euclid(n) - n / 2;
    k as f64 * bin_width
}

pub fn quantize_range(range: f64, cfg: &ChirpConfig, props: &DerivedRadarProperties) -> f64 {
    let w = props.bin_width_range;
    let k = bin_index(range, w, 0.5 * w).clamp(0, cfg.fft_bins_range as i64 - 1);
    0.5 * w + k as f64 * w
}

pub fn quantize_doppler(v: f64, cfg: &ChirpConfig, props: &DerivedRadarProperties) -> f64 {
    quantize_symmetric(v, props.bin_width_doppler, cfg.fft_bins_doppler)
}

pub fn quantize_phase(w: f64, cfg: &ChirpConfig, props: &DerivedRadarProperties) -> f64 {
    quantize_symmetric(w, props.bin_width_phase, cfg.fft_bins_phase)
}
