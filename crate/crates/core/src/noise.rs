//! Quantization noise statistics and the first-order covariances they induce
//! on the bearing, the Doppler residual and the registered point position.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Matrix3x2, RowVector3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RioError};
use crate::radar::{
    derive_properties, phases_to_bearing, quantize_doppler, quantize_phase, quantize_range,
    AoaPhases, Bearing, ChirpConfig, EDGE_OF_FOV_GUARD,
};

/// Uniform quantization noise on one channel, summarized by its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantNoise {
    pub bin_width: f64,
    pub std_dev: f64,
}

impl QuantNoise {
    pub fn from_bin_width(bin_width: f64) -> Self {
        Self {
            bin_width,
            std_dev: bin_width / 12f64.sqrt(),
        }
    }

    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }
}

/// Standard deviations of the horizontal and vertical AoA phase noise (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoise {
    pub sigma_wy: f64,
    pub sigma_wz: f64,
}

impl PhaseNoise {
    pub fn isotropic(sigma: f64) -> Self {
        Self {
            sigma_wy: sigma,
            sigma_wz: sigma,
        }
    }

    pub fn zero() -> Self {
        Self::isotropic(0.0)
    }

    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma_wy.powi(2), 0.0, 0.0, self.sigma_wz.powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingCovariance {
    pub sigma_mu: Matrix3<f64>,
}

/// Per-channel quantization noise of one chirp configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub range: QuantNoise,
    pub doppler: QuantNoise,
    pub phase: PhaseNoise,
    pub phase_bin_width: f64,
}

impl NoiseModel {
    pub fn from_config(cfg: &ChirpConfig) -> Result<Self> {
        let p = derive_properties(cfg)?;
        let phase = QuantNoise::from_bin_width(p.bin_width_phase);
        Ok(Self {
            range: QuantNoise::from_bin_width(p.bin_width_range),
            doppler: QuantNoise::from_bin_width(p.bin_width_doppler),
            phase: PhaseNoise::isotropic(phase.std_dev),
            phase_bin_width: p.bin_width_phase,
        })
    }
}

pub fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (m + m.transpose())
}

pub fn bearing_jacobian(w: AoaPhases) -> Result<Matrix3x2<f64>> {
    let s = w.boresight_term();
    if !(s >= EDGE_OF_FOV_GUARD) {
        return Err(RioError::Domain(format!(
            "phases ({}, {}) too close to the edge of the field of view",
            w.w_y, w.w_z
        )));
    }
    let k = -1.0 / (PI * PI * s.sqrt());
    Ok(Matrix3x2::new(
        k * w.w_y,
        k * w.w_z,
        1.0 / PI,
        0.0,
        0.0,
        1.0 / PI,
    ))
}

pub fn bearing_covariance(w: AoaPhases, pn: &PhaseNoise) -> Result<BearingCovariance> {
    let j = bearing_jacobian(w)?;
    Ok(BearingCovariance {
        sigma_mu: symmetrize(&(j * pn.covariance() * j.transpose())),
    })
}

/// Optional angular-rate contribution to the Doppler residual variance, for
/// radars mounted with a large lever arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GyroTerm {
    /// `μᵀ R_RBᵀ [l]×`
    pub jacobian: RowVector3<f64>,
    /// Covariance of the averaged angular-rate measurement.
    pub avg_rate_cov: Matrix3<f64>,
}

impl GyroTerm {
    pub fn new(
        bearing: &Bearing,
        r_body_radar: &Matrix3<f64>,
        lever_arm: &Vector3<f64>,
        avg_rate_cov: Matrix3<f64>,
    ) -> Self {
        Self {
            jacobian: bearing.mu.transpose()
                * r_body_radar.transpose()
                * crate::geometry::skew(lever_arm),
            avg_rate_cov,
        }
    }
}

pub fn doppler_residual_variance(
    _mu_meas: &Bearing,
    v_radar_est: &Vector3<f64>,
    quant: &QuantNoise,
    sigma_mu: &BearingCovariance,
    gyro: Option<&GyroTerm>,
) -> f64 {
    let mut var = quant.variance() + (v_radar_est.transpose() * sigma_mu.sigma_mu * v_radar_est)[0];
    if let Some(g) = gyro {
        var += (g.jacobian * g.avg_rate_cov * g.jacobian.transpose())[0];
    }
    var
}

pub fn registration_covariance(
    mu_meas: &Bearing,
    range_meas: f64,
    quant_range: &QuantNoise,
    sigma_mu: &BearingCovariance,
    r_world_radar: &Matrix3<f64>,
    sigma_q: &Matrix3<f64>,
) -> Matrix3<f64> {
    let mu = mu_meas.mu;
    let local = quant_range.variance() * mu * mu.transpose()
        + range_meas * range_meas * sigma_mu.sigma_mu;
    symmetrize(&(r_world_radar * local * r_world_radar.transpose() + sigma_q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std: f64,
}

impl SampleStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// True target state around which the measurement oracle samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleScenario {
    pub range: f64,
    pub radial_speed: f64,
    pub phases: AoaPhases,
    /// Truth is jittered uniformly over this many bins per channel so that the
    /// quantization error is sampled over its full support.
    pub jitter_bins: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleStats {
    pub range: SampleStats,
    pub doppler: SampleStats,
    pub phase_y: SampleStats,
    pub phase_z: SampleStats,
}

/// Monte-Carlo statistics of the quantization error (quantized − true) in
/// every channel, using the FFT grids of `cfg`.
pub fn mc_measurement_oracle(cfg: &ChirpConfig, sc: &OracleScenario, seed: u64) -> Result<OracleStats> {
    let p = derive_properties(cfg)?;
    if sc.samples < 2 {
        return Err(RioError::config("samples", "need at least 2 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |w: f64| (rng.random::<f64>() - 0.5) * sc.jitter_bins * w;
    let n = sc.samples;
    let (mut er, mut ed, mut ey, mut ez) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for _ in 0..n {
        let r = sc.range + jitter(p.bin_width_range);
        let v = sc.radial_speed + jitter(p.bin_width_doppler);
        let wy = sc.phases.w_y + jitter(p.bin_width_phase);
        let wz = sc.phases.w_z + jitter(p.bin_width_phase);
        er.push(quantize_range(r, cfg, &p) - r);
        ed.push(quantize_doppler(v, cfg, &p) - v);
        ey.push(quantize_phase(wy, cfg, &p) - wy);
        ez.push(quantize_phase(wz, cfg, &p) - wz);
    }
    Ok(OracleStats {
        range: SampleStats::from_samples(&er),
        doppler: SampleStats::from_samples(&ed),
        phase_y: SampleStats::from_samples(&ey),
        phase_z: SampleStats::from_samples(&ez),
    })
}

/// Sample covariance of the bearing when the phases carry uniform noise of
/// width `phase_bin_width`.
pub fn bearing_covariance_mc(
    w: AoaPhases,
    phase_bin_width: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Matrix3<f64> {
    let mut acc = Vec::with_capacity(samples);
    for _ in 0..samples {
        let wn = AoaPhases::new(
            w.w_y + (rng.random::<f64>() - 0.5) * phase_bin_width,
            w.w_z + (rng.random::<f64>() - 0.5) * phase_bin_width,
        );
        if let Ok(b) = phases_to_bearing(wn) {
            acc.push(b.mu);
        }
    }
    let n = acc.len() as f64;
    let mean = acc.iter().sum::<Vector3<f64>>() / n;
    acc.iter()
        .map(|m| (m - mean) * (m - mean).transpose())
        .sum::<Matrix3<f64>>()
        / (n - 1.0)
}

/// Monte-Carlo standard deviation of the full nonlinear Doppler residual
/// `-μ̃ᵀv - ṽ_r` at the true radar velocity, with uniform noise on both
/// phases and on the radial speed.
pub fn doppler_residual_mc_std(
    w: AoaPhases,
    v_radar: &Vector3<f64>,
    noise: &NoiseModel,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mu_true = phases_to_bearing(w)?.mu;
    let vr_true = -mu_true.dot(v_radar);
    let (lw, lv) = (noise.phase_bin_width, noise.doppler.bin_width);
    let (mut sum, mut sum2, mut n) = (0.0, 0.0, 0usize);
    for _ in 0..samples {
        let wn = AoaPhases::new(
            w.w_y + (rng.random::<f64>() - 0.5) * lw,
            w.w_z + (rng.random::<f64>() - 0.5) * lw,
        );
        let Ok(b) = phases_to_bearing(wn) else { continue };
        let vr = vr_true + (rng.random::<f64>() - 0.5) * lv;
        let e = -b.mu.dot(v_radar) - vr;
        sum += e;
        sum2 += e * e;
        n += 1;
    }
    let n = n as f64;
    let mean = sum / n;
    Ok(((sum2 - n * mean * mean) / (n - 1.0)).max(0.0).sqrt())
}

/// First-order counterpart of [`doppler_residual_mc_std`].
pub fn doppler_residual_linear_std(w: AoaPhases, v_radar: &Vector3<f64>, noise: &NoiseModel) -> Result<f64> {
    let b = phases_to_bearing(w)?;
    let cov = bearing_covariance(w, &noise.phase)?;
    Ok(doppler_residual_variance(&b, v_radar, &noise.doppler, &cov, None).sqrt())
}
