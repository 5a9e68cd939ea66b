use std::io::Write;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, RioError};
use crate::noise::{
    bearing_covariance, doppler_residual_linear_std, doppler_residual_mc_std, NoiseModel, SampleStats,
};
use crate::radar::{angles_to_phases, derive_properties, phases_to_bearing, quantize_phase, ChirpConfig};

/// Square azimuth/elevation grid `[-half_width, half_width]` in both axes, deg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(half_width: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(RioError::config("spacing", "must be positive"));
        }
        if !(half_width > 0.0 && half_width < 90.0) {
            return Err(RioError::config("half_width", "must lie in (0, 90) deg"));
        }
        Ok(Self { half_width, spacing })
    }

    pub fn axis(&self) -> Vec<f64> {
        let n = (2.0 * self.half_width / self.spacing + 1e-9).floor() as usize;
        (0..=n).map(|k| -self.half_width + k as f64 * self.spacing).collect()
    }

    /// (azimuth, elevation) in deg, elevation-major.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let axis = self.axis();
        axis.iter().flat_map(|&el| axis.iter().map(move |&az| (az, el))).collect()
    }
}

/// A scalar field over the field of view. Row `i` holds elevation `elevation[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub quantity: String,
    pub config: String,
    pub velocity: [f64; 3],
    pub azimuth: Vec<f64>,
    pub elevation: Vec<f64>,
    /// NaN where the model is undefined.
    pub values: Vec<f64>,
}

impl GridResult {
    fn from_fn(quantity: &str, cfg: &ChirpConfig, v: &Vector3<f64>, grid: &GridSpec, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        let values = grid
            .cells()
            .par_iter()
            .map(|&(az, el)| f(az, el))
            .collect();
        Self {
            quantity: quantity.into(),
            config: cfg.name.clone(),
            velocity: (*v).into(),
            azimuth: grid.axis(),
            elevation: grid.axis(),
            values,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.azimuth.len() + col]
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.azimuth.len();
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &x)| (self.azimuth[k % n], self.elevation[k / n], x))
    }

    pub fn finite_values(&self) -> Vec<f64> {
        self.values.iter().copied().filter(|x| x.is_finite()).collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "azimuth_deg,elevation_deg,{}", self.quantity)?;
        for (az, el, x) in self.cells() {
            writeln!(w, "{az},{el},{x}")?;
        }
        Ok(())
    }
}

/// Linear-interpolated percentile of the finite values, `q` in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut xs: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (xs.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)
}

fn phases_deg(az: f64, el: f64) -> Result<crate::radar::AoaPhases> {
    angles_to_phases(az.to_radians(), el.to_radians())
}

/// Doppler error caused by quantized AoA phases alone, for targets drawn
/// uniformly in azimuth and elevation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSimResult {
    pub config: String,
    pub velocity: [f64; 3],
    #[serde(skip)]
    pub errors: Vec<f64>,
    /// Draws whose quantized phases fell outside the visible region.
    pub rejected: usize,
    /// m/s
    pub doppler_bin_width: f64,
    /// Gaussian fitted to the errors.
    pub fit: SampleStats,
    /// First-order bearing contribution, RMS over the drawn angles.
    pub predicted_std: f64,
}

pub fn noise_sim(cfg: &ChirpConfig, v: &Vector3<f64>, fov_deg: f64, samples: usize, seed: u64) -> Result<NoiseSimResult> {
    if samples < 2 {
        return Err(RioError::config("samples", "need at least 2 samples"));
    }
    if !(fov_deg > 0.0 && fov_deg < 90.0) {
        return Err(RioError::config("fov", "must lie in (0, 90) deg"));
    }
    let props = derive_properties(cfg)?;
    let noise = NoiseModel::from_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = fov_deg.to_radians();
    let mut errors = Vec::with_capacity(samples);
    let mut predicted = 0.0;
    let mut rejected = 0;
    for _ in 0..samples {
        let az = rng.random_range(-lim..=lim);
        let el = rng.random_range(-lim..=lim);
        let w = angles_to_phases(az, el)?;
        let wq = crate::radar::AoaPhases::new(quantize_phase(w.w_y, cfg, &props), quantize_phase(w.w_z, cfg, &props));
        let (Ok(mu), Ok(muq)) = (phases_to_bearing(w), phases_to_bearing(wq)) else {
            rejected += 1;
            continue;
        };
        errors.push((mu.mu - muq.mu).dot(v));
        let sigma = bearing_covariance(w, &noise.phase)?.sigma_mu;
        predicted += v.dot(&(sigma * v));
    }
    if errors.len() < 2 {
        return Err(RioError::Domain("every sample was rejected".into()));
    }
    Ok(NoiseSimResult {
        config: cfg.name.clone(),
        velocity: (*v).into(),
        fit: SampleStats::from_samples(&errors),
        predicted_std: (predicted / errors.len() as f64).sqrt(),
        rejected,
        doppler_bin_width: props.bin_width_doppler,
        errors,
    })
}

/// Normalized histogram with the fitted Gaussian density at each bin center.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    pub gaussian: Vec<f64>,
}

impl Histogram {
    pub fn new(xs: &[f64], fit: &SampleStats, lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &x in xs {
            let k = ((x - lo) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                counts[k as usize] += 1;
            }
        }
        let centers: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
        let norm = xs.len() as f64 * width;
        let gaussian = centers
            .iter()
            .map(|c| {
                let z = (c - fit.mean) / fit.std;
                (-0.5 * z * z).exp() / (fit.std * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        Self {
            centers,
            density: counts.iter().map(|&c| c as f64 / norm).collect(),
            gaussian,
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "error_mps,density,gaussian")?;
        for ((c, d), g) in self.centers.iter().zip(&self.density).zip(&self.gaussian) {
            writeln!(w, "{c},{d},{g}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxErrorSummary {
    pub max: f64,
    pub p80: f64,
    /// Share of cells below 1 mm/s.
    pub below_1mm: f64,
}

/// Per cell, |Monte-Carlo std − first-order std| of the full Doppler residual.
/// Cell `k` draws from stream `k` of a generator seeded with `seed`.
pub fn approx_error(
    cfg: &ChirpConfig,
    v: &Vector3<f64>,
    grid: &GridSpec,
    samples: usize,
    seed: u64,
) -> Result<(GridResult, ApproxErrorSummary)> {
    if samples < 2 {
        return Err(RioError::config("samples", "need at least 2 samples"));
    }
    let noise = NoiseModel::from_config(cfg)?;
    let cells = grid.cells();
    let values: Vec<f64> = cells
        .par_iter()
        .enumerate()
        .map(|(k, &(az, el))| {
            let Ok(w) = phases_deg(az, el) else { return f64::NAN };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            match (
                doppler_residual_mc_std(w, v, &noise, samples, &mut rng),
                doppler_residual_linear_std(w, v, &noise),
            ) {
                (Ok(mc), Ok(lin)) => (mc - lin).abs(),
                _ => f64::NAN,
            }
        })
        .collect();
    let finite: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let summary = ApproxErrorSummary {
        max: finite.iter().copied().fold(f64::NAN, f64::max),
        p80: percentile(&finite, 0.8),
        below_1mm: finite.iter().filter(|x| **x < 1e-3).count() as f64 / finite.len().max(1) as f64,
    };
    let result = GridResult {
        quantity: "abs_std_difference_mps".into(),
        config: cfg.name.clone(),
        velocity: (*v).into(),
        azimuth: grid.axis(),
        elevation: grid.axis(),
        values,
    };
    Ok((result, summary))
}

/// The part of the field of view where the radial speed quantization
/// dominates the bearing contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourSummary {
    /// m/s
    pub doppler_std: f64,
    /// True when the equal-contribution level set crosses the grid.
    pub level_set_exists: bool,
    pub doppler_dominant_fraction: f64,
    /// Mean distance of the region boundary from the region centroid, deg.
    pub mean_radius: f64,
    /// (azimuth, elevation) of the region, deg.
    pub centroid: [f64; 2],
}

/// Per cell, the bearing contribution `√(vᵀΣ_μv)` to the Doppler residual std.
pub fn contour(cfg: &ChirpConfig, v: &Vector3<f64>, grid: &GridSpec) -> Result<(GridResult, ContourSummary)> {
    let noise = NoiseModel::from_config(cfg)?;
    let result = GridResult::from_fn("bearing_contribution_mps", cfg, v, grid, |az, el| {
        let Ok(w) = phases_deg(az, el) else { return f64::NAN };
        match bearing_covariance(w, &noise.phase) {
            Ok(c) => v.dot(&(c.sigma_mu * v)).max(0.0).sqrt(),
            Err(_) => f64::NAN,
        }
    });
    let sd = noise.doppler.std_dev;
    let n = result.azimuth.len();
    let inside = |r: usize, c: usize| result.get(r, c) <= sd;
    let (mut count, mut total) = (0usize, 0usize);
    let mut centroid = [0.0; 2];
    let mut boundary = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if !result.get(r, c).is_finite() {
                continue;
            }
            total += 1;
            if !inside(r, c) {
                continue;
            }
            count += 1;
            centroid[0] += result.azimuth[c];
            centroid[1] += result.elevation[r];
            let neighbors = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
            if neighbors
                .iter()
                .any(|&(i, j)| i < n && j < n && result.get(i, j).is_finite() && !inside(i, j))
            {
                boundary.push((result.azimuth[c], result.elevation[r]));
            }
        }
    }
    if count > 0 {
        centroid = centroid.map(|x| x / count as f64);
    }
    let mean_radius = if boundary.is_empty() {
        f64::NAN
    } else {
        boundary
            .iter()
            .map(|(az, el)| (az - centroid[0]).hypot(el - centroid[1]))
            .sum::<f64>()
            / boundary.len() as f64
    };
    let summary = ContourSummary {
        doppler_std: sd,
        level_set_exists: !boundary.is_empty(),
        doppler_dominant_fraction: count as f64 / total.max(1) as f64,
        mean_radius,
        centroid,
    };
    Ok((result, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AliasSummary {
    /// m/s
    pub max_doppler: f64,
    pub aliased_fraction: f64,
}

/// Per cell, `|μᵀv|`; a cell is aliased when the radial speed leaves
/// `[-max_doppler, max_doppler)`.
pub fn alias_region(cfg: &ChirpConfig, v: &Vector3<f64>, grid: &GridSpec) -> Result<(GridResult, AliasSummary)> {
    cfg.validate()?;
    let result = GridResult::from_fn("abs_radial_speed_mps", cfg, v, grid, |az, el| {
        let Ok(w) = phases_deg(az, el) else { return f64::NAN };
        phases_to_bearing(w).map_or(f64::NAN, |b| b.mu.dot(v).abs())
    });
    let max = cfg.max_doppler;
    let (mut aliased, mut total) = (0usize, 0usize);
    for (az, el, _) in result.cells() {
        let Ok(b) = phases_deg(az, el).and_then(phases_to_bearing) else { continue };
        total += 1;
        let vr = -b.mu.dot(v);
        if !(-max..max).contains(&vr) {
            aliased += 1;
        }
    }
    Ok((
        result,
        AliasSummary {
            max_doppler: max,
            aliased_fraction: aliased as f64 / total.max(1) as f64,
        },
    ))
}
