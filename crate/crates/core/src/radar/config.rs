use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RioError};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Chirp configuration at the level of a sensor datasheet, with the
/// raw chirp parameters optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub name: String,
    /// Hz
    pub carrier_frequency: f64,
    /// Hz/s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_slope: Option<f64>,
    /// s
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirps_per_frame: Option<u32>,
    pub max_range: f64,
    pub max_doppler: f64,
    pub range_resolution: f64,
    pub doppler_resolution: f64,
    /// deg
    pub azimuth_resolution: f64,
    /// deg
    pub elevation_resolution: f64,
    pub fft_bins_range: u32,
    pub fft_bins_doppler: u32,
    pub fft_bins_phase: u32,
}

/// FFT bin widths induced by a [`ChirpConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedRadarProperties {
    /// m
    pub bin_width_range: f64,
    /// m/s
    pub bin_width_doppler: f64,
    /// rad
    pub bin_width_phase: f64,
}

impl ChirpConfig {
    /// Mid-chirp wavelength, taken from the carrier frequency.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("max_range", self.max_range),
            ("max_doppler", self.max_doppler),
            ("range_resolution", self.range_resolution),
            ("doppler_resolution", self.doppler_resolution),
            ("azimuth_resolution", self.azimuth_resolution),
            ("elevation_resolution", self.elevation_resolution),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(RioError::config(field, format!("must be positive, got {value}")));
            }
        }
        for (field, bins) in [
            ("fft_bins_range", self.fft_bins_range),
            ("fft_bins_doppler", self.fft_bins_doppler),
            ("fft_bins_phase", self.fft_bins_phase),
        ] {
            if bins < 2 || !bins.is_power_of_two() {
                return Err(RioError::config(
                    field,
                    format!("must be a power of two >= 2, got {bins}"),
                ));
            }
        }
        for (field, value) in [
            ("chirp_slope", self.chirp_slope),
            ("chirp_duration", self.chirp_duration),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(RioError::config(field, format!("must be positive, got {v}")));
                }
            }
        }
        if self.chirps_per_frame == Some(0) {
            return Err(RioError::config("chirps_per_frame", "must be positive"));
        }
        self.check_raw_consistency()
    }

    /// Cross-check table values against the ones implied by the raw chirp
    /// fields, where those are present (1% relative).
    fn check_raw_consistency(&self) -> Result<()> {
        let within = |field: &str, stored: f64, derived: f64| -> Result<()> {
            if ((derived - stored) / stored).abs() > 0.01 {
                Err(RioError::config(
                    field,
                    format!("table value {stored} disagrees with {derived} derived from chirp fields"),
                ))
            } else {
                Ok(())
            }
        };
        let lambda = self.wavelength();
        if let Some(tc) = self.chirp_duration {
            within("max_doppler", self.max_doppler, lambda / (4.0 * tc))?;
            if let Some(slope) = self.chirp_slope {
                within(
                    "range_resolution",
                    self.range_resolution,
                    SPEED_OF_LIGHT / (2.0 * slope * tc),
                )?;
            }
            if let Some(nc) = self.chirps_per_frame {
                within(
                    "doppler_resolution",
                    self.doppler_resolution,
                    lambda / (2.0 * nc as f64 * tc),
                )?;
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ChirpConfig =
            toml::from_str(text).map_err(|e| RioError::config("chirp config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("chirp config serializes")
    }

    /// One of the named presets `rc1`..`rc4`, or a path to a config file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match preset(name_or_path) {
            Some(cfg) => Ok(cfg),
            None if Path::new(name_or_path).is_file() => Self::load(Path::new(name_or_path)),
            None => Err(RioError::config(
                "config",
                format!("`{name_or_path}` is neither a preset ({}) nor a file", PRESET_NAMES.join(", ")),
            )),
        }
    }
}

pub fn derive_properties(cfg: &ChirpConfig) -> Result<DerivedRadarProperties> {
    cfg.validate()?;
    Ok(DerivedRadarProperties {
        bin_width_range: cfg.max_range / cfg.fft_bins_range as f64,
        bin_width_doppler: 2.0 * cfg.max_doppler / cfg.fft_bins_doppler as f64,
        bin_width_phase: 2.0 * PI / cfg.fft_bins_phase as f64,
    })
}

#[allow(clippy::too_many_arguments)]
fn table_row(
    name: &str,
    carrier_ghz: f64,
    max_range: f64,
    max_doppler: f64,
    range_res: f64,
    doppler_res: f64,
    az_res: f64,
    el_res: f64,
    bins: [u32; 3],
) -> ChirpConfig {
    ChirpConfig {
        name: name.to_string(),
        carrier_frequency: carrier_ghz * 1e9,
        chirp_slope: None,
        chirp_duration: None,
        chirps_per_frame: None,
        max_range,
        max_doppler,
        range_resolution: range_res,
        doppler_resolution: doppler_res,
        azimuth_resolution: az_res,
        elevation_resolution: el_res,
        fft_bins_range: bins[0],
        fft_bins_doppler: bins[1],
        fft_bins_phase: bins[2],
    }
}

pub const PRESET_NAMES: [&str; 4] = ["rc1", "rc2", "rc3", "rc4"];

/// Four reference chirp configurations (two IWR6843AOP, uRAD Automotive,
/// AWR1843BOOST).
pub fn preset(name: &str) -> Option<ChirpConfig> {
    let cfg = match name.to_ascii_lowercase().as_str() {
        "rc1" => table_row("rc1", 60.0, 20.013, 3.995, 0.078, 0.133, 29.0, 29.0, [256, 64, 64]),
        "rc2" => table_row("rc2", 60.0, 13.713, 3.148, 0.214, 0.049, 29.0, 29.0, [64, 128, 64]),
        "rc3" => table_row("rc3", 77.0, 25.000, 3.879, 0.195, 0.065, 29.0, 38.0, [128, 128, 64]),
        "rc4" => table_row("rc4", 77.0, 62.495, 2.021, 0.244, 0.126, 14.0, 57.0, [256, 32, 64]),
        _ => return None,
    };
    Some(cfg)
}
