//! `rio`: field-of-view noise studies, dataset synthesis, odometry and
//! trajectory evaluation.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde_json::json;

use rio_core::analysis::{
    self, evaluate, load_tum, save_tum, GridSpec, Histogram, StampedPose, ASSOCIATION_TOLERANCE, RPE_SEGMENT,
};
use rio_core::estimator::{Estimator, EstimatorConfig, Extrinsics, PoseRecord};
use rio_core::radar::ChirpConfig;
use rio_core::sim::{generate, point_count_summary, SimConfig, SimDataset};
use rio_core::RioError;

#[derive(Parser)]
#[command(name = "rio", version, about = "Radar-inertial odometry and radar noise analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Preset name or TOML file; its meaning depends on the subcommand.
    #[arg(long)]
    config: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Motion {
    /// Radar-frame velocity `x,y,z` in m/s; x is boresight.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    velocity: Option<Vec<f64>>,
    /// Forward speed, m/s; defaults to the configuration's Doppler limit.
    #[arg(long, conflicts_with = "velocity")]
    speed: Option<f64>,
}

impl Motion {
    fn resolve(&self, cfg: &ChirpConfig) -> Result<Vector3<f64>> {
        if let Some(v) = &self.velocity {
            return Ok(Vector3::new(v[0], v[1], v[2]));
        }
        let s = self.speed.unwrap_or(cfg.max_doppler);
        if !(s >= 0.0 && s.is_finite()) {
            return Err(RioError::Config {
                field: "speed".into(),
                reason: "must be non-negative".into(),
            }
            .into());
        }
        Ok(Vector3::new(s, 0.0, 0.0))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Doppler error samples caused by quantized AoA phases.
    NoiseSim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        motion: Motion,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// Half-angle of the sampled field of view, deg.
        #[arg(long, default_value_t = 60.0)]
        fov: f64,
        #[arg(long, default_value_t = 200)]
        bins: usize,
    },
    /// Monte-Carlo vs first-order Doppler residual std over the field of view.
    ApproxError {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        motion: Motion,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, default_value_t = 60.0)]
        half_width: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Bearing contribution to the Doppler residual std and where it equals
    /// the radial speed quantization.
    Contour {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        motion: Motion,
        /// Further configurations evaluated on the same grid.
        #[arg(long = "also")]
        also: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, default_value_t = 89.0)]
        half_width: f64,
    },
    /// Region of the field of view whose returns alias.
    AliasRegion {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        motion: Motion,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long, default_value_t = 60.0)]
        half_width: f64,
    },
    /// Synthesize a dataset from a simulation TOML file.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Also write the ground truth as a TUM file.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Run the estimator over a dataset; writes low_rate.tum and
    /// high_rate.tum into the output directory.
    Odom {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// APE and RPE of an estimate against truth (TUM file or dataset).
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = RPE_SEGMENT)]
        segment: f64,
        #[arg(long, default_value_t = ASSOCIATION_TOLERANCE)]
        tolerance: f64,
    },
}

fn chirp(common: &Common) -> Result<ChirpConfig> {
    Ok(ChirpConfig::resolve(common.config.as_deref().unwrap_or("rc1"))?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_grid(grid: &analysis::GridResult, out: &Option<PathBuf>) -> Result<()> {
    if let Some(path) = out {
        let mut w = create(path)?;
        grid.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn to_stamped(poses: &[PoseRecord]) -> Vec<StampedPose> {
    poses.iter().map(|p| StampedPose { t: p.t, rot: p.rot, p: p.p }).collect()
}

fn load_truth(path: &Path) -> Result<Vec<StampedPose>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let ds = SimDataset::load(path)?;
        return Ok(ds.truth.iter().map(|s| StampedPose { t: s.t, rot: s.rot, p: s.p }).collect());
    }
    Ok(load_tum(path)?)
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    Ok(match cli.command {
        Command::NoiseSim {
            common,
            motion,
            samples,
            fov,
            bins,
        } => {
            let cfg = chirp(&common)?;
            let v = motion.resolve(&cfg)?;
            let r = analysis::noise_sim(&cfg, &v, fov, samples, common.seed)?;
            if let Some(path) = &common.out {
                let half = (4.0 * r.fit.std).max(r.doppler_bin_width);
                let mut w = create(path)?;
                Histogram::new(&r.errors, &r.fit, -half, half, bins.max(1)).write_csv(&mut w)?;
                w.flush()?;
            }
            json!({ "command": "noise-sim", "seed": common.seed, "samples": r.errors.len(), "result": r })
        }
        Command::ApproxError {
            common,
            motion,
            spacing,
            half_width,
            samples,
        } => {
            let cfg = chirp(&common)?;
            let v = motion.resolve(&cfg)?;
            let (grid, summary) = analysis::approx_error(&cfg, &v, &GridSpec::new(half_width, spacing)?, samples, common.seed)?;
            write_grid(&grid, &common.out)?;
            json!({ "command": "approx-error", "config": cfg.name, "velocity": grid.velocity, "seed": common.seed, "summary": summary })
        }
        Command::Contour {
            common,
            motion,
            also,
            spacing,
            half_width,
        } => {
            let spec = GridSpec::new(half_width, spacing)?;
            let mut names = vec![common.config.clone().unwrap_or_else(|| "rc1".into())];
            names.extend(also);
            let mut grids = Vec::new();
            let mut summaries = Vec::new();
            for name in &names {
                let cfg = ChirpConfig::resolve(name)?;
                let v = motion.resolve(&cfg)?;
                let (g, s) = analysis::contour(&cfg, &v, &spec)?;
                summaries.push(json!({ "config": cfg.name, "velocity": g.velocity, "summary": s }));
                grids.push(g);
            }
            if let Some(path) = &common.out {
                let mut w = create(path)?;
                let header: Vec<String> = grids.iter().map(|g| g.config.clone()).collect();
                writeln!(w, "azimuth_deg,elevation_deg,{}", header.join(","))?;
                for (k, (az, el, _)) in grids[0].cells().enumerate() {
                    let vals: Vec<String> = grids.iter().map(|g| g.values[k].to_string()).collect();
                    writeln!(w, "{az},{el},{}", vals.join(","))?;
                }
                w.flush()?;
            }
            json!({ "command": "contour", "grids": summaries })
        }
        Command::AliasRegion {
            common,
            motion,
            spacing,
            half_width,
        } => {
            let cfg = chirp(&common)?;
            let v = motion.resolve(&cfg)?;
            let (grid, summary) = analysis::alias_region(&cfg, &v, &GridSpec::new(half_width, spacing)?)?;
            write_grid(&grid, &common.out)?;
            json!({ "command": "alias-region", "config": cfg.name, "velocity": grid.velocity, "summary": summary })
        }
        Command::Synth { common, truth_out } => {
            let Some(path) = &common.config else {
                bail!(RioError::Config {
                    field: "--config".into(),
                    reason: "synth needs a simulation TOML file".into(),
                });
            };
            let ds = generate(&SimConfig::load(Path::new(path))?, common.seed)?;
            if let Some(out) = &common.out {
                let mut w = create(out)?;
                ds.write_jsonl(&mut w)?;
                w.flush()?;
            }
            if let Some(out) = &truth_out {
                let truth: Vec<StampedPose> = ds.truth.iter().map(|s| StampedPose { t: s.t, rot: s.rot, p: s.p }).collect();
                save_tum(&truth, out)?;
            }
            let duration = ds.truth.last().map_or(0.0, |s| s.t);
            json!({
                "command": "synth",
                "seed": common.seed,
                "imu_samples": ds.imu.len(),
                "baro_samples": ds.baro.len(),
                "points": point_count_summary(&ds.radar, duration),
            })
        }
        Command::Odom { common, dataset } => {
            let cfg = EstimatorConfig::resolve(common.config.as_deref().unwrap_or("noise"))?;
            let ds = SimDataset::load(&dataset)?;
            let ext = Extrinsics {
                rot: ds.meta.extrinsics.rotation(),
                lever: ds.meta.extrinsics.lever(),
            };
            let mut est = Estimator::new(cfg, &ds.meta.chirp, ext)?;
            est.run_dataset(&ds)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                save_tum(&to_stamped(&est.low_rate_poses), &dir.join("low_rate.tum"))?;
                save_tum(&to_stamped(&est.high_rate_poses), &dir.join("high_rate.tum"))?;
            }
            let wall: Vec<f64> = est.stats.iter().map(|s| s.wall_time * 1e3).collect();
            let last = est.low_rate_poses.last();
            json!({
                "command": "odom",
                "scans": est.stats.len(),
                "low_rate_poses": est.low_rate_poses.len(),
                "high_rate_poses": est.high_rate_poses.len(),
                "wall_time_ms": {
                    "mean": wall.iter().sum::<f64>() / wall.len().max(1) as f64,
                    "p50": analysis::percentile(&wall, 0.5),
                    "p95": analysis::percentile(&wall, 0.95),
                    "max": wall.iter().copied().fold(0.0, f64::max),
                },
                "final_position": last.map(|p| [p.p.x, p.p.y, p.p.z]),
            })
        }
        Command::Eval {
            common,
            estimate,
            truth,
            segment,
            tolerance,
        } => {
            let m = evaluate(&load_tum(&estimate)?, &load_truth(&truth)?, segment, tolerance)?;
            if let Some(path) = &common.out {
                let mut w = create(path)?;
                writeln!(w, "t,translation_m,rotation_deg")?;
                for e in &m.ape {
                    writeln!(w, "{},{},{}", e.t, e.translation, e.rotation)?;
                }
                w.flush()?;
            }
            json!({
                "command": "eval",
                "metrics": m,
                "table": format!(
                    "{:.3} ± {:.3} | {:.3} ± {:.3}",
                    m.ape_translation.rmse, m.ape_translation.std, m.rpe_translation.rmse, m.rpe_translation.std
                ),
            })
        }
    })
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(summary) => {
            // a closed pipe on stdout is not worth a panic
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<RioError>().is_some_and(RioError::is_validation);
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
