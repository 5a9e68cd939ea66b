//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod checks;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::Vector3;
use rio_core::analysis::{approx_error, contour, evaluate, GridSpec, StampedPose, ASSOCIATION_TOLERANCE, RPE_SEGMENT};
use rio_core::estimator::factors::{doppler_residual, DopplerNoise};
use rio_core::estimator::{Estimator, EstimatorConfig, Extrinsics, NavState};
use rio_core::noise::{bearing_covariance, mc_measurement_oracle, NoiseModel, OracleScenario, SampleStats};
use rio_core::radar::{phases_to_bearing, preset, AoaPhases, ChirpConfig};
use rio_core::sim::{
    generate, point_count_summary, ChirpSource, PathShape, RigSpec, SceneSpec, SimConfig, SimDataset, TrajectorySpec,
    YawMode,
};

// Quantization standard deviations of the four chirp presets, compared to
// three decimals: (name, range m, radial speed m/s, phase deg).
const NOISE_TABLE: [(&str, f64, f64, f64); 4] = [
    ("rc1", 0.0225, 0.036039, 1.623798),
    ("rc2", 0.0618, 0.014199, 1.623798),
    ("rc3", 0.0563, 0.017496, 1.623798),
    ("rc4", 0.0704, 0.036463, 1.623798),
];
const TABLE_DECIMALS: f64 = 5e-4;
const TABLE_RUNTIME: f64 = 1.0;

// Measurement oracle for rc3.
const ORACLE_SAMPLES: usize = 1_000_000;
const ORACLE_DOPPLER: f64 = 0.0175;
const ORACLE_RANGE: f64 = 0.0563;
const ORACLE_PHASE_DEG: f64 = 1.624;
const ORACLE_REL_TOL: f64 = 0.05;
const ORACLE_MEAN_SIGMAS: f64 = 0.1;
const ORACLE_RUNTIME: f64 = 30.0;

// First-order approximation error over the field of view.
const APPROX_SAMPLES: usize = 100_000;
const APPROX_MAX: f64 = 6e-3;
const APPROX_SMALL: f64 = 1e-3;
const APPROX_SMALL_SHARE: f64 = 0.8;
const APPROX_RUNTIME: f64 = 300.0;

// Aliasing on straight flights.
const ALIAS_FREE_MEAN: f64 = 0.5;
const MAX_EMPTY_SPAN: f64 = 1.0;

// Estimator accuracy.
const SMOOTHER_TOL: f64 = 1e-9;
const JACOBIAN_TOL: f64 = 1e-5;
const STATIC_VEL: f64 = 1e-3;
const STATIC_POS: f64 = 0.05;
const HELIX_APE_SHARE: f64 = 0.01;
const HELIX_RPE: f64 = 0.3;

// Whitened Doppler residual spread.
const WHITENED_LO: f64 = 0.8;
const WHITENED_HI: f64 = 1.2;

const WALL_TIME_MS: f64 = 50.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: &str, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    println!(
        "[{}] {id:>3}  {name}: {}  ({:.1} s)",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        t0.elapsed().as_secs_f64()
    );
    o.pass
}

fn noise_table() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for (name, sd, sv, sp) in NOISE_TABLE {
        let m = NoiseModel::from_config(&preset(name).unwrap()).unwrap();
        for (got, want) in [
            (m.range.std_dev, sd),
            (m.doppler.std_dev, sv),
            (m.phase.sigma_wy.to_degrees(), sp),
            (m.phase.sigma_wz.to_degrees(), sp),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    outcome(
        worst < TABLE_DECIMALS && dt < TABLE_RUNTIME,
        format!("12 entries, worst deviation {worst:.2e} (< {TABLE_DECIMALS}), {dt:.3} s"),
    )
}

fn oracle() -> Outcome {
    let t0 = Instant::now();
    let sc = OracleScenario {
        range: 5.0,
        radial_speed: 0.3,
        phases: AoaPhases::new(0.2, -0.1),
        jitter_bins: 8.0,
        samples: ORACLE_SAMPLES,
    };
    let s = mc_measurement_oracle(&preset("rc3").unwrap(), &sc, 1).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let phase = SampleStats {
        mean: s.phase_y.mean.to_degrees(),
        std: s.phase_y.std.to_degrees(),
    };
    let ok = |st: SampleStats, want: f64| {
        (st.std / want - 1.0).abs() <= ORACLE_REL_TOL && st.mean.abs() <= ORACLE_MEAN_SIGMAS * st.std
    };
    outcome(
        ok(s.doppler, ORACLE_DOPPLER) && ok(s.range, ORACLE_RANGE) && ok(phase, ORACLE_PHASE_DEG) && dt < ORACLE_RUNTIME,
        format!(
            "doppler {:.4} m/s, range {:.4} m, phase {:.3} deg, means {:.1e}/{:.1e}/{:.1e}",
            s.doppler.std, s.range.std, phase.std, s.doppler.mean, s.range.mean, phase.mean
        ),
    )
}

fn approximation() -> Outcome {
    let t0 = Instant::now();
    let cfg = preset("rc1").unwrap();
    let v = Vector3::new(cfg.max_doppler, 0.0, 0.0);
    let (_, s) = approx_error(&cfg, &v, &GridSpec::new(60.0, 1.0).unwrap(), APPROX_SAMPLES, 0).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    outcome(
        s.max < APPROX_MAX && s.below_1mm >= APPROX_SMALL_SHARE && dt < APPROX_RUNTIME,
        format!(
            "max {:.2} mm/s (< {:.0}), {:.1}% of cells below {:.0} mm/s",
            s.max * 1e3,
            APPROX_MAX * 1e3,
            s.below_1mm * 100.0,
            APPROX_SMALL * 1e3
        ),
    )
}

fn contours() -> Outcome {
    let wide = GridSpec::new(89.0, 1.0).unwrap();
    let fwd = |speed: f64| Vector3::new(speed, 0.0, 0.0);
    let rc2 = preset("rc2").unwrap();
    let (_, slow) = contour(&rc2, &fwd(1.0), &wide).unwrap();
    let mut detail = format!("rc2 @1 m/s radius {:.1} deg", slow.mean_radius);
    let mut pass = slow.level_set_exists;
    for name in ["rc1", "rc2", "rc3", "rc4"] {
        let cfg = preset(name).unwrap();
        let (_, a) = contour(&cfg, &fwd(1.0), &wide).unwrap();
        let (_, b) = contour(&cfg, &fwd(cfg.max_doppler), &wide).unwrap();
        pass &= a.level_set_exists && b.level_set_exists && b.mean_radius < a.mean_radius;
        detail += &format!("; {name} {:.1}->{:.1}", a.mean_radius, b.mean_radius);
    }
    // oblique motion: the region follows the velocity direction
    let rc1 = preset("rc1").unwrap();
    let dir: Vector3<f64> = Vector3::new(1.0, 0.4, 0.3).normalize();
    let image = [dir.y.atan2(dir.x).to_degrees(), dir.z.asin().to_degrees()];
    let (_, obl) = contour(&rc1, &(dir * rc1.max_doppler), &wide).unwrap();
    let (_, straight) = contour(&rc1, &fwd(rc1.max_doppler), &wide).unwrap();
    let dist = |c: [f64; 2]| (c[0] - image[0]).hypot(c[1] - image[1]);
    pass &= dist(obl.centroid) < dist(straight.centroid);
    detail += &format!(
        "; oblique centroid ({:.1}, {:.1}) toward ({:.1}, {:.1})",
        obl.centroid[0], obl.centroid[1], image[0], image[1]
    );
    outcome(pass, detail)
}

fn line_flight(speed: f64) -> SimConfig {
    SimConfig {
        chirp: ChirpSource::Preset("rc1".into()),
        trajectory: TrajectorySpec {
            shape: PathShape::Line { direction: [1.0, 0.0, 0.0] },
            speed,
            rest: 2.0,
            ramp: 6.0,
            yaw: YawMode::Constant { yaw_deg: 0.0 },
            duration: 16.0,
            start: [0.0; 3],
        },
        scene: SceneSpec::Corridor {
            x_min: -5.0,
            x_max: 200.0,
            half_width: 15.0,
            z_min: -6.0,
            z_max: 6.0,
            clear_y: 2.0,
            clear_z: 2.0,
            z_center: 0.0,
            count: 4000,
        },
        detection: Default::default(),
        rig: RigSpec::default(),
        baro: false,
    }
}

fn aliasing() -> Outcome {
    let mut pass = true;
    let mut detail = String::from("aliased mean per scan");
    let mut longest_empty = 0.0;
    for speed in 4..=11 {
        let cfg = line_flight(speed as f64);
        let ds = generate(&cfg, 100 + speed).unwrap();
        // the cruise portion only
        let cruise_start = cfg.trajectory.rest + cfg.trajectory.ramp;
        let cruise: Vec<_> = ds.radar.iter().filter(|s| s.timestamp >= cruise_start).cloned().collect();
        let s = point_count_summary(&cruise, cfg.trajectory.duration - cruise_start);
        detail += &format!(" {speed}:{:.1}", s.aliased_mean);
        pass &= if speed == 4 { s.aliased_mean <= ALIAS_FREE_MEAN } else { s.aliased_mean > 0.0 };
        if speed == 11 {
            let mut since: Option<f64> = None;
            for scan in &ds.radar {
                let nominal = scan.points.iter().filter(|p| !p.aliased()).count();
                match (nominal, since) {
                    (0, None) => since = Some(scan.timestamp),
                    (0, Some(t)) => longest_empty = f64::max(longest_empty, scan.timestamp - t),
                    _ => since = None,
                }
            }
            pass &= longest_empty <= MAX_EMPTY_SPAN;
        }
    }
    detail += &format!("; longest run without nominal points at 11 m/s {longest_empty:.1} s");
    outcome(pass, detail)
}

fn jacobians() -> Outcome {
    let errs = [
        ("imu", checks::imu_jacobian_error(11)),
        ("doppler", checks::doppler_jacobian_error(12)),
        ("registration", checks::registration_jacobian_error(13)),
        ("baro", checks::baro_jacobian_error(14)),
        ("bearing", checks::bearing_jacobian_error(15)),
    ];
    let detail: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        errs.iter().all(|(_, e)| *e <= JACOBIAN_TOL),
        format!("{} trials each, worst relative error {}", checks::TRIALS, detail.join(", ")),
    )
}

fn ext_of(ds: &SimDataset) -> Extrinsics {
    Extrinsics {
        rot: ds.meta.extrinsics.rotation(),
        lever: ds.meta.extrinsics.lever(),
    }
}

fn run_estimator(ds: &SimDataset, preset_name: &str) -> Estimator {
    let mut est = Estimator::new(EstimatorConfig::preset(preset_name).unwrap(), &ds.meta.chirp, ext_of(ds)).unwrap();
    est.run_dataset(ds).unwrap();
    est
}

fn static_dataset() -> SimDataset {
    let cfg = SimConfig {
        chirp: ChirpSource::Preset("rc1".into()),
        trajectory: TrajectorySpec {
            shape: PathShape::Static,
            speed: 0.0,
            rest: 2.0,
            ramp: 3.0,
            yaw: YawMode::Constant { yaw_deg: 0.0 },
            duration: 30.0,
            start: [0.0; 3],
        },
        scene: SceneSpec::Box {
            min: [3.0, -8.0, -3.0],
            max: [15.0, 8.0, 3.0],
            count: 200,
        },
        detection: Default::default(),
        rig: RigSpec::default().noiseless(),
        baro: true,
    };
    generate(&cfg, 3).unwrap()
}

fn helix(speed: f64, duration: f64) -> SimConfig {
    SimConfig {
        chirp: ChirpSource::Preset("rc1".into()),
        trajectory: TrajectorySpec {
            shape: PathShape::Helix { radius: 5.0, pitch: 1.0 },
            speed,
            rest: 2.0,
            ramp: 3.0,
            yaw: YawMode::Aligned,
            duration,
            start: [0.0; 3],
        },
        scene: SceneSpec::Cylinder {
            center: [-5.0, 0.0],
            radius: 12.0,
            z_min: -3.0,
            z_max: 8.0,
            jitter: 1.0,
            count: 200,
        },
        detection: Default::default(),
        rig: RigSpec::default().noiseless(),
        baro: true,
    }
}

fn stamped(poses: impl Iterator<Item = (f64, nalgebra::Matrix3<f64>, Vector3<f64>)>) -> Vec<StampedPose> {
    poses.map(|(t, rot, p)| StampedPose { t, rot, p }).collect()
}

fn estimator_correctness(wall_ms: &mut f64) -> Outcome {
    let lin = checks::fixed_lag_vs_batch(7, 4, 15);
    let mut pass = lin < SMOOTHER_TOL;
    let mut detail = format!("(a) fixed-lag vs batch {lin:.1e}");

    let est = run_estimator(&static_dataset(), "noise");
    let last = est.low_rate_poses.last().unwrap();
    pass &= last.v.norm() <= STATIC_VEL && last.p.norm() <= STATIC_POS;
    detail += &format!("; (b) static |v| {:.1e} m/s |p| {:.1e} m", last.v.norm(), last.p.norm());

    let ds = generate(&helix(2.0, 60.0), 5).unwrap();
    let est = run_estimator(&ds, "noise");
    let m = evaluate(
        &stamped(est.low_rate_poses.iter().map(|p| (p.t, p.rot, p.p))),
        &stamped(ds.truth.iter().map(|s| (s.t, s.rot, s.p))),
        RPE_SEGMENT,
        ASSOCIATION_TOLERANCE,
    )
    .unwrap();
    pass &= m.ape_translation.rmse <= HELIX_APE_SHARE * m.path_length && m.rpe_translation.rmse <= HELIX_RPE;
    detail += &format!(
        "; (c) helix APE {:.3} m over {:.0} m, RPE {:.3} m over {} segments",
        m.ape_translation.rmse, m.path_length, m.rpe_translation.rmse, m.segments
    );
    *wall_ms = est.stats.iter().map(|s| s.wall_time).sum::<f64>() / est.stats.len() as f64 * 1e3;
    outcome(pass, detail)
}

/// Sample std of whitened Doppler residuals of the non-aliased points,
/// evaluated at the true state of every scan.
fn whitened_std(ds: &SimDataset, angle_noise_on: bool) -> f64 {
    let chirp: &ChirpConfig = &ds.meta.chirp;
    let noise = NoiseModel::from_config(chirp).unwrap();
    let dn = DopplerNoise {
        quant: noise.doppler,
        angle_noise_on,
        gyro_rate_cov: None,
    };
    let ext = ext_of(ds);
    let mut w = Vec::new();
    for scan in &ds.radar {
        let k = ds.truth.partition_point(|s| s.t < scan.timestamp - 1e-9);
        let tr = ds.truth[k];
        assert!((tr.t - scan.timestamp).abs() < 1e-9, "scan off the truth grid");
        let s = NavState {
            rot: tr.rot,
            p: tr.p,
            v: tr.v,
            ..NavState::default()
        };
        for p in scan.points.iter().filter(|p| !p.aliased()) {
            let (Ok(mu), Ok(cov)) = (phases_to_bearing(p.phases), bearing_covariance(p.phases, &noise.phase)) else {
                continue;
            };
            let (e, _, _) = doppler_residual(&mu.mu, p.radial_speed, &s, &ext, &tr.omega_body);
            w.push(e / dn.variance(&mu, &cov, &s, &ext, &tr.omega_body).sqrt());
        }
    }
    SampleStats::from_samples(&w).std
}

fn discrimination() -> Outcome {
    let mut cfg = helix(preset("rc1").unwrap().max_doppler, 40.0);
    // scans on the truth grid so the truth state is exact
    cfg.rig.radar_time_offset = 0.0;
    let ds = generate(&cfg, 8).unwrap();
    let noise = whitened_std(&ds, true);
    let base = whitened_std(&ds, false);
    outcome(
        (WHITENED_LO..=WHITENED_HI).contains(&noise) && base > WHITENED_HI,
        format!("whitened std noise {noise:.3} (in [{WHITENED_LO}, {WHITENED_HI}]), base {base:.3} (> {WHITENED_HI})"),
    )
}

fn rio(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_rio")).args(args).output().unwrap();
    assert!(out.status.success(), "rio {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sim.toml");
    let mut cfg = helix(2.0, 20.0);
    cfg.rig = RigSpec::default();
    std::fs::write(&cfg_path, cfg.to_toml_string()).unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let ds = dir.path().join(format!("ds{run}.jsonl"));
        let out = dir.path().join(format!("odom{run}"));
        rio(&["synth", "--config", cfg_path.to_str().unwrap(), "--seed", "42", "--out", ds.to_str().unwrap()]);
        rio(&["odom", "--dataset", ds.to_str().unwrap(), "--config", "noise", "--out", out.to_str().unwrap()]);
        let read = |p: &Path| std::fs::read(p).unwrap();
        files.push([read(&ds), read(&out.join("low_rate.tum")), read(&out.join("high_rate.tum"))]);
    }
    let same = files[0] == files[1];
    outcome(
        same && !files[0][1].is_empty(),
        format!(
            "dataset {} B, low-rate {} B, high-rate {} B, identical across runs: {same}",
            files[0][0].len(),
            files[0][1].len(),
            files[0][2].len()
        ),
    )
}

fn main() {
    let mut wall_ms = f64::NAN;
    let results = [
        run("1", "quantization noise table", noise_table),
        run("2", "measurement oracle (rc3)", oracle),
        run("3", "first-order approximation error (rc1)", approximation),
        run("4", "equal-noise level sets", contours),
        run("5", "aliasing on straight flights", aliasing),
        run("6", "Jacobians vs finite differences", jacobians),
        run("7", "estimator correctness", || estimator_correctness(&mut wall_ms)),
        run("8", "noise vs base discrimination", discrimination),
        run("9", "per-scan wall time", || {
            outcome(wall_ms < WALL_TIME_MS, format!("mean {wall_ms:.2} ms (< {WALL_TIME_MS})"))
        }),
        run("10", "synth + odom determinism", determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
