use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{synth_radar_scan, DetectionSpec, PlatformState, SceneSpec};
use super::sensors::{sample_times, synth_baro, synth_imu, BaroSample, ExtrinsicsSpec, ImuSample, RigSpec, TruthSample};
use super::trajectory::{Trajectory, TrajectorySpec};
use crate::error::{Result, RioError};
use crate::geometry::to_quaternion;
use crate::radar::{AoaPhases, ChirpConfig, PointTruth, RadarPoint, RadarScan};

/// Everything needed to synthesize a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Preset name or inline chirp configuration.
    pub chirp: ChirpSource,
    pub trajectory: TrajectorySpec,
    pub scene: SceneSpec,
    #[serde(default)]
    pub detection: DetectionSpec,
    #[serde(default)]
    pub rig: RigSpec,
    #[serde(default = "default_true")]
    pub baro: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChirpSource {
    Preset(String),
    Inline(Box<ChirpConfig>),
}

impl ChirpSource {
    pub fn resolve(&self) -> Result<ChirpConfig> {
        match self {
            ChirpSource::Preset(name) => ChirpConfig::resolve(name),
            ChirpSource::Inline(cfg) => {
                cfg.validate()?;
                Ok((**cfg).clone())
            }
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| RioError::config("simulation config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("simulation config serializes")
    }
}

/// Sensor set-up carried at the head of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub chirp: ChirpConfig,
    pub extrinsics: ExtrinsicsSpec,
    pub imu_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub meta: DatasetMeta,
    pub imu: Vec<ImuSample>,
    pub radar: Vec<RadarScan>,
    pub baro: Vec<BaroSample>,
    pub truth: Vec<TruthSample>,
}

pub fn generate(cfg: &SimConfig, seed: u64) -> Result<SimDataset> {
    let chirp = cfg.chirp.resolve()?;
    cfg.detection.validate(&chirp)?;
    let traj = Trajectory::new(cfg.trajectory.clone())?;
    let targets = cfg.scene.generate(seed)?;
    let (imu, truth) = synth_imu(&traj, &cfg.rig, seed)?;
    let baro = if cfg.baro {
        synth_baro(&traj, &cfg.rig, seed)?
    } else {
        Vec::new()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut radar = Vec::new();
    for t in sample_times(cfg.rig.radar_rate, cfg.rig.radar_time_offset, traj.duration()) {
        let s = traj.sample(t)?;
        let state = PlatformState {
            rot: s.rot,
            p: s.p,
            v: s.v,
            omega_body: s.omega_body,
        };
        radar.push(synth_radar_scan(
            t,
            &state,
            &targets,
            &cfg.detection,
            &chirp,
            &cfg.rig.extrinsics,
            &mut rng,
        )?);
    }
    Ok(SimDataset {
        meta: DatasetMeta {
            chirp,
            extrinsics: cfg.rig.extrinsics,
            imu_rate: cfg.rig.imu_rate,
        },
        imu,
        radar,
        baro,
        truth,
    })
}

/// Radar point as stored on disk: `[range, doppler, w_y, w_z, aliased?]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PointRecord {
    Flagged(f64, f64, f64, f64, bool),
    Plain(f64, f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Meta(DatasetMeta),
    Imu {
        t: f64,
        gyro: [f64; 3],
        accel: [f64; 3],
    },
    Radar {
        t: f64,
        points: Vec<PointRecord>,
    },
    Baro {
        t: f64,
        pressure: f64,
    },
    Truth {
        t: f64,
        p: [f64; 3],
        /// x, y, z, w
        q: [f64; 4],
        v: [f64; 3],
    },
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl SimDataset {
    /// Writes one JSON object per line, merged in time order (IMU, baro,
    /// radar, truth for equal timestamps).
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let mut rows: Vec<(f64, u8, Record)> = Vec::new();
        for s in &self.imu {
            rows.push((
                s.t,
                0,
                Record::Imu {
                    t: s.t,
                    gyro: arr(&s.gyro),
                    accel: arr(&s.accel),
                },
            ));
        }
        for s in &self.baro {
            rows.push((s.t, 1, Record::Baro { t: s.t, pressure: s.pressure }));
        }
        for s in &self.radar {
            let points = s
                .points
                .iter()
                .map(|p| match p.truth {
                    Some(tr) => PointRecord::Flagged(p.range, p.radial_speed, p.phases.w_y, p.phases.w_z, tr.aliased),
                    None => PointRecord::Plain(p.range, p.radial_speed, p.phases.w_y, p.phases.w_z),
                })
                .collect();
            rows.push((s.timestamp, 2, Record::Radar { t: s.timestamp, points }));
        }
        for s in &self.truth {
            let q = to_quaternion(&s.rot);
            rows.push((
                s.t,
                3,
                Record::Truth {
                    t: s.t,
                    p: arr(&s.p),
                    q: [q.i, q.j, q.k, q.w],
                    v: arr(&s.v),
                },
            ));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let line = |w: &mut dyn Write, r: &Record| -> Result<()> {
            serde_json::to_writer(&mut *w, r).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(&mut w, &Record::Meta(self.meta.clone()))?;
        for (_, _, r) in &rows {
            line(&mut w, r)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(f)
    }

    /// Parses a dataset; truth biases and angular rates are not stored and
    /// come back as zero.
    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut meta = None;
        let (mut imu, mut radar, mut baro, mut truth) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| RioError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            match rec {
                Record::Meta(m) => meta = Some(m),
                Record::Imu { t, gyro, accel } => imu.push(ImuSample {
                    t,
                    gyro: gyro.into(),
                    accel: accel.into(),
                }),
                Record::Baro { t, pressure } => baro.push(BaroSample { t, pressure }),
                Record::Radar { t, points } => radar.push(RadarScan {
                    timestamp: t,
                    points: points
                        .into_iter()
                        .map(|p| match p {
                            PointRecord::Plain(r, v, wy, wz) => RadarPoint::new(r, v, AoaPhases::new(wy, wz)),
                            PointRecord::Flagged(r, v, wy, wz, aliased) => {
                                let mut pt = RadarPoint::new(r, v, AoaPhases::new(wy, wz));
                                pt.truth = Some(PointTruth {
                                    range: f64::NAN,
                                    radial_speed: f64::NAN,
                                    phases: AoaPhases::new(f64::NAN, f64::NAN),
                                    aliased,
                                });
                                pt
                            }
                        })
                        .collect(),
                }),
                Record::Truth { t, p, q, v } => {
                    let q = UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2]));
                    truth.push(TruthSample {
                        t,
                        rot: q.to_rotation_matrix().into_inner(),
                        p: p.into(),
                        v: v.into(),
                        omega_body: Vector3::zeros(),
                        gyro_bias: Vector3::zeros(),
                        accel_bias: Vector3::zeros(),
                    });
                }
            }
        }
        let meta = meta.ok_or(RioError::Parse {
            line: 1,
            reason: "dataset has no meta record".into(),
        })?;
        Ok(SimDataset {
            meta,
            imu,
            radar,
            baro,
            truth,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Per-scan point counts split by the aliased truth flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointCountSummary {
    pub duration: f64,
    pub scans: usize,
    pub nominal_mean: f64,
    pub nominal_std: f64,
    pub aliased_mean: f64,
    pub aliased_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub fn point_count_summary(scans: &[RadarScan], duration: f64) -> PointCountSummary {
    let aliased: Vec<f64> = scans
        .iter()
        .map(|s| s.points.iter().filter(|p| p.aliased()).count() as f64)
        .collect();
    let nominal: Vec<f64> = scans
        .iter()
        .zip(&aliased)
        .map(|(s, a)| s.points.len() as f64 - a)
        .collect();
    let (nominal_mean, nominal_std) = mean_std(&nominal);
    let (aliased_mean, aliased_std) = mean_std(&aliased);
    PointCountSummary {
        duration,
        scans: scans.len(),
        nominal_mean,
        nominal_std,
        aliased_mean,
        aliased_std,
    }
}
