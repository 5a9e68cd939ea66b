use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::Serialize;

use crate::error::{Result, RioError};
use crate::geometry::to_quaternion;

/// Segment length for relative errors, m.
pub const RPE_SEGMENT: f64 = 10.0;
/// Largest timestamp gap accepted when pairing poses, s.
pub const ASSOCIATION_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub p: Vector3<f64>,
}

impl StampedPose {
    /// The pose of `other` expressed in this pose's frame.
    fn between(&self, other: &StampedPose) -> (Matrix3<f64>, Vector3<f64>) {
        let rt = self.rot.transpose();
        (rt * other.rot, rt * (other.p - self.p))
    }
}

/// `timestamp tx ty tz qx qy qz qw`, one pose per line.
pub fn write_tum(poses: &[StampedPose], mut w: impl Write) -> Result<()> {
    for s in poses {
        let q = to_quaternion(&s.rot);
        writeln!(
            w,
            "{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            s.t, s.p.x, s.p.y, s.p.z, q.i, q.j, q.k, q.w
        )?;
    }
    Ok(())
}

/// Blank lines and lines starting with `#` are skipped.
pub fn read_tum(r: impl BufRead) -> Result<Vec<StampedPose>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let parse_err = |reason: String| RioError::Parse { line: k + 1, reason };
        let f: Vec<f64> = text
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| parse_err(format!("`{s}`: {e}"))))
            .collect::<Result<_>>()?;
        if f.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, found {}", f.len())));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        let q = Quaternion::new(f[7], f[4], f[5], f[6]);
        if q.norm() < 1e-6 {
            return Err(parse_err("zero quaternion".into()));
        }
        if let Some(prev) = out.last().map(|p: &StampedPose| p.t) {
            if f[0] <= prev {
                return Err(parse_err(format!("timestamp {} does not follow {prev}", f[0])));
            }
        }
        out.push(StampedPose {
            t: f[0],
            rot: *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix(),
            p: Vector3::new(f[1], f[2], f[3]),
        });
    }
    Ok(out)
}

pub fn load_tum(path: &Path) -> Result<Vec<StampedPose>> {
    read_tum(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_tum(poses: &[StampedPose], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_tum(poses, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Rotation angle between two rotation matrices from their chordal
/// distance, exactly zero for identical inputs. rad
fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let chord = (a - b).norm() / (2.0 * 2f64.sqrt());
    2.0 * chord.min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl ErrorStats {
    fn new(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self {
                rmse: f64::NAN,
                mean: f64::NAN,
                std: f64::NAN,
                max: f64::NAN,
            };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        Self {
            rmse: (xs.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
            mean,
            std: (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt(),
            max: xs.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoseError {
    pub t: f64,
    /// m
    pub translation: f64,
    /// deg
    pub rotation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    pub associated: usize,
    /// m
    pub ape_translation: ErrorStats,
    /// deg
    pub ape_rotation: ErrorStats,
    /// m, per segment of `segment_length` along the truth path
    pub rpe_translation: ErrorStats,
    /// deg
    pub rpe_rotation: ErrorStats,
    pub segment_length: f64,
    pub segments: usize,
    /// Truth path length over the associated poses, m.
    pub path_length: f64,
    #[serde(skip)]
    pub ape: Vec<PoseError>,
}

/// Pairs each estimate with the nearest truth pose within `tol`.
pub fn associate(est: &[StampedPose], truth: &[StampedPose], tol: f64) -> Vec<(StampedPose, StampedPose)> {
    let mut pairs = Vec::new();
    for e in est {
        let k = truth.partition_point(|s| s.t < e.t);
        let best = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&i| i < truth.len())
            .min_by(|&a, &b| (truth[a].t - e.t).abs().total_cmp(&(truth[b].t - e.t).abs()));
        if let Some(i) = best {
            if (truth[i].t - e.t).abs() <= tol {
                pairs.push((*e, truth[i]));
            }
        }
    }
    pairs
}

/// APE after aligning the first associated pose, and RPE over consecutive
/// non-overlapping segments of `segment_length` of traversed truth path.
pub fn evaluate(est: &[StampedPose], truth: &[StampedPose], segment_length: f64, tol: f64) -> Result<TrajectoryMetrics> {
    if !(segment_length > 0.0) {
        return Err(RioError::config("segment_length", "must be positive"));
    }
    let pairs = associate(est, truth, tol);
    if pairs.len() < 2 {
        return Err(RioError::Domain(format!(
            "only {} poses could be associated within {tol} s",
            pairs.len()
        )));
    }
    let (e0, g0) = pairs[0];
    let ape: Vec<PoseError> = pairs
        .iter()
        .map(|(e, g)| {
            let (re, pe) = e0.between(e);
            let (rg, pg) = g0.between(g);
            PoseError {
                t: e.t,
                translation: (pe - pg).norm(),
                rotation: angle_between(&re, &rg).to_degrees(),
            }
        })
        .collect();

    let mut arc = vec![0.0];
    for w in pairs.windows(2) {
        arc.push(arc.last().unwrap() + (w[1].1.p - w[0].1.p).norm());
    }
    let (mut rpe_t, mut rpe_r) = (Vec::new(), Vec::new());
    let mut i = 0;
    for j in 1..pairs.len() {
        if arc[j] - arc[i] < segment_length {
            continue;
        }
        let (re, pe) = pairs[i].0.between(&pairs[j].0);
        let (rg, pg) = pairs[i].1.between(&pairs[j].1);
        rpe_t.push((pe - pg).norm());
        rpe_r.push(angle_between(&re, &rg).to_degrees());
        i = j;
    }
    Ok(TrajectoryMetrics {
        associated: pairs.len(),
        ape_translation: ErrorStats::new(&ape.iter().map(|x| x.translation).collect::<Vec<_>>()),
        ape_rotation: ErrorStats::new(&ape.iter().map(|x| x.rotation).collect::<Vec<_>>()),
        rpe_translation: ErrorStats::new(&rpe_t),
        rpe_rotation: ErrorStats::new(&rpe_r),
        segment_length,
        segments: rpe_t.len(),
        path_length: *arc.last().unwrap(),
        ape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{exp_so3, rot_z};

    fn line(n: usize) -> Vec<StampedPose> {
        (0..n)
            .map(|k| StampedPose {
                t: k as f64 * 0.1,
                rot: rot_z(0.01 * k as f64),
                p: Vector3::new(0.2 * k as f64, 0.0, 0.0),
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_give_zero() {
        let g = line(500);
        let m = evaluate(&g, &g, RPE_SEGMENT, ASSOCIATION_TOLERANCE).unwrap();
        assert_eq!(m.ape_translation.max, 0.0);
        assert_eq!(m.ape_rotation.max, 0.0);
        assert_eq!(m.rpe_translation.max, 0.0);
        assert_eq!(m.rpe_rotation.max, 0.0);
        assert_eq!(m.segments, 9);
    }

    #[test]
    fn rigid_offset_is_aligned_away() {
        let g = line(300);
        let (r, c) = (exp_so3(&Vector3::new(0.1, -0.2, 0.7)), Vector3::new(4.0, -3.0, 1.0));
        let e: Vec<_> = g
            .iter()
            .map(|s| StampedPose { rot: r * s.rot, p: r * s.p + c, ..*s })
            .collect();
        let m = evaluate(&e, &g, RPE_SEGMENT, ASSOCIATION_TOLERANCE).unwrap();
        assert!(m.ape_translation.max < 1e-12 && m.ape_rotation.max < 1e-9);
    }

    #[test]
    fn one_percent_drift_gives_ten_cm_per_segment() {
        let g = line(600);
        let e: Vec<_> = g
            .iter()
            .map(|s| StampedPose { p: s.p + Vector3::new(0.0, 0.01 * s.p.x, 0.0), ..*s })
            .collect();
        let m = evaluate(&e, &g, RPE_SEGMENT, ASSOCIATION_TOLERANCE).unwrap();
        assert!((m.rpe_translation.mean - 0.1).abs() < 1e-9, "{:?}", m.rpe_translation);
    }

    #[test]
    fn tum_round_trip() {
        let g = line(20);
        let mut buf = Vec::new();
        write_tum(&g, &mut buf).unwrap();
        let back = read_tum(buf.as_slice()).unwrap();
        for (a, b) in g.iter().zip(&back) {
            assert!((a.t - b.t).abs() < 1e-9 && (a.p - b.p).norm() < 1e-8 && (a.rot - b.rot).norm() < 1e-8);
        }
        let err = read_tum("0 1 2 3 0 0 0 1\n0.1 1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, RioError::Parse { line: 2, .. }));
    }

    #[test]
    fn association_respects_tolerance() {
        let g = line(10);
        let e: Vec<_> = g.iter().map(|s| StampedPose { t: s.t + 0.02, ..*s }).collect();
        assert!(associate(&e, &g, 0.01).is_empty());
        assert_eq!(associate(&e, &g, 0.03).len(), 10);
    }
}
