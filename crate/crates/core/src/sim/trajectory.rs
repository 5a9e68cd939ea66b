use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RioError};
use crate::geometry::rot_z;

/// Path geometry, parameterized by arc length from the start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathShape {
    Static,
    Line {
        direction: [f64; 3],
    },
    /// Counter-clockwise helix starting at the origin heading +y.
    Helix {
        radius: f64,
        /// m per turn
        pitch: f64,
    },
    /// Counter-clockwise loop starting at the origin heading +x.
    RoundedRectangle {
        length: f64,
        width: f64,
        corner_radius: f64,
    },
    /// Figure-eight `x = a sin φ, y = a sin φ cos φ`.
    Lemniscate {
        half_width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum YawMode {
    /// Heading follows the horizontal tangent of the path.
    Aligned,
    Constant { yaw_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub shape: PathShape,
    /// m/s along the path once ramped up
    pub speed: f64,
    /// s at rest before the ramp starts
    #[serde(default = "default_rest")]
    pub rest: f64,
    /// s to reach `speed`
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    pub yaw: YawMode,
    pub duration: f64,
    #[serde(default)]
    pub start: [f64; 3],
}

fn default_rest() -> f64 {
    2.0
}

fn default_ramp() -> f64 {
    3.0
}

/// Kinematic truth at one instant. `rot` maps body to inertial coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub omega_body: Vector3<f64>,
}

/// Position and first two arc-length derivatives of the path.
#[derive(Debug, Clone, Copy)]
struct CurvePoint {
    c: Vector3<f64>,
    d1: Vector3<f64>,
    d2: Vector3<f64>,
}

const LEMNISCATE_TABLE: usize = 2048;

/// Precomputed geometry needed to evaluate a [`TrajectorySpec`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    spec: TrajectorySpec,
    direction: Vector3<f64>,
    /// Cumulative arc length over one lemniscate period at uniform φ nodes.
    lemniscate_s: Vec<f64>,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(RioError::config("speed", "must be non-negative"));
        }
        if !(self.duration > 0.0) {
            return Err(RioError::config("duration", "must be positive"));
        }
        if !(self.rest >= 0.0) {
            return Err(RioError::config("rest", "must be non-negative"));
        }
        if !(self.ramp > 0.0) {
            return Err(RioError::config("ramp", "must be positive"));
        }
        match self.shape {
            PathShape::Static => {}
            PathShape::Line { direction } => {
                if Vector3::from(direction).norm() < 1e-12 {
                    return Err(RioError::config("direction", "must be non-zero"));
                }
            }
            PathShape::Helix { radius, pitch } => {
                if !(radius > 0.0 && pitch.is_finite()) {
                    return Err(RioError::config("radius", "must be positive"));
                }
            }
            PathShape::RoundedRectangle {
                length,
                width,
                corner_radius,
            } => {
                if !(corner_radius > 0.0 && length >= 2.0 * corner_radius && width >= 2.0 * corner_radius) {
                    return Err(RioError::config(
                        "corner_radius",
                        "must be positive and at most half of length and width",
                    ));
                }
            }
            PathShape::Lemniscate { half_width } => {
                if !(half_width > 0.0) {
                    return Err(RioError::config("half_width", "must be positive"));
                }
            }
        }
        Ok(())
    }
}

fn smootherstep(x: f64) -> (f64, f64, f64) {
    // integral, value, derivative of 6x^5 - 15x^4 + 10x^3 on [0, 1]
    let x2 = x * x;
    let integral = x2 * x2 * (x2 - 3.0 * x + 2.5);
    let value = x2 * x * (6.0 * x2 - 15.0 * x + 10.0);
    let deriv = 30.0 * x2 * (x2 - 2.0 * x + 1.0);
    (integral, value, deriv)
}

fn gauss_legendre_5(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683,
        0.538_469_310_105_683,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
        0.236_926_885_056_189,
    ];
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter().zip(W).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

impl Trajectory {
    pub fn new(spec: TrajectorySpec) -> Result<Self> {
        spec.validate()?;
        let direction = match spec.shape {
            PathShape::Line { direction } => Vector3::from(direction).normalize(),
            _ => Vector3::x(),
        };
        let lemniscate_s = match spec.shape {
            PathShape::Lemniscate { half_width } => {
                let h = TAU / LEMNISCATE_TABLE as f64;
                let mut s = vec![0.0; LEMNISCATE_TABLE + 1];
                for i in 0..LEMNISCATE_TABLE {
                    let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                    s[i + 1] = s[i] + gauss_legendre_5(|p| lemniscate_speed(half_width, p), a, b);
                }
                s
            }
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            direction,
            lemniscate_s,
        })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn duration(&self) -> f64 {
        self.spec.duration
    }

    /// Arc length travelled and its first two time derivatives.
    fn progress(&self, t: f64) -> (f64, f64, f64) {
        let (v, rest, ramp) = (self.spec.speed, self.spec.rest, self.spec.ramp);
        if t <= rest {
            return (0.0, 0.0, 0.0);
        }
        let tau = t - rest;
        if tau < ramp {
            let (i, s, d) = smootherstep(tau / ramp);
            (v * ramp * i, v * s, v * d / ramp)
        } else {
            (v * ramp * 0.5 + v * (tau - ramp), v, 0.0)
        }
    }

    fn curve(&self, u: f64) -> CurvePoint {
        let z = Vector3::zeros();
        match self.spec.shape {
            PathShape::Static => CurvePoint { c: z, d1: z, d2: z },
            PathShape::Line { .. } => CurvePoint {
                c: self.direction * u,
                d1: self.direction,
                d2: z,
            },
            PathShape::Helix { radius: r, pitch } => {
                let k = pitch / TAU;
                let l = (r * r + k * k).sqrt();
                let th = u / l;
                let (s, c) = th.sin_cos();
                CurvePoint {
                    c: Vector3::new(r * (c - 1.0), r * s, k * th),
                    d1: Vector3::new(-r * s, r * c, k) / l,
                    d2: Vector3::new(-r * c, -r * s, 0.0) / (l * l),
                }
            }
            PathShape::RoundedRectangle {
                length,
                width,
                corner_radius,
            } => rounded_rectangle(length, width, corner_radius, u),
            PathShape::Lemniscate { half_width } => self.lemniscate(half_width, u),
        }
    }

    fn lemniscate(&self, a: f64, u: f64) -> CurvePoint {
        let table = &self.lemniscate_s;
        let period = table[LEMNISCATE_TABLE];
        let turns = (u / period).floor();
        let rem = u - turns * period;
        let i = table.partition_point(|&s| s <= rem).clamp(1, LEMNISCATE_TABLE) - 1;
        let h = TAU / LEMNISCATE_TABLE as f64;
        let phi0 = i as f64 * h;
        let mut phi = phi0 + (rem - table[i]) / lemniscate_speed(a, phi0);
        for _ in 0..8 {
            let f = table[i] + gauss_legendre_5(|p| lemniscate_speed(a, p), phi0, phi) - rem;
            let step = f / lemniscate_speed(a, phi);
            phi -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (s, c) = phi.sin_cos();
        let (s2, c2) = (2.0 * phi).sin_cos();
        let pos = Vector3::new(a * s, 0.5 * a * s2, 0.0);
        let dp = Vector3::new(a * c, a * c2, 0.0);
        let ddp = Vector3::new(-a * s, -2.0 * a * s2, 0.0);
        let n = dp.norm();
        // φ'(u) = 1/|dp|, φ''(u) = -(dp·ddp)/|dp|^4
        let phi_u = 1.0 / n;
        let phi_uu = -dp.dot(&ddp) / n.powi(4);
        CurvePoint {
            c: pos,
            d1: dp * phi_u,
            d2: ddp * phi_u * phi_u + dp * phi_uu,
        }
    }

    pub fn sample(&self, t: f64) -> Result<TrajectorySample> {
        if !(0.0..=self.spec.duration + 1e-9).contains(&t) {
            return Err(RioError::Domain(format!(
                "time {t} outside trajectory span [0, {}]",
                self.spec.duration
            )));
        }
        let (u, ud, udd) = self.progress(t);
        let cp = self.curve(u);
        let p = Vector3::from(self.spec.start) + cp.c;
        let v = cp.d1 * ud;
        let a = cp.d2 * ud * ud + cp.d1 * udd;
        let (yaw, yaw_rate) = match self.spec.yaw {
            YawMode::Constant { yaw_deg } => (yaw_deg.to_radians(), 0.0),
            YawMode::Aligned => {
                let (dx, dy) = (cp.d1.x, cp.d1.y);
                let n2 = dx * dx + dy * dy;
                if n2 < 1e-12 {
                    return Err(RioError::Domain(
                        "tangent-aligned yaw needs non-zero horizontal motion".into(),
                    ));
                }
                let rate = ud * (dx * cp.d2.y - cp.d2.x * dy) / n2;
                (dy.atan2(dx), rate)
            }
        };
        Ok(TrajectorySample {
            t,
            rot: rot_z(yaw),
            p,
            v,
            a,
            omega_body: Vector3::new(0.0, 0.0, yaw_rate),
        })
    }

    /// Arc length of the path travelled by time `t`.
    pub fn distance(&self, t: f64) -> f64 {
        self.progress(t.clamp(0.0, self.spec.duration)).0
    }
}

fn lemniscate_speed(a: f64, phi: f64) -> f64 {
    a * (phi.cos().powi(2) + (2.0 * phi).cos().powi(2)).sqrt()
}

fn rounded_rectangle(length: f64, width: f64, r: f64, u: f64) -> CurvePoint {
    let (sx, sy) = (length - 2.0 * r, width - 2.0 * r);
    let arc = 0.5 * PI * r;
    let perimeter = 2.0 * (sx + sy) + 4.0 * arc;
    let mut s = u.rem_euclid(perimeter);
    // Straight x, arc, straight y, arc, ... going counter-clockwise; the first
    // straight starts at the origin heading +x.
    let mut corner = Vector3::zeros();
    let mut heading = 0.0_f64;
    let segs = [sx, arc, sy, arc, sx, arc, sy, arc];
    for (i, &len) in segs.iter().enumerate() {
        if s <= len || i == segs.len() - 1 {
            let (sh, ch) = heading.sin_cos();
            let t = Vector3::new(ch, sh, 0.0);
            if i % 2 == 0 {
                return CurvePoint {
                    c: corner + t * s,
                    d1: t,
                    d2: Vector3::zeros(),
                };
            }
            let n = Vector3::new(-sh, ch, 0.0);
            let center = corner + n * r;
            let ang = s / r;
            let (sa, ca) = ang.sin_cos();
            let radial = -n * ca + t * sa;
            let tangent = t * ca + n * sa;
            return CurvePoint {
                c: center + radial * r,
                d1: tangent,
                d2: -radial / r,
            };
        }
        s -= len;
        let (sh, ch) = heading.sin_cos();
        let t = Vector3::new(ch, sh, 0.0);
        if i % 2 == 0 {
            corner += t * len;
        } else {
            let n = Vector3::new(-sh, ch, 0.0);
            corner += (t + n) * r;
            heading += 0.5 * PI;
        }
    }
    unreachable!("segment loop always returns")
}
