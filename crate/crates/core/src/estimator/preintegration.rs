use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use super::state::{NavState, BA, BB, BG, NAV_DIM, P, TH, V};
use crate::error::{Result, RioError};
use crate::geometry::{exp_so3, log_so3, right_jacobian, right_jacobian_inv, skew};
use crate::sim::{ImuNoise, ImuSample, GRAVITY};

type Mat9 = SMatrix<f64, 9, 9>;

/// Relative motion increments between two node times, with the first-order
/// bias sensitivities and covariance of `[δθ, δp, δv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreintegratedImu {
    pub t_start: f64,
    pub t_end: f64,
    pub d_rot: Matrix3<f64>,
    pub d_p: Vector3<f64>,
    pub d_v: Vector3<f64>,
    pub cov: Mat9,
    pub bias_acc: Vector3<f64>,
    pub bias_gyro: Vector3<f64>,
    pub j_rot_bg: Matrix3<f64>,
    pub j_v_ba: Matrix3<f64>,
    pub j_v_bg: Matrix3<f64>,
    pub j_p_ba: Matrix3<f64>,
    pub j_p_bg: Matrix3<f64>,
    pub count: usize,
    samples: Vec<ImuSample>,
    noise: ImuNoise,
}

/// Linear interpolation of an IMU stream at `t`; `samples` must bracket `t`.
pub fn interpolate_imu(samples: &[ImuSample], t: f64) -> Option<ImuSample> {
    let k = samples.partition_point(|s| s.t < t);
    if k < samples.len() && samples[k].t == t {
        return Some(samples[k]);
    }
    if k == 0 || k == samples.len() {
        return None;
    }
    let (a, b) = (&samples[k - 1], &samples[k]);
    let w = (t - a.t) / (b.t - a.t);
    Some(ImuSample {
        t,
        gyro: a.gyro * (1.0 - w) + b.gyro * w,
        accel: a.accel * (1.0 - w) + b.accel * w,
    })
}

/// The samples covering `[t0, t1]`, with interpolated end points.
pub fn imu_segment(samples: &[ImuSample], t0: f64, t1: f64) -> Option<Vec<ImuSample>> {
    let first = interpolate_imu(samples, t0)?;
    let last = interpolate_imu(samples, t1)?;
    let mut seg = vec![first];
    seg.extend(samples.iter().filter(|s| s.t > t0 && s.t < t1).copied());
    seg.push(last);
    Some(seg)
}

impl PreintegratedImu {
    /// Integrates consecutive sample pairs using their averaged readings.
    pub fn new(samples: &[ImuSample], bias_acc: Vector3<f64>, bias_gyro: Vector3<f64>, noise: ImuNoise) -> Result<Self> {
        if samples.is_empty() {
            return Err(RioError::Domain("preintegration needs at least one sample".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(RioError::NonMonotone {
                    prev: w[0].t,
                    next: w[1].t,
                });
            }
        }
        let mut pi = Self {
            t_start: samples[0].t,
            t_end: samples[samples.len() - 1].t,
            d_rot: Matrix3::identity(),
            d_p: Vector3::zeros(),
            d_v: Vector3::zeros(),
            cov: Mat9::zeros(),
            bias_acc,
            bias_gyro,
            j_rot_bg: Matrix3::zeros(),
            j_v_ba: Matrix3::zeros(),
            j_v_bg: Matrix3::zeros(),
            j_p_ba: Matrix3::zeros(),
            j_p_bg: Matrix3::zeros(),
            count: samples.len(),
            samples: samples.to_vec(),
            noise,
        };
        pi.integrate();
        Ok(pi)
    }

    pub fn dt(&self) -> f64 {
        self.t_end - self.t_start
    }

    fn integrate(&mut self) {
        let (sg2, sa2) = (
            self.noise.gyro_noise_density.powi(2),
            self.noise.accel_noise_density.powi(2),
        );
        let (mut dr, mut dp, mut dv) = (Matrix3::identity(), Vector3::zeros(), Vector3::zeros());
        let mut cov = Mat9::zeros();
        let (mut jrg, mut jva, mut jvg, mut jpa, mut jpg) = (
            Matrix3::zeros(),
            Matrix3::zeros(),
            Matrix3::zeros(),
            Matrix3::zeros(),
            Matrix3::zeros(),
        );
        for w in self.samples.windows(2) {
            let dt = w[1].t - w[0].t;
            let omega = 0.5 * (w[0].gyro + w[1].gyro) - self.bias_gyro;
            let acc = 0.5 * (w[0].accel + w[1].accel) - self.bias_acc;
            let phi = omega * dt;
            let inc = exp_so3(&phi);
            let jr = right_jacobian(&phi);
            let ax = skew(&acc);

            let mut a = Mat9::identity();
            a.fixed_view_mut::<3, 3>(0, 0).copy_from(&inc.transpose());
            a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-0.5 * dr * ax * dt * dt));
            a.fixed_view_mut::<3, 3>(3, 6).copy_from(&(Matrix3::identity() * dt));
            a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(-dr * ax * dt));
            let mut b = SMatrix::<f64, 9, 6>::zeros();
            b.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jr * dt));
            b.fixed_view_mut::<3, 3>(3, 3).copy_from(&(0.5 * dr * dt * dt));
            b.fixed_view_mut::<3, 3>(6, 3).copy_from(&(dr * dt));
            let mut q = SMatrix::<f64, 6, 6>::zeros();
            q.fixed_view_mut::<3, 3>(0, 0).fill_diagonal(sg2 / dt);
            q.fixed_view_mut::<3, 3>(3, 3).fill_diagonal(sa2 / dt);
            cov = a * cov * a.transpose() + b * q * b.transpose();

            jpa += jva * dt - 0.5 * dr * dt * dt;
            jpg += jvg * dt - 0.5 * dr * ax * jrg * dt * dt;
            jva -= dr * dt;
            jvg -= dr * ax * jrg * dt;
            jrg = inc.transpose() * jrg - jr * dt;

            dp += dv * dt + 0.5 * dr * acc * dt * dt;
            dv += dr * acc * dt;
            dr *= inc;
        }
        self.d_rot = crate::geometry::orthonormalize(&dr);
        self.d_p = dp;
        self.d_v = dv;
        self.cov = 0.5 * (cov + cov.transpose());
        self.j_rot_bg = jrg;
        self.j_v_ba = jva;
        self.j_v_bg = jvg;
        self.j_p_ba = jpa;
        self.j_p_bg = jpg;
    }

    /// Recomputes the increments about a new bias linearization point.
    pub fn repreintegrate(&mut self, bias_acc: Vector3<f64>, bias_gyro: Vector3<f64>) {
        self.bias_acc = bias_acc;
        self.bias_gyro = bias_gyro;
        self.integrate();
    }

    /// Increments corrected to first order for biases `(ba, bg)`.
    pub fn corrected(&self, ba: &Vector3<f64>, bg: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>) {
        let (dba, dbg) = (ba - self.bias_acc, bg - self.bias_gyro);
        (
            self.d_rot * exp_so3(&(self.j_rot_bg * dbg)),
            self.d_p + self.j_p_ba * dba + self.j_p_bg * dbg,
            self.d_v + self.j_v_ba * dba + self.j_v_bg * dbg,
        )
    }

    /// State at the end of the interval from the state at its start.
    pub fn predict(&self, s: &NavState) -> NavState {
        let (dr, dp, dv) = self.corrected(&s.ba, &s.bg);
        let dt = self.dt();
        NavState {
            rot: crate::geometry::orthonormalize(&(s.rot * dr)),
            p: s.p + s.v * dt + 0.5 * GRAVITY * dt * dt + s.rot * dp,
            v: s.v + GRAVITY * dt + s.rot * dv,
            ..*s
        }
    }
}

/// Random-walk densities of the bias states between consecutive nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasWalk {
    pub accel: f64,
    pub gyro: f64,
    /// m/√s
    pub baro: f64,
}

pub const IMU_RESIDUAL_DIM: usize = 16;

/// Preintegrated motion constraint between nodes `i` and `j` plus the bias
/// random walks: rows `[e_R, e_p, e_v, e_ba, e_bg, e_bb]`.
#[derive(Debug, Clone)]
pub struct ImuFactor {
    pub pim: PreintegratedImu,
    pub walk: BiasWalk,
}

impl ImuFactor {
    pub fn residual(&self, si: &NavState, sj: &NavState) -> SVector<f64, 16> {
        let (dr, dp, dv) = self.pim.corrected(&si.ba, &si.bg);
        let dt = self.pim.dt();
        let rit = si.rot.transpose();
        let mut e = SVector::<f64, 16>::zeros();
        e.fixed_rows_mut::<3>(0)
            .copy_from(&log_so3(&(dr.transpose() * rit * sj.rot)));
        e.fixed_rows_mut::<3>(3)
            .copy_from(&(rit * (sj.p - si.p - si.v * dt - 0.5 * GRAVITY * dt * dt) - dp));
        e.fixed_rows_mut::<3>(6).copy_from(&(rit * (sj.v - si.v - GRAVITY * dt) - dv));
        e.fixed_rows_mut::<3>(9).copy_from(&(sj.ba - si.ba));
        e.fixed_rows_mut::<3>(12).copy_from(&(sj.bg - si.bg));
        e[15] = sj.bb - si.bb;
        e
    }

    /// Residual and its Jacobians with respect to the tangent spaces of
    /// nodes `i` and `j`.
    pub fn linearize(&self, si: &NavState, sj: &NavState) -> (SVector<f64, 16>, DMatrix<f64>, DMatrix<f64>) {
        let e = self.residual(si, sj);
        let dt = self.pim.dt();
        let rit = si.rot.transpose();
        let er: Vector3<f64> = e.fixed_rows::<3>(0).into_owned();
        let jr_inv = right_jacobian_inv(&er);
        let dbg = si.bg - self.pim.bias_gyro;
        let mut ji = DMatrix::zeros(16, NAV_DIM);
        let mut jj = DMatrix::zeros(16, NAV_DIM);
        let put = |m: &mut DMatrix<f64>, r: usize, c: usize, b: Matrix3<f64>| {
            m.fixed_view_mut::<3, 3>(r, c).copy_from(&b);
        };
        // rotation rows
        put(&mut ji, 0, TH, -jr_inv * sj.rot.transpose() * si.rot);
        put(&mut jj, 0, TH, jr_inv);
        put(
            &mut ji,
            0,
            BG,
            -jr_inv * exp_so3(&er).transpose() * right_jacobian(&(self.pim.j_rot_bg * dbg)) * self.pim.j_rot_bg,
        );
        // position rows
        let dpw = sj.p - si.p - si.v * dt - 0.5 * GRAVITY * dt * dt;
        put(&mut ji, 3, TH, skew(&(rit * dpw)));
        put(&mut ji, 3, P, -rit);
        put(&mut jj, 3, P, rit);
        put(&mut ji, 3, V, -rit * dt);
        put(&mut ji, 3, BA, -self.pim.j_p_ba);
        put(&mut ji, 3, BG, -self.pim.j_p_bg);
        // velocity rows
        let dvw = sj.v - si.v - GRAVITY * dt;
        put(&mut ji, 6, TH, skew(&(rit * dvw)));
        put(&mut ji, 6, V, -rit);
        put(&mut jj, 6, V, rit);
        put(&mut ji, 6, BA, -self.pim.j_v_ba);
        put(&mut ji, 6, BG, -self.pim.j_v_bg);
        // bias walks
        put(&mut ji, 9, BA, -Matrix3::identity());
        put(&mut jj, 9, BA, Matrix3::identity());
        put(&mut ji, 12, BG, -Matrix3::identity());
        put(&mut jj, 12, BG, Matrix3::identity());
        ji[(15, BB)] = -1.0;
        jj[(15, BB)] = 1.0;
        (e, ji, jj)
    }

    /// Lower-triangular `L` with `L Lᵀ` the residual covariance.
    pub fn sqrt_covariance(&self) -> DMatrix<f64> {
        let dt = self.pim.dt();
        let mut c = DMatrix::zeros(16, 16);
        c.view_mut((0, 0), (9, 9)).copy_from(&self.pim.cov);
        // Floors keep the information finite when a density is configured as zero.
        let floor = |s: f64| (s * s * dt).max(1e-16);
        for k in 0..3 {
            c[(9 + k, 9 + k)] = floor(self.walk.accel);
            c[(12 + k, 12 + k)] = floor(self.walk.gyro);
        }
        c[(15, 15)] = floor(self.walk.baro);
        for k in 0..9 {
            c[(k, k)] += 1e-14;
        }
        c.cholesky().expect("preintegrated covariance is positive definite").l()
    }
}

/// Dead-reckons `state` (valid at `t0`) through `samples` (all later than
/// `t0` except possibly the first), returning the state at every sample.
pub fn propagate(state: &NavState, t0: f64, first: &ImuSample, samples: &[ImuSample]) -> Vec<(f64, NavState)> {
    let mut out = Vec::with_capacity(samples.len());
    let mut s = *state;
    let mut prev = ImuSample { t: t0, ..*first };
    for m in samples.iter().filter(|m| m.t > t0) {
        let dt = m.t - prev.t;
        let omega = 0.5 * (prev.gyro + m.gyro) - s.bg;
        let acc = s.rot * (0.5 * (prev.accel + m.accel) - s.ba);
        s.p += s.v * dt + 0.5 * (acc + GRAVITY) * dt * dt;
        s.v += (acc + GRAVITY) * dt;
        s.rot = s.rot * exp_so3(&(omega * dt));
        prev = *m;
        out.push((m.t, s));
    }
    out
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
