//! Radar Doppler, scan-to-map registration and barometric factors.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::graph::{BlockBuilder, Context, Factor, Key, Values};
use super::linear::HessianFactor;
use super::loss::RobustLoss;
use super::state::{Extrinsics, NavState, BB, BG, EXT_DIM, NAV_DIM, P, TH, V};
use crate::atmosphere::altitude_from_pressure;
use crate::error::{Result, RioError};
use crate::geometry::skew;
use crate::noise::{doppler_residual_variance, registration_covariance, BearingCovariance, GyroTerm, QuantNoise};
use crate::radar::Bearing;

/// Radar-frame velocity of the radar origin predicted from the state, the
/// mounting and the averaged gyro reading.
pub fn predicted_radar_velocity(s: &NavState, ext: &Extrinsics, avg_rate: &Vector3<f64>) -> Vector3<f64> {
    ext.rot.transpose() * (s.rot.transpose() * s.v + (avg_rate - s.bg).cross(&ext.lever))
}

/// Doppler residual `−μᵀ v_R − ṽ_r` with its Jacobians with respect to the
/// navigation state and the extrinsics tangent spaces.
pub fn doppler_residual(
    mu: &Vector3<f64>,
    radial_speed: f64,
    s: &NavState,
    ext: &Extrinsics,
    avg_rate: &Vector3<f64>,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let v_body = s.rot.transpose() * s.v;
    let rate = avg_rate - s.bg;
    let u = v_body + rate.cross(&ext.lever);
    let e = -mu.dot(&(ext.rot.transpose() * u)) - radial_speed;
    let m = -mu.transpose() * ext.rot.transpose();
    let mut jn = DMatrix::zeros(1, NAV_DIM);
    jn.fixed_view_mut::<1, 3>(0, TH).copy_from(&(m * skew(&v_body)));
    jn.fixed_view_mut::<1, 3>(0, V).copy_from(&(m * s.rot.transpose()));
    jn.fixed_view_mut::<1, 3>(0, BG).copy_from(&(m * skew(&ext.lever)));
    let mut je = DMatrix::zeros(1, EXT_DIM);
    je.fixed_view_mut::<1, 3>(0, 0)
        .copy_from(&(-mu.transpose() * skew(&(ext.rot.transpose() * u))));
    je.fixed_view_mut::<1, 3>(0, 3).copy_from(&(m * skew(&rate)));
    (e, jn, je)
}

/// How the Doppler residual variance is modelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerNoise {
    pub quant: QuantNoise,
    /// Adds the state-dependent bearing contribution `vᵀΣ_μv`.
    pub angle_noise_on: bool,
    /// Covariance of the averaged gyro reading, when the angular-rate term
    /// is included.
    pub gyro_rate_cov: Option<Matrix3<f64>>,
}

impl DopplerNoise {
    pub fn variance(
        &self,
        mu: &Bearing,
        sigma_mu: &BearingCovariance,
        s: &NavState,
        ext: &Extrinsics,
        avg_rate: &Vector3<f64>,
    ) -> f64 {
        let gyro = self.gyro_rate_cov.map(|c| GyroTerm::new(mu, &ext.rot, &ext.lever, c));
        if self.angle_noise_on {
            let v = predicted_radar_velocity(s, ext, avg_rate);
            doppler_residual_variance(mu, &v, &self.quant, sigma_mu, gyro.as_ref())
        } else {
            let zero = BearingCovariance {
                sigma_mu: Matrix3::zeros(),
            };
            doppler_residual_variance(mu, &Vector3::zeros(), &self.quant, &zero, gyro.as_ref())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerPoint {
    pub mu: Bearing,
    pub radial_speed: f64,
    pub sigma_mu: BearingCovariance,
}

/// All Doppler residuals of one scan, robustified per point and summed into
/// a single quadratic over the scan's node and the extrinsics.
#[derive(Debug, Clone)]
pub struct DopplerScanFactor {
    pub node: u64,
    pub points: Vec<DopplerPoint>,
    pub avg_rate: Vector3<f64>,
    pub noise: DopplerNoise,
    pub loss: RobustLoss,
    variances: Vec<f64>,
}

impl DopplerScanFactor {
    pub fn new(node: u64, points: Vec<DopplerPoint>, avg_rate: Vector3<f64>, noise: DopplerNoise, loss: RobustLoss) -> Self {
        let variances = vec![noise.quant.variance(); points.len()];
        Self {
            node,
            points,
            avg_rate,
            noise,
            loss,
            variances,
        }
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Whitened residual of every point at `vals`.
    pub fn whitened(&self, vals: &Values) -> Result<Vec<f64>> {
        let s = vals.nav(self.node)?;
        Ok(self
            .points
            .iter()
            .zip(&self.variances)
            .map(|(p, var)| doppler_residual(&p.mu.mu, p.radial_speed, s, &vals.ext, &self.avg_rate).0 / var.sqrt())
            .collect())
    }
}

impl Factor for DopplerScanFactor {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.node), Key::Ext]
    }

    fn refresh(&mut self, vals: &Values, _ctx: &Context) -> Result<()> {
        let s = vals.nav(self.node)?;
        for (p, var) in self.points.iter().zip(self.variances.iter_mut()) {
            *var = self.noise.variance(&p.mu, &p.sigma_mu, s, &vals.ext, &self.avg_rate);
        }
        Ok(())
    }

    fn cost(&self, vals: &Values) -> Result<f64> {
        Ok(self.whitened(vals)?.iter().map(|r| 0.5 * self.loss.rho(r * r)).sum())
    }

    fn linearize(&self, vals: &Values) -> Result<HessianFactor> {
        let s = vals.nav(self.node)?;
        let mut b = BlockBuilder::new(vals, &self.keys())?;
        for (p, var) in self.points.iter().zip(&self.variances) {
            let (e, jn, je) = doppler_residual(&p.mu.mu, p.radial_speed, s, &vals.ext, &self.avg_rate);
            let w = 1.0 / var.sqrt();
            b.add(&DVector::from_element(1, e * w), &[&(jn * w), &(je * w)], self.loss);
        }
        Ok(b.factor)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Indices of points whose whitened Doppler residual is below `kappa`.
pub fn select_static_points(
    points: &[DopplerPoint],
    s: &NavState,
    ext: &Extrinsics,
    avg_rate: &Vector3<f64>,
    noise: &DopplerNoise,
    kappa: f64,
) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let e = doppler_residual(&p.mu.mu, p.radial_speed, s, ext, avg_rate).0;
            let sd = noise.variance(&p.mu, &p.sigma_mu, s, ext, avg_rate).sqrt();
            e.abs() < kappa * sd
        })
        .map(|(k, _)| k)
        .collect()
}

/// World-frame position of a radar point and the residual to a map
/// neighborhood mean, with Jacobians.
pub fn registration_residual(
    target: &Vector3<f64>,
    q_mean: &Vector3<f64>,
    s: &NavState,
    ext: &Extrinsics,
) -> (Vector3<f64>, DMatrix<f64>, DMatrix<f64>) {
    let x = ext.rot * target + ext.lever;
    let e = s.rot * x + s.p - q_mean;
    let mut jn = DMatrix::zeros(3, NAV_DIM);
    jn.fixed_view_mut::<3, 3>(0, TH).copy_from(&(-s.rot * skew(&x)));
    jn.fixed_view_mut::<3, 3>(0, P).copy_from(&Matrix3::identity());
    let mut je = DMatrix::zeros(3, EXT_DIM);
    je.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-s.rot * ext.rot * skew(target)));
    je.fixed_view_mut::<3, 3>(0, 3).copy_from(&s.rot);
    (e, jn, je)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationPoint {
    pub mu: Bearing,
    pub range: f64,
    pub sigma_mu: BearingCovariance,
}

impl RegistrationPoint {
    pub fn target(&self) -> Vector3<f64> {
        self.mu.mu * self.range
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Association {
    mean: Vector3<f64>,
    cov: Matrix3<f64>,
    whitener: Matrix3<f64>,
}

/// Distribution-to-distribution residuals between one scan and the map.
#[derive(Debug, Clone)]
pub struct RegistrationFactor {
    pub node: u64,
    pub points: Vec<RegistrationPoint>,
    pub quant_range: QuantNoise,
    pub loss: RobustLoss,
    pub radius: f64,
    /// Added to every neighborhood covariance so planar patches stay invertible.
    pub cov_floor: f64,
    reassociate: bool,
    assoc: Vec<Option<Association>>,
}

impl RegistrationFactor {
    pub fn new(
        node: u64,
        points: Vec<RegistrationPoint>,
        quant_range: QuantNoise,
        loss: RobustLoss,
        radius: f64,
        cov_floor: f64,
    ) -> Self {
        let n = points.len();
        Self {
            node,
            points,
            quant_range,
            loss,
            radius,
            cov_floor,
            reassociate: true,
            assoc: vec![None; n],
        }
    }

    pub fn associated(&self) -> usize {
        self.assoc.iter().flatten().count()
    }

    fn whitened(&self, vals: &Values) -> Result<Vec<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)>> {
        let s = vals.nav(self.node)?;
        Ok(self
            .points
            .iter()
            .zip(&self.assoc)
            .filter_map(|(p, a)| a.map(|a| (p, a)))
            .map(|(p, a)| {
                let (e, jn, je) = registration_residual(&p.target(), &a.mean, s, &vals.ext);
                let w = DMatrix::from_column_slice(3, 3, a.whitener.as_slice());
                (
                    DVector::from_column_slice((a.whitener * e).as_slice()),
                    &w * jn,
                    &w * je,
                )
            })
            .collect())
    }
}

impl Factor for RegistrationFactor {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.node), Key::Ext]
    }

    fn refresh(&mut self, vals: &Values, ctx: &Context) -> Result<()> {
        let s = vals.nav(self.node)?;
        let ext = vals.ext;
        let r_world_radar = s.rot * ext.rot;
        for (p, a) in self.points.iter().zip(self.assoc.iter_mut()) {
            if self.reassociate {
                let q = s.rot * (ext.rot * p.target() + ext.lever) + s.p;
                *a = ctx.map.and_then(|m| m.radius_neighbors(&q, self.radius)).map(|n| Association {
                    mean: n.mean,
                    cov: n.covariance + Matrix3::identity() * self.cov_floor,
                    whitener: Matrix3::identity(),
                });
            }
            if let Some(a) = a.as_mut() {
                let cov = registration_covariance(&p.mu, p.range, &self.quant_range, &p.sigma_mu, &r_world_radar, &a.cov);
                let l = cov
                    .cholesky()
                    .ok_or_else(|| RioError::Domain("registration covariance is not positive definite".into()))?
                    .l();
                a.whitener = l.try_inverse().expect("Cholesky factor is invertible");
            }
        }
        Ok(())
    }

    fn cost(&self, vals: &Values) -> Result<f64> {
        Ok(self
            .whitened(vals)?
            .iter()
            .map(|(r, _, _)| 0.5 * self.loss.rho(r.norm_squared()))
            .sum())
    }

    fn linearize(&self, vals: &Values) -> Result<HessianFactor> {
        let mut b = BlockBuilder::new(vals, &self.keys())?;
        for (r, jn, je) in self.whitened(vals)? {
            b.add(&r, &[&jn, &je], self.loss);
        }
        Ok(b.factor)
    }

    fn freeze(&mut self) {
        self.reassociate = false;
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// `e_B = z − (h(P̃) − b_b)`.
pub fn baro_residual(pressure: f64, s: &NavState) -> Result<f64> {
    if !(pressure > 0.0) {
        return Err(RioError::Domain(format!("pressure {pressure} Pa must be positive")));
    }
    Ok(s.p.z - (altitude_from_pressure(pressure) - s.bb))
}

#[derive(Debug, Clone)]
pub struct BaroFactor {
    pub node: u64,
    pub pressure: f64,
    pub sigma: f64,
    pub loss: RobustLoss,
}

impl BaroFactor {
    fn jacobian() -> DMatrix<f64> {
        let mut j = DMatrix::zeros(1, NAV_DIM);
        j[(0, P + 2)] = 1.0;
        j[(0, BB)] = 1.0;
        j
    }
}

impl Factor for BaroFactor {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.node)]
    }

    fn cost(&self, vals: &Values) -> Result<f64> {
        let r = baro_residual(self.pressure, vals.nav(self.node)?)? / self.sigma;
        Ok(0.5 * self.loss.rho(r * r))
    }

    fn linearize(&self, vals: &Values) -> Result<HessianFactor> {
        let r = baro_residual(self.pressure, vals.nav(self.node)?)? / self.sigma;
        let mut b = BlockBuilder::new(vals, &self.keys())?;
        b.add(&DVector::from_element(1, r), &[&(Self::jacobian() / self.sigma)], self.loss);
        Ok(b.factor)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
