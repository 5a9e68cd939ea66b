//! Streaming front end: buffers sensor data, builds one node per radar scan,
//! runs the smoother and emits low-rate (per scan) and high-rate (per IMU
//! sample) estimates.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};

use super::config::EstimatorConfig;
use super::factors::{
    select_static_points, BaroFactor, DopplerNoise, DopplerPoint, DopplerScanFactor, RegistrationFactor,
    RegistrationPoint,
};
use super::graph::{Context, Key, KeyValue, MarginalPrior};
use super::init::initialize_at_rest;
use super::preintegration::{imu_segment, interpolate_imu, propagate, BiasWalk, ImuFactor, PreintegratedImu};
use super::graph::ImuEdge;
use super::solver::OptimizeReport;
use super::state::{Extrinsics, NavState};
use super::window::SlidingWindow;
use crate::atmosphere::altitude_from_pressure;
use crate::error::{Result, RioError};
use crate::mapping::PointMap;
use crate::noise::{bearing_covariance, NoiseModel, PhaseNoise};
use crate::radar::{phases_to_bearing, ChirpConfig, RadarScan};
use crate::sim::{BaroSample, ImuSample, SimDataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseRecord {
    pub t: f64,
    pub rot: Matrix3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PoseRecord {
    fn from_state(t: f64, s: &NavState) -> Self {
        Self {
            t,
            rot: s.rot,
            p: s.p,
            v: s.v,
        }
    }
}

/// Bookkeeping for one processed scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanStats {
    pub t: f64,
    /// Wall time of the scan callback, s. Not deterministic.
    pub wall_time: f64,
    pub points: usize,
    pub valid_points: usize,
    pub static_points: usize,
    pub associated_points: usize,
    pub report: OptimizeReport,
}

pub struct Estimator {
    cfg: EstimatorConfig,
    noise: NoiseModel,
    phase_noise: PhaseNoise,
    imu: Vec<ImuSample>,
    baro: Vec<BaroSample>,
    pending: VecDeque<RadarScan>,
    window: SlidingWindow,
    map: PointMap,
    initialized: bool,
    /// High-rate integrator state and the IMU sample it was advanced with.
    high_rate: Option<(f64, NavState, ImuSample)>,
    pub low_rate_poses: Vec<PoseRecord>,
    pub high_rate_poses: Vec<PoseRecord>,
    pub stats: Vec<ScanStats>,
}

/// The Doppler and registration inputs built from one scan.
struct ScanPoints {
    doppler: Vec<DopplerPoint>,
    registration: Vec<RegistrationPoint>,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig, chirp: &ChirpConfig, ext: Extrinsics) -> Result<Self> {
        cfg.validate()?;
        chirp.validate()?;
        let noise = NoiseModel::from_config(chirp)?;
        let phase_noise = cfg.phase_noise.map(PhaseNoise::isotropic).unwrap_or(noise.phase);
        let map = PointMap::new(cfg.map)?;
        Ok(Self {
            window: SlidingWindow::new(ext, cfg.estimate_extrinsics),
            cfg,
            noise,
            phase_noise,
            imu: Vec::new(),
            baro: Vec::new(),
            pending: VecDeque::new(),
            map,
            initialized: false,
            high_rate: None,
            low_rate_poses: Vec::new(),
            high_rate_poses: Vec::new(),
            stats: Vec::new(),
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    pub fn map(&self) -> &PointMap {
        &self.map
    }

    pub fn extrinsics(&self) -> Extrinsics {
        self.window.values.ext
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn doppler_noise(&self) -> DopplerNoise {
        DopplerNoise {
            quant: self.noise.doppler,
            angle_noise_on: self.cfg.angle_noise_on,
            gyro_rate_cov: self.gyro_rate_cov(),
        }
    }

    fn gyro_rate_cov(&self) -> Option<Matrix3<f64>> {
        // Variance of a single gyro reading; the sample interval comes from
        // the buffered stream.
        self.cfg.gyro_term_on.then(|| {
            let dt = match self.imu.as_slice() {
                [.., a, b] => b.t - a.t,
                _ => 0.005,
            };
            Matrix3::identity() * self.cfg.imu.gyro_noise_density.powi(2) / dt
        })
    }

    pub fn push_imu(&mut self, s: ImuSample) -> Result<()> {
        if let Some(last) = self.imu.last() {
            if !(s.t > last.t) {
                return Err(RioError::NonMonotone { prev: last.t, next: s.t });
            }
        }
        self.imu.push(s);
        self.process_ready()?;
        self.advance_high_rate();
        Ok(())
    }

    pub fn push_baro(&mut self, s: BaroSample) -> Result<()> {
        if let Some(last) = self.baro.last() {
            if !(s.t > last.t) {
                return Err(RioError::NonMonotone { prev: last.t, next: s.t });
            }
        }
        if !(s.pressure > 0.0) {
            return Err(RioError::Domain(format!("pressure {} Pa must be positive", s.pressure)));
        }
        self.baro.push(s);
        Ok(())
    }

    /// Queues a scan; it is processed once IMU data reaches its timestamp.
    pub fn push_radar(&mut self, scan: RadarScan) -> Result<()> {
        let last = self.pending.back().map(|s| s.timestamp).or(self.window.newest().map(|n| n.t));
        if let Some(prev) = last {
            if !(scan.timestamp > prev) {
                return Err(RioError::NonMonotone {
                    prev,
                    next: scan.timestamp,
                });
            }
        }
        self.pending.push_back(scan);
        self.process_ready()
    }

    fn process_ready(&mut self) -> Result<()> {
        let Some(latest) = self.imu.last().map(|s| s.t) else { return Ok(()) };
        while self.pending.front().is_some_and(|s| s.timestamp <= latest) {
            let scan = self.pending.pop_front().expect("front checked");
            let start = Instant::now();
            if let Some(mut st) = self.process_scan(&scan)? {
                st.wall_time = start.elapsed().as_secs_f64();
                self.stats.push(st);
            }
        }
        Ok(())
    }

    /// Feeds a whole dataset in timestamp order (IMU before baro before
    /// radar at equal times).
    pub fn run_dataset(&mut self, ds: &SimDataset) -> Result<()> {
        let (mut i, mut b, mut r) = (0, 0, 0);
        loop {
            let ti = ds.imu.get(i).map(|s| s.t).unwrap_or(f64::INFINITY);
            let tb = ds.baro.get(b).map(|s| s.t).unwrap_or(f64::INFINITY);
            let tr = ds.radar.get(r).map(|s| s.timestamp).unwrap_or(f64::INFINITY);
            if ti.is_infinite() && tb.is_infinite() && tr.is_infinite() {
                break;
            }
            if ti <= tb && ti <= tr {
                self.push_imu(ds.imu[i])?;
                i += 1;
            } else if tb <= tr {
                self.push_baro(ds.baro[b])?;
                b += 1;
            } else {
                self.push_radar(ds.radar[r].clone())?;
                r += 1;
            }
        }
        Ok(())
    }

    fn filtered_points(&self, scan: &RadarScan) -> ScanPoints {
        let f = &self.cfg.filter;
        let (tan_az, sin_el) = (f.azimuth_fov.to_radians().tan(), f.elevation_fov.to_radians().sin());
        let mut out = ScanPoints {
            doppler: Vec::new(),
            registration: Vec::new(),
        };
        for p in &scan.points {
            if !(p.range >= f.min_range && p.range <= f.max_range && p.radial_speed.is_finite()) {
                continue;
            }
            let (Ok(mu), Ok(sigma_mu)) = (phases_to_bearing(p.phases), bearing_covariance(p.phases, &self.phase_noise)) else {
                continue;
            };
            let m = mu.mu;
            if m.x <= 0.0 || m.y.abs() > tan_az * m.x || m.z.abs() > sin_el {
                continue;
            }
            out.doppler.push(DopplerPoint {
                mu,
                radial_speed: p.radial_speed,
                sigma_mu,
            });
            out.registration.push(RegistrationPoint {
                mu,
                range: p.range,
                sigma_mu,
            });
        }
        out
    }

    fn baro_at(&self, t: f64) -> Option<f64> {
        let k = self.baro.partition_point(|s| s.t < t);
        if let (Some(a), Some(b)) = (k.checked_sub(1).and_then(|i| self.baro.get(i)), self.baro.get(k)) {
            let w = (t - a.t) / (b.t - a.t);
            return Some(a.pressure * (1.0 - w) + b.pressure * w);
        }
        // fall back to the closest sample if it is recent enough
        let near = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|i| self.baro.get(i))
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))?;
        ((near.t - t).abs() <= 0.1).then_some(near.pressure)
    }

    fn avg_rate_at(&self, t: f64) -> Vector3<f64> {
        interpolate_imu(&self.imu, t)
            .map(|s| s.gyro)
            .unwrap_or_else(|| self.imu.last().map(|s| s.gyro).unwrap_or_default())
    }

    fn process_scan(&mut self, scan: &RadarScan) -> Result<Option<ScanStats>> {
        let t = scan.timestamp;
        let pts = self.filtered_points(scan);
        let id = if self.initialized {
            let prev = *self.window.newest().expect("initialized window has a node");
            let seg = imu_segment(&self.imu, prev.t, t)
                .ok_or_else(|| RioError::Domain(format!("no IMU coverage between {} and {t}", prev.t)))?;
            let pim = PreintegratedImu::new(&seg, prev.state.ba, prev.state.bg, self.cfg.imu)?;
            let guess = pim.predict(&prev.state);
            let id = self.window.add_node(t, guess)?;
            let walk = BiasWalk {
                accel: self.cfg.imu.accel_bias_random_walk,
                gyro: self.cfg.imu.gyro_bias_random_walk,
                baro: self.cfg.baro_bias_walk,
            };
            self.window.add_factor(Box::new(ImuEdge::new(
                prev.id,
                id,
                ImuFactor { pim, walk },
                self.cfg.repreintegrate_threshold,
            )));
            id
        } else {
            let Some(first) = self.imu.first() else { return Ok(None) };
            if t < first.t + self.cfg.init.duration {
                log::debug!("scan at {t} precedes initialization");
                return Ok(None);
            }
            let (mut state, sig) = initialize_at_rest(&self.imu, &self.cfg.init)?;
            if self.cfg.baro_on {
                match self.baro_at(t) {
                    Some(p) => state.bb = altitude_from_pressure(p),
                    None => log::warn!("no barometer sample at initialization"),
                }
            }
            let id = self.window.add_node(t, state)?;
            self.window
                .add_factor(Box::new(MarginalPrior::diagonal(Key::Nav(id), KeyValue::Nav(state), &sig)));
            if self.cfg.estimate_extrinsics {
                let (r, l) = (self.cfg.init.extrinsic_rotation_sigma, self.cfg.init.lever_arm_sigma);
                let ext = self.window.values.ext;
                self.window
                    .add_factor(Box::new(MarginalPrior::diagonal(Key::Ext, KeyValue::Ext(ext), &[r, r, r, l, l, l])));
            }
            self.initialized = true;
            id
        };

        let avg_rate = self.avg_rate_at(t);
        let dnoise = self.doppler_noise();
        let valid = pts.doppler.len();
        if pts.doppler.is_empty() {
            log::info!("scan at {t} has no valid points; relying on the IMU");
        } else {
            self.window.add_factor(Box::new(DopplerScanFactor::new(
                id,
                pts.doppler.clone(),
                avg_rate,
                dnoise,
                self.cfg.doppler_loss,
            )));
        }
        if self.cfg.baro_on {
            if let Some(p) = self.baro_at(t) {
                self.window.add_factor(Box::new(BaroFactor {
                    node: id,
                    pressure: p,
                    sigma: self.cfg.baro_sigma,
                    loss: self.cfg.baro_loss,
                }));
            }
        }
        let mut reg_index = None;
        if self.cfg.registration_on && !self.map.is_empty() && !pts.registration.is_empty() {
            reg_index = Some(self.window.factors.len());
            self.window.add_factor(Box::new(RegistrationFactor::new(
                id,
                pts.registration.clone(),
                self.noise.range,
                self.cfg.registration_loss,
                self.cfg.map.radius,
                self.cfg.registration_cov_floor,
            )));
        }

        let ctx = Context { map: Some(&self.map) };
        let report = self.window.optimize(&ctx, &self.cfg.solver)?;
        let associated = reg_index
            .and_then(|k| self.window.factors[k].as_any().downcast_ref::<RegistrationFactor>())
            .map_or(0, |f| f.associated());
        self.window.freeze_all();

        let node = *self.window.newest().expect("node just added");
        let ext = self.window.values.ext;
        let stat = select_static_points(&pts.doppler, &node.state, &ext, &avg_rate, &dnoise, self.cfg.kappa_static);
        if self.cfg.registration_on {
            let world: Vec<Vector3<f64>> = stat
                .iter()
                .map(|&k| node.state.rot * (ext.rot * pts.registration[k].target() + ext.lever) + node.state.p)
                .collect();
            self.map.insert_scan(&world)?;
        }
        while self
            .window
            .oldest()
            .is_some_and(|o| node.t - o.t > self.cfg.lag + 1e-9)
        {
            self.window.marginalize_oldest()?;
        }
        if !node.state.is_finite() {
            return Err(RioError::Domain(format!("estimate diverged at t={t}")));
        }
        self.low_rate_poses.push(PoseRecord::from_state(t, &node.state));
        let first = interpolate_imu(&self.imu, t).expect("IMU covers the scan time");
        self.high_rate = Some((t, node.state, first));
        self.trim_buffers();
        Ok(Some(ScanStats {
            t,
            wall_time: 0.0,
            points: scan.points.len(),
            valid_points: valid,
            static_points: stat.len(),
            associated_points: associated,
            report,
        }))
    }

    /// Dead-reckons from the integrator state to the newest IMU sample and
    /// records the result.
    fn advance_high_rate(&mut self) {
        let Some(latest) = self.imu.last().copied() else { return };
        let Some((t0, state, first)) = self.high_rate else { return };
        if latest.t <= t0 {
            return;
        }
        let k = self.imu.partition_point(|s| s.t <= t0);
        if let Some(&(t, s)) = propagate(&state, t0, &first, &self.imu[k..]).last() {
            self.high_rate = Some((t, s, latest));
            self.high_rate_poses.push(PoseRecord::from_state(t, &s));
        }
    }

    /// State of the high-rate integrator, or the newest node when no IMU
    /// has arrived since.
    pub fn current(&self) -> Option<(f64, NavState)> {
        self.high_rate.map(|(t, s, _)| (t, s))
    }

    fn trim_buffers(&mut self) {
        let Some(oldest) = self.window.newest().map(|n| n.t) else { return };
        let keep = |t: f64| t >= oldest - 1.0;
        let k = self.imu.partition_point(|s| !keep(s.t)).saturating_sub(1);
        self.imu.drain(..k);
        let k = self.baro.partition_point(|s| !keep(s.t)).saturating_sub(1);
        self.baro.drain(..k);
    }
}
