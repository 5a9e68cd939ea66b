//! Checks shared by the estimator tests and the acceptance suite. Each
//! returns the worst deviation it saw so callers choose how to report it.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rio_core::estimator::factors::{baro_residual, doppler_residual, registration_residual};
use rio_core::estimator::solver::window_covariance;
use rio_core::estimator::{
    BiasWalk, Context, Extrinsics, ImuFactor, Key, KeyValue, LinearFactor, LmConfig, MarginalPrior, NavState,
    PreintegratedImu, SlidingWindow, EXT_DIM, NAV_DIM,
};
use rio_core::geometry::exp_so3;
use rio_core::noise::bearing_jacobian;
use rio_core::radar::{phases_to_bearing, AoaPhases};
use rio_core::sim::{ImuNoise, ImuSample};

pub const H: f64 = 1e-7;
pub const TRIALS: usize = 100;

fn v3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn nav(rng: &mut ChaCha8Rng) -> NavState {
    NavState {
        rot: exp_so3(&v3(rng, 2.0)),
        p: v3(rng, 10.0),
        v: v3(rng, 5.0),
        ba: v3(rng, 0.1),
        bg: v3(rng, 0.02),
        bb: rng.random_range(-5.0..5.0),
    }
}

fn ext(rng: &mut ChaCha8Rng) -> Extrinsics {
    Extrinsics {
        rot: exp_so3(&v3(rng, 0.5)),
        lever: v3(rng, 0.3),
    }
}

/// Central differences of `f` along the unit directions of a `dim`-dimensional
/// tangent space.
fn fd(dim: usize, f: impl Fn(&[f64]) -> DVector<f64>) -> DMatrix<f64> {
    let rows = f(&vec![0.0; dim]).len();
    let mut j = DMatrix::zeros(rows, dim);
    for k in 0..dim {
        let mut d = vec![0.0; dim];
        d[k] = H;
        let plus = f(&d);
        d[k] = -H;
        let minus = f(&d);
        j.set_column(k, &((plus - minus) / (2.0 * H)));
    }
    j
}

fn rel_err(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(1.0)
}

fn imu_factor(rng: &mut ChaCha8Rng, bias_acc: Vector3<f64>, bias_gyro: Vector3<f64>) -> ImuFactor {
    let n = rng.random_range(5..40);
    let samples: Vec<ImuSample> = (0..=n)
        .map(|k| ImuSample {
            t: k as f64 * 0.005,
            gyro: v3(rng, 1.5),
            accel: v3(rng, 3.0) + Vector3::new(0.0, 0.0, 9.81),
        })
        .collect();
    ImuFactor {
        pim: PreintegratedImu::new(&samples, bias_acc, bias_gyro, ImuNoise::default()).unwrap(),
        walk: BiasWalk {
            accel: 1e-4,
            gyro: 1e-5,
            baro: 0.01,
        },
    }
}

pub fn imu_jacobian_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let si = nav(&mut rng);
        let sj = nav(&mut rng);
        // linearization bias close to, but not at, the evaluation point
        let (dba, dbg) = (v3(&mut rng, 0.01), v3(&mut rng, 0.003));
        let f = imu_factor(&mut rng, si.ba + dba, si.bg + dbg);
        let (_, ji, jj) = f.linearize(&si, &sj);
        let num_i = fd(NAV_DIM, |d| DVector::from_column_slice(f.residual(&si.retract(d), &sj).as_slice()));
        let num_j = fd(NAV_DIM, |d| DVector::from_column_slice(f.residual(&si, &sj.retract(d)).as_slice()));
        worst = worst.max(rel_err(&ji, &num_i)).max(rel_err(&jj, &num_j));
    }
    worst
}

pub fn doppler_jacobian_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let s = nav(&mut rng);
        let e = ext(&mut rng);
        let w = AoaPhases::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5));
        let Ok(mu) = phases_to_bearing(w) else { continue };
        let rate = v3(&mut rng, 1.0);
        let vr = rng.random_range(-4.0..4.0);
        let (_, jn, je) = doppler_residual(&mu.mu, vr, &s, &e, &rate);
        let num_n = fd(NAV_DIM, |d| DVector::from_element(1, doppler_residual(&mu.mu, vr, &s.retract(d), &e, &rate).0));
        let num_e = fd(EXT_DIM, |d| DVector::from_element(1, doppler_residual(&mu.mu, vr, &s, &e.retract(d), &rate).0));
        worst = worst.max(rel_err(&jn, &num_n)).max(rel_err(&je, &num_e));
    }
    worst
}

pub fn registration_jacobian_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let s = nav(&mut rng);
        let e = ext(&mut rng);
        let t = v3(&mut rng, 20.0);
        let q = v3(&mut rng, 30.0);
        let (_, jn, je) = registration_residual(&t, &q, &s, &e);
        let num_n = fd(NAV_DIM, |d| DVector::from_column_slice(registration_residual(&t, &q, &s.retract(d), &e).0.as_slice()));
        let num_e = fd(EXT_DIM, |d| DVector::from_column_slice(registration_residual(&t, &q, &s, &e.retract(d)).0.as_slice()));
        worst = worst.max(rel_err(&jn, &num_n)).max(rel_err(&je, &num_e));
    }
    worst
}

pub fn baro_jacobian_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..TRIALS {
        let s = nav(&mut rng);
        let p = rng.random_range(90_000.0..102_000.0);
        let mut analytic = DMatrix::zeros(1, NAV_DIM);
        analytic[(0, 5)] = 1.0;
        analytic[(0, 15)] = 1.0;
        let num = fd(NAV_DIM, |d| DVector::from_element(1, baro_residual(p, &s.retract(d)).unwrap()));
        worst = worst.max(rel_err(&analytic, &num));
    }
    worst
}

pub fn bearing_jacobian_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0;
    let mut worst: f64 = 0.0;
    while count < TRIALS {
        let w = AoaPhases::new(rng.random_range(-2.8..2.8), rng.random_range(-2.8..2.8));
        let Ok(j) = bearing_jacobian(w) else { continue };
        if w.boresight_term() < 0.01 {
            continue;
        }
        count += 1;
        let num = fd(2, |d| {
            DVector::from_column_slice(phases_to_bearing(AoaPhases::new(w.w_y + d[0], w.w_z + d[1])).unwrap().mu.as_slice())
        });
        let analytic = DMatrix::from_column_slice(3, 2, j.as_slice());
        worst = worst.max(rel_err(&analytic, &num));
    }
    worst
}

pub fn identity_ext() -> Extrinsics {
    Extrinsics {
        rot: nalgebra::Matrix3::identity(),
        lever: nalgebra::Vector3::zeros(),
    }
}

/// Random matrix acting only on the additive part of a navigation state.
fn additive(rows: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, NAV_DIM, |_, c| if c < 3 { 0.0 } else { rng.random_range(-1.0..1.0) })
}

pub fn random_state(rng: &mut ChaCha8Rng) -> NavState {
    let d: Vec<f64> = (0..NAV_DIM).map(|k| if k < 3 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    NavState::default().retract(&d)
}

pub fn prior() -> MarginalPrior {
    MarginalPrior::diagonal(Key::Nav(0), KeyValue::Nav(NavState::default()), &[0.5; NAV_DIM])
}

/// Unary and chain factors for node `k`, generated deterministically.
pub fn factors_for(k: u64, rng: &mut ChaCha8Rng) -> Vec<LinearFactor> {
    // attitude is pinned at identity, where the factor stays exactly linear
    let mut unary = DMatrix::zeros(7, NAV_DIM);
    unary.view_mut((0, 0), (3, 3)).fill_with_identity();
    unary.view_mut((3, 0), (4, NAV_DIM)).copy_from(&additive(4, rng));
    let mut b = DVector::zeros(7);
    b.rows_mut(3, 4).copy_from(&DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)));
    let mut out = vec![LinearFactor {
        keys: vec![Key::Nav(k)],
        a: vec![unary],
        b,
    }];
    if k > 0 {
        out.push(LinearFactor {
            keys: vec![Key::Nav(k - 1), Key::Nav(k)],
            a: vec![additive(NAV_DIM, rng), additive(NAV_DIM, rng)],
            b: DVector::from_fn(NAV_DIM, |_, _| rng.random_range(-1.0..1.0)),
        });
    }
    out
}

/// Runs a fixed-lag window and a batch window side by side on a linear
/// problem and returns the largest disagreement in retained states and in
/// their marginal covariances.
pub fn fixed_lag_vs_batch(seed: u64, lag: usize, nodes: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fixed = SlidingWindow::new(identity_ext(), false);
    let mut batch = SlidingWindow::new(identity_ext(), false);
    fixed.add_factor(Box::new(prior()));
    batch.add_factor(Box::new(prior()));
    let ctx = Context::default();
    let lm = LmConfig::default();
    let mut worst: f64 = 0.0;
    for k in 0..nodes {
        let guess = random_state(&mut rng);
        fixed.add_node(k as f64, guess).unwrap();
        batch.add_node(k as f64, guess).unwrap();
        for f in factors_for(k, &mut rng) {
            fixed.add_factor(Box::new(f.clone()));
            batch.add_factor(Box::new(f));
        }
        let rf = fixed.optimize(&ctx, &lm).unwrap();
        batch.optimize(&ctx, &lm).unwrap();
        for (before, after) in rf.accepted {
            assert!(after <= before);
        }
        let offset = batch.len() - fixed.len();
        for (i, n) in fixed.values.nodes.iter().enumerate() {
            let b = &batch.values.nodes[offset + i];
            assert_eq!(n.id, b.id);
            worst = worst.max(n.state.local(&b.state).amax());
        }
        let cf = window_covariance(&fixed.values, &fixed.factors).unwrap();
        let cb = window_covariance(&batch.values, &batch.factors).unwrap();
        let m = fixed.len() * NAV_DIM;
        let cb_tail = cb.view((offset * NAV_DIM, offset * NAV_DIM), (m, m));
        worst = worst.max((cf - cb_tail).amax());

        if fixed.len() > lag {
            let before: Vec<NavState> = fixed.values.nodes[1..].iter().map(|n| n.state).collect();
            assert!(!fixed.marginalize_oldest().unwrap());
            assert_eq!(fixed.len(), lag);
            // re-solving right after marginalization leaves the estimate unchanged
            fixed.optimize(&ctx, &lm).unwrap();
            for (a, n) in before.iter().zip(&fixed.values.nodes) {
                worst = worst.max(n.state.local(a).amax());
            }
        }
    }
    worst
}
