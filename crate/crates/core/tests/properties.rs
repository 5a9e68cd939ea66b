//! Property tests for the invariants the measurement models, losses,
//! manifold operations and metrics must satisfy for any input.

use nalgebra::Vector3;
use proptest::prelude::*;
use rio_core::analysis::{alias_region, contour, evaluate, GridSpec, StampedPose};
use rio_core::atmosphere::{altitude_from_pressure, pressure_from_altitude};
use rio_core::estimator::{NavState, RobustLoss, NAV_DIM};
use rio_core::geometry::{exp_so3, log_so3};
use rio_core::noise::{bearing_covariance, bearing_jacobian, PhaseNoise};
use rio_core::radar::{
    alias_wrap, angles_to_phases, derive_properties, phases_to_bearing, preset, quantize_doppler, quantize_phase,
    Bearing,
};

fn vec3(s: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-s..s).prop_map(Vector3::from)
}

proptest! {
    #[test]
    fn alias_wrap_lands_in_half_open_interval(v in -100.0..100.0f64, max in 0.5..20.0f64) {
        let (w, aliased) = alias_wrap(v, max);
        prop_assert!((-max..max).contains(&w));
        prop_assert_eq!(aliased, !(-max..max).contains(&v));
        if !aliased {
            prop_assert_eq!(w, v);
        }
        let k = ((w - v) / (2.0 * max)).round();
        prop_assert!((w - v - k * 2.0 * max).abs() < 1e-9);
    }

    #[test]
    fn quantization_is_idempotent_and_within_half_bin(v in -3.9..3.9f64, w in -3.0..3.0f64) {
        let cfg = preset("rc1").unwrap();
        let p = derive_properties(&cfg).unwrap();
        let q = quantize_doppler(v, &cfg, &p);
        prop_assert_eq!(quantize_doppler(q, &cfg, &p), q);
        prop_assert!((q - v).abs() <= 0.5 * p.bin_width_doppler + 1e-12);
        let qw = quantize_phase(w, &cfg, &p);
        prop_assert_eq!(quantize_phase(qw, &cfg, &p), qw);
        prop_assert!((qw - w).abs() <= 0.5 * p.bin_width_phase + 1e-12);
    }

    #[test]
    fn phases_recover_the_bearing(az in -1.5..1.5f64, el in -1.5..1.5f64) {
        let b = phases_to_bearing(angles_to_phases(az, el).unwrap()).unwrap();
        prop_assert!((b.mu - Bearing::from_angles(az, el).mu).norm() < 1e-9);
        prop_assert!((b.mu.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bearing_covariance_is_tangent_and_psd(az in -1.2..1.2f64, el in -1.2..1.2f64, s in 0.0..0.1f64) {
        let w = angles_to_phases(az, el).unwrap();
        let mu = phases_to_bearing(w).unwrap().mu;
        let j = bearing_jacobian(w).unwrap();
        prop_assert!((mu.transpose() * j).norm() < 1e-9 * (1.0 + j.norm()));
        let c = bearing_covariance(w, &PhaseNoise::isotropic(s)).unwrap().sigma_mu;
        prop_assert_eq!(c, c.transpose());
        let eig = c.symmetric_eigenvalues();
        prop_assert!(eig.min() >= -1e-12 * (1.0 + c.norm()));
    }

    #[test]
    fn robust_weights_are_bounded_and_monotone(a in 0.0..100.0f64, b in 0.0..100.0f64, k in 0.1..5.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for loss in [RobustLoss::None, RobustLoss::Huber { scale: k }, RobustLoss::Cauchy { scale: k }] {
            let (wl, wh) = (loss.weight(lo), loss.weight(hi));
            prop_assert!(wl > 0.0 && wl <= 1.0 && wh <= wl);
            prop_assert!(loss.rho(lo) >= 0.0 && loss.rho(hi) >= loss.rho(lo));
            prop_assert!(loss.rho(hi) <= hi + 1e-12);
        }
        prop_assert_eq!(RobustLoss::Cauchy { scale: k }.weight(0.0), 1.0);
    }

    #[test]
    fn so3_exp_log_round_trip(phi in vec3(1.8)) {
        prop_assert!((log_so3(&exp_so3(&phi)) - phi).norm() < 1e-9);
    }

    #[test]
    fn retraction_inverts_local(rot in vec3(3.0), p in vec3(50.0), d in prop::collection::vec(-0.5..0.5f64, NAV_DIM)) {
        let s = NavState { rot: exp_so3(&rot), p, ..NavState::default() };
        let back = s.retract(&d).local(&s);
        for k in 0..NAV_DIM {
            prop_assert!((back[k] - d[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn altitude_round_trip(h in -500.0..5000.0f64) {
        prop_assert!((altitude_from_pressure(pressure_from_altitude(h)) - h).abs() < 1e-9);
    }

    #[test]
    fn eval_of_identical_trajectories_is_zero(steps in prop::collection::vec((vec3(1.0), vec3(0.1)), 2..200)) {
        let mut pose = StampedPose { t: 0.0, rot: nalgebra::Matrix3::identity(), p: Vector3::zeros() };
        let mut traj = vec![pose];
        for (dp, dr) in steps {
            pose = StampedPose { t: pose.t + 0.05, rot: pose.rot * exp_so3(&dr), p: pose.p + pose.rot * dp };
            traj.push(pose);
        }
        let m = evaluate(&traj, &traj, 10.0, 0.01).unwrap();
        prop_assert_eq!(m.ape_translation.max, 0.0);
        prop_assert_eq!(m.ape_rotation.max, 0.0);
        prop_assert!(m.segments == 0 || (m.rpe_translation.max == 0.0 && m.rpe_rotation.max == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn grids_are_symmetric_under_azimuth_flip(speed in 0.0..12.0f64, vz in -3.0..3.0f64, name in prop::sample::select(vec!["rc1", "rc2", "rc3", "rc4"])) {
        let cfg = preset(name).unwrap();
        let v = Vector3::new(speed, 0.0, vz);
        let spec = GridSpec::new(60.0, 4.0).unwrap();
        for (g, _) in [contour(&cfg, &v, &spec).map(|(g, _)| (g, ())).unwrap(), alias_region(&cfg, &v, &spec).map(|(g, _)| (g, ())).unwrap()] {
            let n = g.azimuth.len();
            for r in 0..n {
                for c in 0..n {
                    let (a, b) = (g.get(r, c), g.get(r, n - 1 - c));
                    prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }
}
