//! Analytic Jacobians against central finite differences over randomized
//! states.

mod common;

use common::*;

const TOL: f64 = 1e-5;

#[test]
fn imu_factor_jacobians() {
    let worst = imu_jacobian_error(11);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn doppler_jacobians() {
    let worst = doppler_jacobian_error(12);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn registration_jacobians() {
    let worst = registration_jacobian_error(13);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn baro_jacobian() {
    let worst = baro_jacobian_error(14);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn bearing_jacobian_matches_differences() {
    let worst = bearing_jacobian_error(15);
    assert!(worst <= TOL, "worst relative error {worst:e}");
}
