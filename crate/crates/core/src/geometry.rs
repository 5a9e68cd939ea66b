//! Small SO(3) toolkit: hat operator, exponential/logarithm maps and the
//! right Jacobian with its inverse. Rotations are plain `Matrix3` so that
//! perturbations can be applied without re-normalizing quaternions.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

const SMALL_ANGLE: f64 = 1e-8;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + a * k + b * k * k
}

pub fn log_so3(r: &Matrix3<f64>) -> Vector3<f64> {
    // Going through the quaternion keeps the map well conditioned near pi.
    let rot = Rotation3::from_matrix_unchecked(*r);
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let (w, v) = (q.w, q.imag());
    let (w, v) = if w < 0.0 { (-w, -v) } else { (w, v) };
    let n = v.norm();
    if n < SMALL_ANGLE {
        return 2.0 * v / w;
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}

/// Right Jacobian of SO(3): Exp(phi + d) ~= Exp(phi) Exp(Jr(phi) d).
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-5 {
        return Matrix3::identity() - 0.5 * k + k * k / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() - (1.0 - theta.cos()) / t2 * k + (theta - theta.sin()) / (t2 * theta) * k * k
}

pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-5 {
        return Matrix3::identity() + 0.5 * k + k * k / 12.0;
    }
    let t2 = theta * theta;
    let c = 1.0 / t2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + 0.5 * k + c * k * k
}

/// Project a nearly-orthonormal matrix back onto SO(3).
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let rot = Rotation3::from_matrix_eps(r, 1e-12, 20, Rotation3::identity());
    rot.into_inner()
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    exp_so3(&Vector3::new(a, 0.0, 0.0))
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    exp_so3(&Vector3::new(0.0, a, 0.0))
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    exp_so3(&Vector3::new(0.0, 0.0, a))
}

/// Z-Y-X Euler composition `Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Inverse of [`from_rpy`], returning `(roll, pitch, yaw)`.
pub fn to_rpy(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    (roll, pitch, yaw)
}

pub fn to_quaternion(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r))
}

pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    log_so3(r).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_log_round_trip() {
        for phi in [
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(1e-10, 0.0, 0.0),
            Vector3::new(0.0, 3.0, 0.1),
        ] {
            let back = log_so3(&exp_so3(&phi));
            assert_relative_eq!(back, phi, epsilon = 1e-9);
        }
    }

    #[test]
    fn right_jacobian_matches_finite_difference() {
        let phi = Vector3::new(0.4, -0.7, 0.2);
        let jr = right_jacobian(&phi);
        let h = 1e-6;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let lhs = log_so3(&(exp_so3(&phi).transpose() * exp_so3(&(phi + d))));
            let col = lhs / h;
            assert_relative_eq!(col, jr.column(k).into_owned(), epsilon = 1e-5);
        }
        assert_relative_eq!(right_jacobian_inv(&phi) * jr, Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn rpy_round_trip() {
        let r = from_rpy(0.1, -0.3, 2.0);
        let (a, b, c) = to_rpy(&r);
        assert_relative_eq!(a, 0.1, epsilon = 1e-12);
        assert_relative_eq!(b, -0.3, epsilon = 1e-12);
        assert_relative_eq!(c, 2.0, epsilon = 1e-12);
    }
}
