use nalgebra::{DVector, Matrix3, Vector3};

use crate::geometry::{exp_so3, log_so3};

/// Tangent dimension of a [`NavState`]:
/// `[δθ, δp, δv, δb_a, δb_g, δb_b]`.
pub const NAV_DIM: usize = 16;
/// Tangent dimension of [`Extrinsics`]: `[δψ, δl]`.
pub const EXT_DIM: usize = 6;

pub const TH: usize = 0;
pub const P: usize = 3;
pub const V: usize = 6;
pub const BA: usize = 9;
pub const BG: usize = 12;
pub const BB: usize = 15;

/// Body attitude (body to inertial), position, velocity and sensor biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub rot: Matrix3<f64>,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub ba: Vector3<f64>,
    pub bg: Vector3<f64>,
    pub bb: f64,
}

impl Default for NavState {
    fn default() -> Self {
        Self {
            rot: Matrix3::identity(),
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            ba: Vector3::zeros(),
            bg: Vector3::zeros(),
            bb: 0.0,
        }
    }
}

impl NavState {
    /// Right-multiplicative on attitude, additive elsewhere.
    pub fn retract(&self, d: &[f64]) -> Self {
        let v3 = |o: usize| Vector3::new(d[o], d[o + 1], d[o + 2]);
        Self {
            rot: self.rot * exp_so3(&v3(TH)),
            p: self.p + v3(P),
            v: self.v + v3(V),
            ba: self.ba + v3(BA),
            bg: self.bg + v3(BG),
            bb: self.bb + d[BB],
        }
    }

    /// Tangent vector `d` with `lin.retract(d) == self`.
    pub fn local(&self, lin: &NavState) -> DVector<f64> {
        let mut d = DVector::zeros(NAV_DIM);
        d.fixed_rows_mut::<3>(TH).copy_from(&log_so3(&(lin.rot.transpose() * self.rot)));
        d.fixed_rows_mut::<3>(P).copy_from(&(self.p - lin.p));
        d.fixed_rows_mut::<3>(V).copy_from(&(self.v - lin.v));
        d.fixed_rows_mut::<3>(BA).copy_from(&(self.ba - lin.ba));
        d.fixed_rows_mut::<3>(BG).copy_from(&(self.bg - lin.bg));
        d[BB] = self.bb - lin.bb;
        d
    }

    pub fn is_finite(&self) -> bool {
        self.rot.iter().chain(self.p.iter()).chain(self.v.iter()).all(|x| x.is_finite())
            && self.ba.iter().chain(self.bg.iter()).all(|x| x.is_finite())
            && self.bb.is_finite()
    }
}

/// Radar-to-body rotation and radar origin in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rot: Matrix3<f64>,
    pub lever: Vector3<f64>,
}

impl Extrinsics {
    pub fn retract(&self, d: &[f64]) -> Self {
        Self {
            rot: self.rot * exp_so3(&Vector3::new(d[0], d[1], d[2])),
            lever: self.lever + Vector3::new(d[3], d[4], d[5]),
        }
    }

    pub fn local(&self, lin: &Extrinsics) -> DVector<f64> {
        let mut d = DVector::zeros(EXT_DIM);
        d.fixed_rows_mut::<3>(0).copy_from(&log_so3(&(lin.rot.transpose() * self.rot)));
        d.fixed_rows_mut::<3>(3).copy_from(&(self.lever - lin.lever));
        d
    }
}
