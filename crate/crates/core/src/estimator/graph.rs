//! Variables, the factor interface and the factors that only depend on
//! state algebra: the marginal prior, linear test factors and the IMU factor.

use nalgebra::{DMatrix, DVector, Matrix3};

use super::linear::{HessianFactor, Layout};
use super::loss::RobustLoss;
use super::preintegration::ImuFactor;
use super::state::{Extrinsics, NavState, EXT_DIM, NAV_DIM, TH};
use crate::error::{Result, RioError};
use crate::geometry::right_jacobian_inv;
use crate::mapping::PointMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Nav(u64),
    Ext,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: u64,
    pub t: f64,
    pub state: NavState,
}

/// Current estimate of every variable in the window. Nodes are ordered by
/// id (and time); the extrinsics are a variable only when `ext_free`.
#[derive(Debug, Clone, PartialEq)]
pub struct Values {
    pub nodes: Vec<Node>,
    pub ext: Extrinsics,
    pub ext_free: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyValue {
    Nav(NavState),
    Ext(Extrinsics),
}

impl Values {
    pub fn position(&self, key: Key) -> Option<usize> {
        match key {
            Key::Nav(id) => self.nodes.binary_search_by_key(&id, |n| n.id).ok(),
            Key::Ext => self.ext_free.then_some(self.nodes.len()),
        }
    }

    pub fn dim(key: Key) -> usize {
        match key {
            Key::Nav(_) => NAV_DIM,
            Key::Ext => EXT_DIM,
        }
    }

    pub fn key_at(&self, pos: usize) -> Key {
        if pos < self.nodes.len() {
            Key::Nav(self.nodes[pos].id)
        } else {
            Key::Ext
        }
    }

    pub fn layout(&self) -> Layout {
        let mut dims = vec![NAV_DIM; self.nodes.len()];
        if self.ext_free {
            dims.push(EXT_DIM);
        }
        Layout::new(dims)
    }

    pub fn nav(&self, id: u64) -> Result<&NavState> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .map(|i| &self.nodes[i].state)
            .map_err(|_| RioError::Domain(format!("node {id} is not in the window")))
    }

    pub fn get(&self, key: Key) -> Result<KeyValue> {
        Ok(match key {
            Key::Nav(id) => KeyValue::Nav(*self.nav(id)?),
            Key::Ext => KeyValue::Ext(self.ext),
        })
    }

    pub fn retract(&self, delta: &DVector<f64>) -> Values {
        let layout = self.layout();
        let mut out = self.clone();
        for (k, n) in out.nodes.iter_mut().enumerate() {
            let o = layout.offsets[k];
            n.state = n.state.retract(delta.rows(o, NAV_DIM).as_slice());
        }
        if self.ext_free {
            let o = layout.offsets[self.nodes.len()];
            out.ext = out.ext.retract(delta.rows(o, EXT_DIM).as_slice());
        }
        out
    }
}

impl KeyValue {
    fn local(&self, lin: &KeyValue) -> DVector<f64> {
        match (self, lin) {
            (KeyValue::Nav(x), KeyValue::Nav(l)) => x.local(l),
            (KeyValue::Ext(x), KeyValue::Ext(l)) => x.local(l),
            _ => unreachable!("key kinds always match"),
        }
    }
}

/// Shared inputs that some factors consult when their noise model or data
/// association is refreshed.
#[derive(Clone, Copy, Default)]
pub struct Context<'a> {
    pub map: Option<&'a PointMap>,
}

/// A cost term `½ Σ ρ(‖r‖²)` over a few variables.
pub trait Factor: Send + Sync {
    fn keys(&self) -> Vec<Key>;

    /// Re-evaluates state-dependent noise and associations at `vals`; they
    /// stay frozen until the next call.
    fn refresh(&mut self, _vals: &Values, _ctx: &Context) -> Result<()> {
        Ok(())
    }

    fn cost(&self, vals: &Values) -> Result<f64>;

    /// Gauss-Newton quadratic at `vals`, with `vars` holding window positions.
    fn linearize(&self, vals: &Values) -> Result<HessianFactor>;

    /// Called once the factor's node is no longer the newest one.
    fn freeze(&mut self) {}

    fn as_any(&self) -> &dyn std::any::Any;
}

/// Accumulates whitened residual blocks into a quadratic over the free keys
/// of a factor.
pub struct BlockBuilder {
    cols: Vec<Option<usize>>,
    pub factor: HessianFactor,
}

impl BlockBuilder {
    pub fn new(vals: &Values, keys: &[Key]) -> Result<Self> {
        let mut vars = Vec::new();
        let mut cols = Vec::new();
        let mut dim = 0;
        for &k in keys {
            match vals.position(k) {
                Some(p) => {
                    vars.push(p);
                    cols.push(Some(dim));
                    dim += Values::dim(k);
                }
                None if k == Key::Ext => cols.push(None),
                None => return Err(RioError::Domain(format!("{k:?} is not in the window"))),
            }
        }
        Ok(Self {
            cols,
            factor: HessianFactor::zeros(vars, dim),
        })
    }

    /// `jacs[k]` is the Jacobian with respect to the factor's `k`-th key.
    pub fn add(&mut self, r: &DVector<f64>, jacs: &[&DMatrix<f64>], loss: RobustLoss) {
        let mut j = DMatrix::zeros(r.len(), self.factor.dim());
        for (k, jk) in jacs.iter().enumerate() {
            if let Some(c) = self.cols[k] {
                j.view_mut((0, c), (r.len(), jk.ncols())).copy_from(jk);
            }
        }
        let s = r.norm_squared();
        self.factor.add_block(&j, r, loss.weight(s), loss.rho(s));
    }
}

/// Quadratic in `x ⊟ lin`: either the initial prior or the result of
/// marginalizing states out of the window.
#[derive(Debug, Clone)]
pub struct MarginalPrior {
    pub keys: Vec<Key>,
    pub lin: Vec<KeyValue>,
    /// `vars` index into `keys`.
    pub quad: HessianFactor,
}

impl MarginalPrior {
    /// Independent Gaussian prior on a single variable.
    pub fn diagonal(key: Key, mean: KeyValue, sigmas: &[f64]) -> Self {
        let h = DMatrix::from_diagonal(&DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| 1.0 / (s * s))));
        Self {
            keys: vec![key],
            lin: vec![mean],
            quad: HessianFactor {
                vars: vec![0],
                g: DVector::zeros(sigmas.len()),
                h,
                c: 0.0,
            },
        }
    }

    fn delta(&self, vals: &Values) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.quad.dim();
        let mut d = DVector::zeros(n);
        let mut m = DMatrix::identity(n, n);
        let mut o = 0;
        for (k, lin) in self.keys.iter().zip(&self.lin) {
            let x = vals.get(*k)?;
            let dk = x.local(lin);
            let dim = dk.len();
            d.rows_mut(o, dim).copy_from(&dk);
            // rotation block is at the front of both tangent spaces
            let th = dk.fixed_rows::<3>(TH).into_owned();
            m.fixed_view_mut::<3, 3>(o, o).copy_from(&right_jacobian_inv(&th));
            o += dim;
        }
        Ok((d, m))
    }
}

impl Factor for MarginalPrior {
    fn keys(&self) -> Vec<Key> {
        self.keys.clone()
    }

    fn cost(&self, vals: &Values) -> Result<f64> {
        Ok(self.quad.cost(&self.delta(vals)?.0))
    }

    fn linearize(&self, vals: &Values) -> Result<HessianFactor> {
        let (d, m) = self.delta(vals)?;
        let grad = &self.quad.g + &self.quad.h * &d;
        let vars = self
            .keys
            .iter()
            .map(|k| vals.position(*k).ok_or_else(|| RioError::Domain(format!("{k:?} is not in the window"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(HessianFactor {
            vars,
            g: m.transpose() * grad,
            h: m.transpose() * &self.quad.h * &m,
            c: self.quad.cost(&d),
        })
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// `r = Σ A_k (x_k ⊟ identity) − b` with unit covariance. On the additive
/// components of a state this is exactly linear, which makes it useful for
/// checking the smoother against closed-form solutions.
#[derive(Debug, Clone)]
pub struct LinearFactor {
    pub keys: Vec<Key>,
    pub a: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
}

impl LinearFactor {
    fn parts(&self, vals: &Values) -> Result<(DVector<f64>, Vec<DMatrix<f64>>)> {
        let mut r = -self.b.clone();
        let mut jacs = Vec::new();
        for (k, a) in self.keys.iter().zip(&self.a) {
            let (d, th) = match vals.get(*k)? {
                KeyValue::Nav(x) => {
                    let d = x.local(&NavState::default());
                    let th = d.fixed_rows::<3>(TH).into_owned();
                    (d, th)
                }
                KeyValue::Ext(x) => {
                    let d = x.local(&Extrinsics {
                        rot: Matrix3::identity(),
                        lever: nalgebra::Vector3::zeros(),
                    });
                    let th = d.fixed_rows::<3>(0).into_owned();
                    (d, th)
                }
            };
            r += a * &d;
            let mut m = DMatrix::identity(d.len(), d.len());
            m.fixed_view_mut::<3, 3>(0, 0).copy_from(&right_jacobian_inv(&th));
            jacs.push(a * m);
        }
        Ok((r, jacs))
    }
}

impl Factor for LinearFactor {
    fn keys(&self) -> Vec<Key> {
        self.keys.clone()
    }

    fn cost(&self, vals: &Values) -> Result<f64> {
        Ok(0.5 * self.parts(vals)?.0.norm_squared())
    }

    fn linearize(&self, vals: &Values) -> Result<HessianFactor> {
        let (r, jacs) = self.parts(vals)?;
        let mut b = BlockBuilder::new(vals, &self.keys)?;
        let refs: Vec<&DMatrix<f64>> = jacs.iter().collect();
        b.add(&r, &refs, RobustLoss::None);
        Ok(b.factor)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// IMU factor between two window nodes, re-preintegrated when the bias
/// estimate of the first node drifts past `repreintegrate_threshold`.
#[derive(Debug, Clone)]
pub struct ImuEdge {
    pub from: u64,
    pub to: u64,
    pub factor: ImuFactor,
    pub repreintegrate_threshold: f64,
    sqrt_info: DMatrix<f64>,
}

impl ImuEdge {
    pub fn new(from: u64, to: u64, factor: ImuFactor, repreintegrate_threshold: f64) -> Self {
        let sqrt_info = Self::whitener(&factor);
        Self {
            from,
            to,
            factor,
            repreintegrate_threshold,
            sqrt_info,
        }
    }

    fn whitener(f: &ImuFactor) -> DMatrix<f64> {
        f.sqrt_covariance()
            .try_inverse()
            .expect("triangular factor with positive diagonal is invertible")
    }

    fn whitened(&self, vals: &Values) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let (si, sj) = (vals.nav(self.from)?, vals.nav(self.to)?);
        let (e, ji, jj) = self.factor.linearize(si, sj);
        let e = DVector::from_column_slice(e.as_slice());
        Ok((&self.sqrt_info * e, &self.sqrt_info * ji, &self.sqrt_info * jj))
    }
}

impl Factor for ImuEdge {
    fn keys(&self) -> Vec<Key> {
        vec![Key::Nav(self.from), Key::Nav(self.to)]
    }

    fn refresh(&mut self, vals: &Values, _ctx: &Context) -> Result<()> {
        let s = vals.nav(self.from)?;
        let pim = &self.factor.pim;
        let moved = (s.ba - pim.bias_acc).amax().max((s.bg - pim.bias_gyro).amax());
        if moved > self.repreintegrate_threshold {
            self.factor.pim.repreintegrate(s.ba, s.bg);
            self.sqrt_info = Self::whitener(&self.factor);
        }
        Ok(())
    }

    fn cost(&self, vals: &Values) -> Result<f64> {
        let (si, sj) = (vals.nav(self.from)?, vals.nav(self.to)?);
        let e = DVector::from_column_slice(self.factor.residual(si, sj).as_slice());
        Ok(0.5 * (&self.sqrt_info * e).norm_squared())
    }

    fn linearize(&self, vals: &Values) -> Result<HessianFactor> {
        let (r, ji, jj) = self.whitened(vals)?;
        let mut b = BlockBuilder::new(vals, &self.keys())?;
        b.add(&r, &[&ji, &jj], RobustLoss::None);
        Ok(b.factor)
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
