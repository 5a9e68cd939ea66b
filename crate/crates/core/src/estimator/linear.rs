//! Quadratic factors over vector-valued variables, envelope (skyline)
//! Cholesky for the block-banded normal equations of a smoothing window, and
//! Schur-complement marginalization.

use nalgebra::{DMatrix, DVector};

/// `c + gᵀδ + ½ δᵀHδ` over the concatenated tangent vectors of `vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianFactor {
    pub vars: Vec<usize>,
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
}

impl HessianFactor {
    pub fn zeros(vars: Vec<usize>, dim: usize) -> Self {
        Self {
            vars,
            h: DMatrix::zeros(dim, dim),
            g: DVector::zeros(dim),
            c: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// Accumulates a whitened residual block `r` with Jacobian `j` (columns
    /// ordered like the factor's variables), reweighted by `weight` and
    /// costing `rho/2`.
    pub fn add_block(&mut self, j: &DMatrix<f64>, r: &DVector<f64>, weight: f64, rho: f64) {
        let jt = j.transpose();
        self.h += weight * &jt * j;
        self.g += weight * &jt * r;
        self.c += 0.5 * rho;
    }

    pub fn cost(&self, delta: &DVector<f64>) -> f64 {
        self.c + self.g.dot(delta) + 0.5 * delta.dot(&(&self.h * delta))
    }

    /// `H δ = -g` minimizer of a single factor.
    pub fn solve(&self) -> Option<DVector<f64>> {
        self.h.clone().cholesky().map(|c| -c.solve(&self.g))
    }
}

/// Offsets of each variable inside the stacked tangent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub offsets: Vec<usize>,
    pub dims: Vec<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for d in &dims {
            offsets.push(total);
            total += d;
        }
        Self { offsets, dims, total }
    }
}

/// Assembled normal equations plus the envelope profile of `h`: entry
/// `(i, j)` with `j < first[i]` is structurally zero.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
    pub first: Vec<usize>,
}

pub fn assemble<'a>(layout: &Layout, factors: impl IntoIterator<Item = &'a HessianFactor>) -> NormalEquations {
    let n = layout.total;
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let mut c = 0.0;
    let mut first: Vec<usize> = (0..n).collect();
    for f in factors {
        let lo = f.vars.iter().map(|&v| layout.offsets[v]).min().unwrap_or(0);
        let mut a = 0;
        for &vi in &f.vars {
            let (oi, di) = (layout.offsets[vi], layout.dims[vi]);
            for r in oi..oi + di {
                first[r] = first[r].min(lo);
            }
            let mut gv = g.rows_mut(oi, di);
            gv += f.g.rows(a, di);
            let mut b = 0;
            for &vj in &f.vars {
                let (oj, dj) = (layout.offsets[vj], layout.dims[vj]);
                let mut blk = h.view_mut((oi, oj), (di, dj));
                blk += f.h.view((a, b), (di, dj));
                b += dj;
            }
            a += di;
        }
        c += f.c;
    }
    NormalEquations { h, g, c, first }
}

/// Lower Cholesky factor stored row-wise over the envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    rows: Vec<Vec<f64>>,
    first: Vec<usize>,
}

/// Index of the first pivot that is not safely positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

impl EnvelopeCholesky {
    /// Factors `h + damping·I`. A pivot below `1e-10` of its own diagonal
    /// counts as a failure.
    pub fn new(h: &DMatrix<f64>, first: &[usize], damping: f64) -> Result<Self, NotPositiveDefinite> {
        let n = h.nrows();
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let fi = first[i];
            let mut row = vec![0.0; i - fi + 1];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = h[(i, j)];
                if i == j {
                    s += damping;
                }
                if k0 < j {
                    let a = &row[k0 - fi..j - fi];
                    let b = if j == i { a } else { &rows[j][k0 - fj..j - fj] };
                    s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                }
                if j < i {
                    row[j - fi] = s / rows[j][j - fj];
                } else {
                    let diag = h[(i, i)] + damping;
                    if !(s > 1e-10 * diag.abs()) || !(s > 0.0) {
                        return Err(NotPositiveDefinite { pivot: i });
                    }
                    row[i - fi] = s.sqrt();
                }
            }
            rows.push(row);
        }
        Ok(Self {
            rows,
            first: first.to_vec(),
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = b.len();
        let mut y = b.clone();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.rows[i];
            let s: f64 = (fi..i).map(|k| row[k - fi] * y[k]).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            y[i] /= row[i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        y
    }
}

/// Eliminates variable `marg` from the factors that touch it, returning a
/// single factor on the remaining variables (sorted) and whether the
/// eliminated block needed regularization.
pub fn marginalize(factors: &[&HessianFactor], dims: &dyn Fn(usize) -> usize, marg: usize) -> (HessianFactor, bool) {
    let mut others: Vec<usize> = factors
        .iter()
        .flat_map(|f| f.vars.iter().copied())
        .filter(|&v| v != marg)
        .collect();
    others.sort_unstable();
    others.dedup();
    let mut vars = vec![marg];
    vars.extend(&others);
    let layout = Layout::new(vars.iter().map(|&v| dims(v)).collect());
    let remap = |v: usize| vars.iter().position(|&x| x == v).expect("variable present");
    let local: Vec<HessianFactor> = factors
        .iter()
        .map(|f| HessianFactor {
            vars: f.vars.iter().map(|&v| remap(v)).collect(),
            ..(*f).clone()
        })
        .collect();
    let ne = assemble(&layout, local.iter());
    let dm = layout.dims[0];
    let n = layout.total;
    let hmm = ne.h.view((0, 0), (dm, dm)).into_owned();
    let hmo = ne.h.view((0, dm), (dm, n - dm)).into_owned();
    let hoo = ne.h.view((dm, dm), (n - dm, n - dm)).into_owned();
    let gm = ne.g.rows(0, dm).into_owned();
    let go = ne.g.rows(dm, n - dm).into_owned();

    let mut regularized = false;
    let chol = match hmm.clone().cholesky() {
        Some(c) => c,
        None => {
            regularized = true;
            let eps = 1e-9 * hmm.trace().abs().max(1e-12) / dm as f64;
            log::warn!("marginalized block is not positive definite; adding {eps:e} to its diagonal");
            (hmm + DMatrix::identity(dm, dm) * eps)
                .cholesky()
                .expect("regularized block is positive definite")
        }
    };
    let a = chol.solve(&hmo);
    let b = chol.solve(&gm);
    let mut h = hoo - hmo.transpose() * &a;
    h = 0.5 * (&h + h.transpose());
    let g = go - hmo.transpose() * &b;
    let c = ne.c - 0.5 * gm.dot(&b);
    (HessianFactor { vars: others, h, g, c }, regularized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn envelope_matches_dense_solve_on_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layout = Layout::new(vec![3, 3, 3, 3, 2]);
        let mut fs = Vec::new();
        for k in 0..3 {
            fs.push(HessianFactor {
                vars: vec![k, k + 1],
                h: random_spd(6, &mut rng),
                g: DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)),
                c: 0.0,
            });
        }
        fs.push(HessianFactor {
            vars: vec![3, 4],
            h: random_spd(5, &mut rng),
            g: DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)),
            c: 0.0,
        });
        fs.push(HessianFactor {
            vars: vec![0, 4],
            h: random_spd(5, &mut rng),
            g: DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)),
            c: 0.0,
        });
        let ne = assemble(&layout, fs.iter());
        assert_eq!(&ne.first[0..6], &[0, 0, 0, 0, 0, 0]);
        assert_eq!(ne.first[9], 6);
        assert_eq!(ne.first[12], 0);
        let x = EnvelopeCholesky::new(&ne.h, &ne.first, 0.0).unwrap().solve(&ne.g);
        let dense = ne.h.clone().cholesky().unwrap().solve(&ne.g);
        assert!((x - dense).norm() < 1e-10);
    }

    #[test]
    fn singular_system_is_reported() {
        let layout = Layout::new(vec![2]);
        let f = HessianFactor {
            vars: vec![0],
            h: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            g: DVector::zeros(2),
            c: 0.0,
        };
        let ne = assemble(&layout, [&f]);
        assert_eq!(EnvelopeCholesky::new(&ne.h, &ne.first, 0.0).unwrap_err().pivot, 1);
        assert!(EnvelopeCholesky::new(&ne.h, &ne.first, 1e-3).is_ok());
    }

    #[test]
    fn marginal_keeps_minimizer_and_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f1 = HessianFactor {
            vars: vec![0, 1],
            h: random_spd(4, &mut rng),
            g: DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
            c: 2.0,
        };
        let f2 = HessianFactor {
            vars: vec![1],
            h: random_spd(2, &mut rng),
            g: DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
            c: 1.0,
        };
        let layout = Layout::new(vec![2, 2]);
        let ne = assemble(&layout, [&f1, &f2]);
        let full = -ne.h.clone().cholesky().unwrap().solve(&ne.g);
        let full_cost = ne.c + ne.g.dot(&full) + 0.5 * full.dot(&(&ne.h * &full));
        let (m, reg) = marginalize(&[&f1, &f2], &|_| 2, 0);
        assert!(!reg);
        assert_eq!(m.vars, vec![1]);
        let x1 = m.solve().unwrap();
        assert!((x1 - full.rows(2, 2)).norm() < 1e-12);
        assert!((m.cost(&m.solve().unwrap()) - full_cost).abs() < 1e-12);
    }
}
