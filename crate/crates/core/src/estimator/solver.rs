use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::graph::{Context, Factor, Key, Values};
use super::linear::{assemble, marginalize, EnvelopeCholesky, HessianFactor, NormalEquations};
use super::state::{BA, BB, BG, P, TH, V};
use crate::error::{Result, RioError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Initial damping relative to the largest diagonal entry.
    pub initial_damping: f64,
    pub max_damping_steps: usize,
    /// Stop once the step's largest component falls below this.
    pub step_tolerance: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            initial_damping: 1e-6,
            max_damping_steps: 10,
            step_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizeReport {
    pub iterations: usize,
    /// Cost before and after every accepted step, both under the noise
    /// model frozen for that step.
    pub accepted: Vec<(f64, f64)>,
}

pub type FactorBox = Box<dyn Factor>;

fn linearize_all(vals: &Values, factors: &[FactorBox]) -> Result<NormalEquations> {
    let quads = factors.iter().map(|f| f.linearize(vals)).collect::<Result<Vec<_>>>()?;
    Ok(assemble(&vals.layout(), quads.iter()))
}

fn total_cost(vals: &Values, factors: &[FactorBox]) -> Result<f64> {
    factors.iter().map(|f| f.cost(vals)).sum()
}

/// Levenberg-Marquardt over the window. Each iteration refreshes the
/// state-dependent noise models, then increases additive diagonal damping
/// until the cost under that frozen model does not increase.
pub fn optimize(vals: &mut Values, factors: &mut [FactorBox], ctx: &Context, cfg: &LmConfig) -> Result<OptimizeReport> {
    let mut report = OptimizeReport::default();
    let mut lambda: Option<f64> = None;
    for it in 0..cfg.max_iterations {
        for f in factors.iter_mut() {
            f.refresh(vals, ctx)?;
        }
        let ne = linearize_all(vals, factors)?;
        if it == 0 && EnvelopeCholesky::new(&ne.h, &ne.first, 0.0).is_err() {
            return Err(RioError::RankDeficient {
                directions: weak_directions(&ne.h, vals),
            });
        }
        let cost0 = total_cost(vals, factors)?;
        let max_diag = ne.h.diagonal().amax().max(1e-12);
        let mut lam = lambda.unwrap_or(cfg.initial_damping * max_diag);
        let mut accepted = None;
        // The undamped step is tried first; damping only grows after a rejection.
        for trial in 0..=cfg.max_damping_steps {
            let damping = if trial == 0 { 0.0 } else { lam };
            if let Ok(chol) = EnvelopeCholesky::new(&ne.h, &ne.first, damping) {
                let step = -chol.solve(&ne.g);
                let cand = vals.retract(&step);
                let cost1 = total_cost(&cand, factors)?;
                if cost1.is_finite() && cost1 <= cost0 {
                    accepted = Some((cand, cost1, step.amax(), trial));
                    break;
                }
            }
            if trial > 0 {
                lam *= 10.0;
            }
        }
        report.iterations = it + 1;
        let Some((cand, cost1, step_max, trial)) = accepted else { break };
        *vals = cand;
        report.accepted.push((cost0, cost1));
        lambda = Some(if trial > 0 { lam / 10.0 } else { lam });
        if step_max < cfg.step_tolerance {
            break;
        }
    }
    Ok(report)
}

/// Names the state directions spanned by near-null eigenvectors of `h`.
pub fn weak_directions(h: &DMatrix<f64>, vals: &Values) -> Vec<String> {
    let eig = h.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(1e-300);
    let layout = vals.layout();
    let mut names: Vec<String> = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-10 * top {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let (idx, _) = v.iamax_full();
        let pos = layout.offsets.iter().rposition(|&o| o <= idx).unwrap_or(0);
        let local = idx - layout.offsets[pos];
        let name = match vals.key_at(pos) {
            Key::Ext if local < 3 => "extrinsic rotation".to_string(),
            Key::Ext => "lever arm".to_string(),
            Key::Nav(_) => {
                let node = &vals.nodes[pos].state;
                let o = layout.offsets[pos];
                match local {
                    l if l < P => {
                        // body-frame rotation direction expressed in the world frame
                        let d = node.rot * Vector3::new(v[o + TH], v[o + TH + 1], v[o + TH + 2]);
                        if d.z.abs() > d.xy().norm() {
                            "yaw".into()
                        } else {
                            "roll/pitch".into()
                        }
                    }
                    l if l < V => "position".into(),
                    l if l < BA => "velocity".into(),
                    l if l < BG => "accelerometer bias".into(),
                    l if l < BB => "gyroscope bias".into(),
                    _ => "barometer bias".into(),
                }
            }
        };
        if !names.contains(&name) {
            names.push(name);
        }
    }
    if names.is_empty() {
        names.push("ill-conditioned".into());
    }
    names
}

/// Linearizes every factor touching `key` at `vals`, eliminates the key and
/// returns the resulting quadratic with its variables as keys.
pub fn marginalize_key(vals: &Values, factors: &[&dyn Factor], key: Key) -> Result<(Vec<Key>, HessianFactor, bool)> {
    let pos = vals
        .position(key)
        .ok_or_else(|| RioError::Domain(format!("{key:?} is not in the window")))?;
    let quads = factors.iter().map(|f| f.linearize(vals)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&HessianFactor> = quads.iter().collect();
    let layout = vals.layout();
    let (mut m, regularized) = marginalize(&refs, &|v| layout.dims[v], pos);
    let keys: Vec<Key> = m.vars.iter().map(|&v| vals.key_at(v)).collect();
    m.vars = (0..keys.len()).collect();
    Ok((keys, m, regularized))
}

/// Dense covariance of the full window at `vals`.
pub fn window_covariance(vals: &Values, factors: &[FactorBox]) -> Result<DMatrix<f64>> {
    let ne = linearize_all(vals, factors)?;
    ne.h
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| RioError::RankDeficient {
            directions: vec!["window".into()],
        })
}

pub fn gradient_norm(vals: &Values, factors: &[FactorBox]) -> Result<f64> {
    let ne = linearize_all(vals, factors)?;
    Ok(DVector::norm(&ne.g))
}
