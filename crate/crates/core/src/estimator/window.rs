use super::graph::{Context, Factor, Key, MarginalPrior, Node, Values};
use super::solver::{marginalize_key, optimize, FactorBox, LmConfig, OptimizeReport};
use super::state::{Extrinsics, NavState};
use crate::error::{Result, RioError};

/// Nodes inside the smoothing lag, the factors between them and the prior
/// left behind by states that aged out.
pub struct SlidingWindow {
    pub values: Values,
    pub factors: Vec<FactorBox>,
    next_id: u64,
}

impl SlidingWindow {
    pub fn new(ext: Extrinsics, ext_free: bool) -> Self {
        Self {
            values: Values {
                nodes: Vec::new(),
                ext,
                ext_free,
            },
            factors: Vec::new(),
            next_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nodes.is_empty()
    }

    pub fn add_node(&mut self, t: f64, state: NavState) -> Result<u64> {
        if let Some(last) = self.values.nodes.last() {
            if !(t > last.t) {
                return Err(RioError::NonMonotone { prev: last.t, next: t });
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.values.nodes.push(Node { id, t, state });
        Ok(id)
    }

    pub fn add_factor(&mut self, f: FactorBox) {
        self.factors.push(f);
    }

    pub fn newest(&self) -> Option<&Node> {
        self.values.nodes.last()
    }

    pub fn oldest(&self) -> Option<&Node> {
        self.values.nodes.first()
    }

    pub fn optimize(&mut self, ctx: &Context, cfg: &LmConfig) -> Result<OptimizeReport> {
        optimize(&mut self.values, &mut self.factors, ctx, cfg)
    }

    /// Replaces the oldest node and every factor touching it by a single
    /// prior on its neighbours, linearized at the current estimate. Returns
    /// whether the eliminated block had to be regularized.
    pub fn marginalize_oldest(&mut self) -> Result<bool> {
        let Some(oldest) = self.values.nodes.first().map(|n| n.id) else {
            return Ok(false);
        };
        let key = Key::Nav(oldest);
        let (touching, rest): (Vec<FactorBox>, Vec<FactorBox>) =
            std::mem::take(&mut self.factors).into_iter().partition(|f| f.keys().contains(&key));
        self.factors = rest;
        let refs: Vec<&dyn Factor> = touching.iter().map(|f| f.as_ref()).collect();
        let (keys, quad, regularized) = marginalize_key(&self.values, &refs, key)?;
        if regularized {
            log::warn!("state at t={} was weakly constrained when marginalized", self.values.nodes[0].t);
        }
        self.values.nodes.remove(0);
        if !keys.is_empty() {
            let lin = keys.iter().map(|k| self.values.get(*k)).collect::<Result<Vec<_>>>()?;
            self.factors.push(Box::new(MarginalPrior { keys, lin, quad }));
        }
        Ok(regularized)
    }

    /// Marks every factor as belonging to an older node (associations stop
    /// being re-computed).
    pub fn freeze_all(&mut self) {
        for f in &mut self.factors {
            f.freeze();
        }
    }
}
