use serde::{Deserialize, Serialize};

/// M-estimator applied to the squared norm `s` of a whitened residual block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobustLoss {
    None,
    Huber { scale: f64 },
    Cauchy { scale: f64 },
}

impl RobustLoss {
    /// `ρ(s)`; the block contributes `ρ(s)/2` to the cost.
    pub fn rho(&self, s: f64) -> f64 {
        match *self {
            RobustLoss::None => s,
            RobustLoss::Huber { scale: k } => {
                if s <= k * k {
                    s
                } else {
                    2.0 * k * s.sqrt() - k * k
                }
            }
            RobustLoss::Cauchy { scale: c } => c * c * (s / (c * c)).ln_1p(),
        }
    }

    /// `ρ'(s)`, the reweighting applied to the block's normal equations.
    pub fn weight(&self, s: f64) -> f64 {
        match *self {
            RobustLoss::None => 1.0,
            RobustLoss::Huber { scale: k } => {
                if s <= k * k {
                    1.0
                } else {
                    k / s.sqrt()
                }
            }
            RobustLoss::Cauchy { scale: c } => 1.0 / (1.0 + s / (c * c)),
        }
    }
}
