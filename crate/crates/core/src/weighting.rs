//! Per-step loss weights for multi-step rollout training.
//!
//! The adaptive strategies turn the per-step MSE vector into normalized
//! weights. The MSE values are treated as constants here; only the
//! learnable exponent parameter `k` is differentiated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Plain one-step regression on scheme targets (`M = 1`).
    Single,
    /// Fixed weights `[w_first, w_rest, ..., w_rest]`.
    Vanilla,
    /// `w_i = MSE_i / Σ MSE_j`
    Aw1,
    /// `w_i = MSE_i^ke / Σ MSE_j^ke` with a learnable `ke`.
    Aw2,
    /// Like AW2 restricted to the first and last step.
    Aw3,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Single,
        Strategy::Vanilla,
        Strategy::Aw1,
        Strategy::Aw2,
        Strategy::Aw3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Single => "single",
            Strategy::Vanilla => "vanilla",
            Strategy::Aw1 => "aw1",
            Strategy::Aw2 => "aw2",
            Strategy::Aw3 => "aw3",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Strategy::Aw1 | Strategy::Aw2 | Strategy::Aw3)
    }

    /// Whether the strategy carries a learnable `k`.
    pub fn learns_k(self) -> bool {
        matches!(self, Strategy::Aw2 | Strategy::Aw3)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanillaWeights {
    pub first: f64,
    pub rest: f64,
}

impl Default for VanillaWeights {
    fn default() -> Self {
        Self { first: 1.0, rest: 0.1 }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `0.5 + 2.5 · σ(s·k)`, always inside `(0.5, 3.0)` for finite input.
pub fn effective_k(k: f64, s: f64) -> f64 {
    0.5 + 2.5 * sigmoid(s * k)
}

/// `d ke / d k`
pub fn effective_k_slope(k: f64, s: f64) -> f64 {
    let sg = sigmoid(s * k);
    2.5 * s * sg * (1.0 - sg)
}

/// Normalized powers `m_i^ke / Σ m_j^ke` over `support`, computed in log
/// space so tiny MSEs do not underflow. Returns `None` if every entry is zero.
fn power_weights(mse: &[f64], support: &[usize], ke: f64) -> Option<Vec<f64>> {
    let logs: Vec<f64> = support.iter().map(|&i| mse[i].ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return None;
    }
    let raw: Vec<f64> = logs.iter().map(|&l| (ke * (l - top)).exp()).collect();
    let total: f64 = raw.iter().sum();
    let mut w = vec![0.0; mse.len()];
    for (&i, r) in support.iter().zip(raw) {
        w[i] = r / total;
    }
    Some(w)
}

fn support(strategy: Strategy, m: usize) -> Vec<usize> {
    match strategy {
        Strategy::Aw3 => vec![0, m - 1],
        _ => (0..m).collect(),
    }
}

/// Loss weights for one batch.
///
/// Adaptive strategies fall back to uniform weights over their support when
/// every per-step MSE is zero.
pub fn compute_weights(strategy: Strategy, mse: &[f64], ke: f64, vanilla: VanillaWeights) -> Result<Vec<f64>> {
    let m = mse.len();
    if m == 0 {
        return Err(Error::InvalidConfig("no rollout steps".into()));
    }
    if mse.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidConfig(format!("per-step MSE must be non-negative, got {mse:?}")));
    }
    match strategy {
        Strategy::Single => {
            if m != 1 {
                return Err(Error::InvalidConfig("single-step strategy requires M = 1".into()));
            }
            Ok(vec![1.0])
        }
        Strategy::Vanilla => Ok((0..m).map(|i| if i == 0 { vanilla.first } else { vanilla.rest }).collect()),
        Strategy::Aw1 | Strategy::Aw2 | Strategy::Aw3 => {
            if m < 2 {
                return Err(Error::InvalidConfig(format!("{strategy} needs M >= 2")));
            }
            let exponent = if strategy == Strategy::Aw1 { 1.0 } else { ke };
            let sup = support(strategy, m);
            Ok(power_weights(mse, &sup, exponent).unwrap_or_else(|| {
                let mut w = vec![0.0; m];
                for &i in &sup {
                    w[i] = 1.0 / sup.len() as f64;
                }
                w
            }))
        }
    }
}

/// `d/dk Σ w_i(k) · MSE_i` for AW2/AW3 with the MSE values held constant.
/// Zero for strategies without a learnable `k` or for degenerate losses.
pub fn total_loss_k_gradient(strategy: Strategy, mse: &[f64], k: f64, s: f64) -> f64 {
    if !strategy.learns_k() || mse.len() < 2 {
        return 0.0;
    }
    let sup = support(strategy, mse.len());
    let ke = effective_k(k, s);
    let Some(w) = power_weights(mse, &sup, ke) else {
        return 0.0;
    };
    // dw_i/dke = w_i (ln m_i - Σ_j w_j ln m_j); zero-weight terms drop out
    let active: Vec<usize> = sup.iter().copied().filter(|&i| w[i] > 0.0).collect();
    let mean_log: f64 = active.iter().map(|&i| w[i] * mse[i].ln()).sum();
    let d_ke: f64 = active
        .iter()
        .map(|&i| mse[i] * w[i] * (mse[i].ln() - mean_log))
        .sum();
    d_ke * effective_k_slope(k, s)
}
