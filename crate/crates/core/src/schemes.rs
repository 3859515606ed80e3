//! Time-integration wrappers around a pointwise forecaster.
//!
//! A scheme decides what the model is trained to output (the next state
//! or a temporal derivative) and how that output advances the state
//! during auto-regressive rollout.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::pde::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Model outputs `u(t+Δt)`.
    Direct,
    /// Model outputs `(u(t+Δt) - u(t)) / Δt`, advanced with one Euler step.
    ForwardEuler,
    /// Model outputs `(u(t+Δt) - u(t-Δt)) / 2Δt`, advanced by leapfrogging from `u(t-Δt)`.
    Central2,
    /// Forward-Euler derivatives combined by the two-step Adams-Bashforth update.
    AdamsEuler,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Direct,
        SchemeKind::ForwardEuler,
        SchemeKind::Central2,
        SchemeKind::AdamsEuler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Direct => "direct",
            SchemeKind::ForwardEuler => "forward_euler",
            SchemeKind::Central2 => "central2",
            SchemeKind::AdamsEuler => "adams_euler",
        }
    }

    pub fn predicts_derivative(self) -> bool {
        self != SchemeKind::Direct
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme `{s}`")))
    }
}

/// A scheme bound to a snapshot spacing.
///
/// Derivative targets are multiplied by `target_scale` before training, and
/// model outputs are divided by it before being used as derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Integrator {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub target_scale: f64,
}

impl Integrator {
    pub fn new(scheme: SchemeKind, dt: f64) -> Self {
        Self {
            scheme,
            dt,
            target_scale: 1.0,
        }
    }

    pub fn with_target_scale(mut self, target_scale: f64) -> Self {
        self.target_scale = target_scale;
        self
    }

    /// Pointwise training target given `u(t-Δt)`, `u(t)` and `u(t+Δt)`.
    #[inline]
    pub fn target_value(&self, u_prev: f64, u_now: f64, u_next: f64) -> f64 {
        match self.scheme {
            SchemeKind::Direct => u_next,
            SchemeKind::ForwardEuler | SchemeKind::AdamsEuler => self.target_scale * (u_next - u_now) / self.dt,
            SchemeKind::Central2 => self.target_scale * (u_next - u_prev) / (2.0 * self.dt),
        }
    }

    /// Training target for the step from snapshot `t_index` to `t_index + 1`.
    pub fn build_target(&self, traj: &Trajectory, t_index: usize) -> Result<Vec<f64>> {
        let needs_prev = self.scheme == SchemeKind::Central2;
        if t_index + 1 >= traj.n_snapshots() || (needs_prev && t_index == 0) {
            return Err(Error::IndexOutOfRange(format!(
                "{} target at t={t_index} needs neighbours inside 0..{}",
                self.scheme,
                traj.n_snapshots()
            )));
        }
        let now = traj.snapshot(t_index);
        let next = traj.snapshot(t_index + 1);
        let prev = if needs_prev { traj.snapshot(t_index - 1) } else { now };
        Ok((0..now.len())
            .map(|p| self.target_value(prev[p], now[p], next[p]))
            .collect())
    }

    /// Next state from model output `out` and, for Adams-Euler, the previous
    /// model output `out_prev`.
    #[inline]
    pub fn step_value(&self, u_prev: f64, u_now: f64, out: f64, out_prev: f64) -> f64 {
        let inv = 1.0 / self.target_scale;
        match self.scheme {
            SchemeKind::Direct => out,
            SchemeKind::ForwardEuler => u_now + self.dt * (out * inv),
            SchemeKind::Central2 => u_prev + 2.0 * self.dt * (out * inv),
            SchemeKind::AdamsEuler => u_now + self.dt * (1.5 * (out * inv) - 0.5 * (out_prev * inv)),
        }
    }
}

/// Anything that maps a batch of history rows to one scalar per row.
pub trait PointModel {
    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>>;
}

impl PointModel for Mlp {
    fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        let out = self.forward(inputs)?;
        Ok(out.column(0).to_owned())
    }
}

/// Recursive-rollout state for a batch of independent points.
#[derive(Debug, Clone)]
pub struct RolloutState {
    history: VecDeque<Vec<f64>>,
    lag: Option<Vec<f64>>,
    cached_prev_output: Option<Vec<f64>>,
    history_len: usize,
    use_cache: bool,
    pub steps_taken: usize,
    pub model_evals: usize,
}

impl RolloutState {
    /// `history` is ordered oldest first. `lag` is the snapshot just before
    /// it; Adams-Euler needs it for the shifted-window evaluation of the
    /// first step.
    pub fn new(history: Vec<Vec<f64>>, lag: Option<Vec<f64>>) -> Result<Self> {
        let n_points = history.first().map(Vec::len).unwrap_or(0);
        if history.is_empty() || n_points == 0 {
            return Err(Error::UninitializedHistory("empty history".into()));
        }
        if history.iter().chain(lag.iter()).any(|h| h.len() != n_points) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n_points} points per snapshot"),
                actual: "ragged history".into(),
            });
        }
        Ok(Self {
            history_len: history.len(),
            history: history.into(),
            lag,
            cached_prev_output: None,
            use_cache: true,
            steps_taken: 0,
            model_evals: 0,
        })
    }

    /// Seed from trajectory snapshots `range`, taking the preceding snapshot as lag if present.
    pub fn from_trajectory(traj: &Trajectory, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > traj.n_snapshots() {
            return Err(Error::IndexOutOfRange(format!(
                "history {range:?} beyond {} snapshots",
                traj.n_snapshots()
            )));
        }
        let lag = range.start.checked_sub(1).map(|i| traj.snapshot(i).to_vec());
        let history = range.map(|i| traj.snapshot(i).to_vec()).collect();
        Self::new(history, lag)
    }

    /// Disable derivative caching so Adams-Euler recomputes the previous
    /// derivative from the shifted window on every step.
    pub fn without_cache(mut self) -> Self {
        self.use_cache = false;
        self
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn n_points(&self) -> usize {
        self.history[0].len()
    }

    pub fn current(&self) -> &[f64] {
        self.history.back().expect("non-empty history")
    }

    pub fn cached_prev_derivative(&self) -> Option<&[f64]> {
        self.cached_prev_output.as_deref()
    }

    fn window_matrix<'a>(&self, rows: impl Iterator<Item = &'a Vec<f64>>) -> Array2<f64> {
        let n = self.n_points();
        let mut m = Array2::zeros((n, self.history_len));
        for (j, snap) in rows.enumerate() {
            for (p, &v) in snap.iter().enumerate() {
                m[[p, j]] = v;
            }
        }
        m
    }

    /// Model input for the current window, one row per point.
    pub fn current_inputs(&self) -> Array2<f64> {
        self.window_matrix(self.history.iter())
    }

    fn shifted_inputs(&self) -> Result<Array2<f64>> {
        let lag = self.lag.as_ref().ok_or_else(|| {
            Error::UninitializedHistory("Adams-Euler start needs the snapshot preceding the history".into())
        })?;
        Ok(self.window_matrix(std::iter::once(lag).chain(self.history.iter().take(self.history_len - 1))))
    }

    fn evaluate(&mut self, model: &dyn PointModel, inputs: Array2<f64>) -> Result<Vec<f64>> {
        self.model_evals += 1;
        Ok(model.predict(inputs.view())?.to_vec())
    }

    /// Advance one step, push the new state into the history and return it.
    pub fn advance(&mut self, integrator: &Integrator, model: &dyn PointModel) -> Result<Vec<f64>> {
        let out = self.evaluate(model, self.current_inputs())?;
        let out_prev = if integrator.scheme == SchemeKind::AdamsEuler {
            match (&self.cached_prev_output, self.use_cache) {
                (Some(c), true) => c.clone(),
                _ => {
                    let shifted = self.shifted_inputs()?;
                    self.evaluate(model, shifted)?
                }
            }
        } else {
            Vec::new()
        };
        let now = self.current();
        let prev = if self.history_len >= 2 {
            &self.history[self.history_len - 2]
        } else if integrator.scheme == SchemeKind::Central2 {
            self.lag.as_ref().ok_or_else(|| {
                Error::UninitializedHistory("central differences need two history snapshots".into())
            })?
        } else {
            now
        };
        let next: Vec<f64> = (0..now.len())
            .map(|p| {
                let op = out_prev.get(p).copied().unwrap_or(0.0);
                integrator.step_value(prev[p], now[p], out[p], op)
            })
            .collect();
        if integrator.scheme == SchemeKind::AdamsEuler {
            self.cached_prev_output = Some(out);
        }
        self.lag = self.history.pop_front();
        self.history.push_back(next.clone());
        self.steps_taken += 1;
        Ok(next)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCost {
    pub total_evals: usize,
    pub evals_per_step: usize,
}

/// Model evaluations needed for a rollout of `horizon` steps.
pub fn scheme_cost(scheme: SchemeKind, horizon: usize) -> SchemeCost {
    let warmup = usize::from(scheme == SchemeKind::AdamsEuler);
    SchemeCost {
        total_evals: horizon + warmup,
        evals_per_step: 1,
    }
}

/// What a classical RK4 wrapper would cost: four evaluations per step.
/// Documentation only; no RK4 rollout is implemented.
pub fn rk4_reference_cost(horizon: usize) -> SchemeCost {
    SchemeCost {
        total_evals: 4 * horizon,
        evals_per_step: 4,
    }
}
