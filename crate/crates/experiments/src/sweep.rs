//! Sweep bookkeeping: cells, per-run specs and records, and the work pool.

use std::path::PathBuf;

use ar_surrogate::pde::PdeKind;
use ar_surrogate::schemes::SchemeKind;
use ar_surrogate::weighting::Strategy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ExpError, Result};
use crate::seeds::run_seed;

/// One row of a comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub pde: PdeKind,
    pub scheme: SchemeKind,
    pub strategy: Strategy,
    pub m: usize,
}

impl Cell {
    /// Directory-safe identifier, e.g. `heat__adams_euler__single__m1`.
    pub fn label(&self) -> String {
        format!("{}__{}__{}__m{}", self.pde, self.scheme, self.strategy, self.m)
    }

    pub fn parse_label(label: &str) -> Option<Self> {
        let mut parts = label.split("__");
        let pde = parts.next()?.parse().ok()?;
        let scheme = parts.next()?.parse().ok()?;
        let strategy = parts.next()?.parse().ok()?;
        let m = parts.next()?.strip_prefix('m')?.parse().ok()?;
        parts.next().is_none().then_some(Self {
            pde,
            scheme,
            strategy,
            m,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub cell: Cell,
    pub sample: usize,
    pub repeat: usize,
    pub seed: u64,
}

impl RunSpec {
    /// Run directory relative to the sweep root.
    pub fn rel_dir(&self) -> PathBuf {
        PathBuf::from(self.cell.label()).join(format!("s{:03}_r{}", self.sample, self.repeat))
    }
}

/// Every run of the configured sweep: cells × samples × repeats.
///
/// Shared Adams-Euler runs take the seed of their forward-Euler twin so
/// both train the same model.
pub fn plan_runs(cfg: &ExperimentConfig) -> Vec<RunSpec> {
    let master = cfg.dataset.seed;
    cfg.cells()
        .into_iter()
        .flat_map(|cell| {
            (0..cfg.dataset.n_samples).flat_map(move |sample| {
                (0..cfg.training.repeats).map(move |repeat| RunSpec {
                    cell,
                    sample,
                    repeat,
                    seed: run_seed(master, cell.pde, sample, cfg.training_scheme(cell.scheme), cell.strategy, repeat),
                })
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    /// Training diverged; the run has no checkpoint.
    NonFiniteLoss { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: RunSpec,
    pub status: RunStatus,
    pub final_loss: Option<f64>,
    pub train_seconds: f64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// Map `f` over `items` on at most `jobs` threads. Output order follows
/// input order regardless of scheduling.
pub fn run_pool<I, T, F>(jobs: usize, items: &[I], f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync,
{
    if jobs <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExpError::Config(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for scheme in SchemeKind::ALL {
            for strategy in Strategy::ALL {
                let cell = Cell {
                    pde: PdeKind::Burgers,
                    scheme,
                    strategy,
                    m: 4,
                };
                assert_eq!(Cell::parse_label(&cell.label()), Some(cell));
            }
        }
        assert_eq!(Cell::parse_label("heat__direct__single"), None);
        assert_eq!(Cell::parse_label("heat__direct__single__m1__x"), None);
    }

    #[test]
    fn plan_is_the_full_product() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.n_samples = 2;
        cfg.training.repeats = 3;
        cfg.training.strategies = vec![Strategy::Single, Strategy::Aw3];
        let runs = plan_runs(&cfg);
        assert_eq!(runs.len(), 4 * 2 * 2 * 3);
        let dirs: std::collections::HashSet<_> = runs.iter().map(RunSpec::rel_dir).collect();
        assert_eq!(dirs.len(), runs.len());
    }

    #[test]
    fn shared_derivative_runs_reuse_forward_euler_seeds() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.n_samples = 1;
        cfg.training.share_derivative_model = true;
        let runs = plan_runs(&cfg);
        let seed_of = |scheme| runs.iter().find(|r| r.cell.scheme == scheme && r.repeat == 1).unwrap().seed;
        assert_eq!(seed_of(SchemeKind::AdamsEuler), seed_of(SchemeKind::ForwardEuler));
        assert_ne!(seed_of(SchemeKind::Central2), seed_of(SchemeKind::ForwardEuler));
    }

    #[test]
    fn pool_preserves_order() {
        let items: Vec<u64> = (0..50).collect();
        let serial = run_pool(1, &items, |x| x * x).unwrap();
        let parallel = run_pool(4, &items, |x| x * x).unwrap();
        assert_eq!(serial, parallel);
    }
}
