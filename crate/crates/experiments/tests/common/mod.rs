#![allow(dead_code)]

use ar_experiments::ExperimentConfig;
use ar_surrogate::pde::{PdeKind, TemporalSpec};
use ar_surrogate::schemes::SchemeKind;
use ar_surrogate::weighting::Strategy;

/// A sweep small enough to run end to end in a few seconds.
pub fn tiny_config(pde: PdeKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.pde = pde;
    cfg.dataset.n_samples = 2;
    cfg.dataset.nx = 16;
    cfg.dataset.ny = 16;
    cfg.dataset.temporal = TemporalSpec {
        t_start: 0.0,
        t_end: 0.5,
        n_snapshots: 60,
    };
    cfg.dataset.seed = 11;
    cfg.model.hidden_dims = vec![8, 8];
    cfg.training.epochs = 3;
    cfg.training.history_len = 8;
    cfg.training.schemes = vec![SchemeKind::Direct, SchemeKind::AdamsEuler];
    cfg.training.strategies = vec![Strategy::Single, Strategy::Aw2];
    cfg.training.steps = 3;
    cfg.training.repeats = 2;
    cfg.training.points_per_batch = Some(32);
    cfg
}
