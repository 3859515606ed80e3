mod common;

use std::cell::Cell as StdCell;

use ar_experiments::evaluate::{cmd_evaluate, evaluate_run, RunResult, SweepResult};
use ar_experiments::generate::cmd_generate;
use ar_experiments::layout::{DATASET_FILE, RUNS_MANIFEST, SWEEP_CSV};
use ar_experiments::sweep::{Cell, RunSpec, RunStatus};
use ar_experiments::train::cmd_train;
use ar_experiments::ExperimentConfig;
use ar_surrogate::dataset::{read_trajectory_set, Sample, TrajectorySet};
use ar_surrogate::pde::{PdeKind, PdeParams, Trajectory};
use ar_surrogate::schemes::{PointModel, SchemeKind};
use ar_surrogate::weighting::Strategy;
use common::tiny_config;
use ndarray::{Array1, ArrayView2};

#[test]
fn generate_writes_the_configured_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.pde = PdeKind::Advection;
    cfg.dataset.n_samples = 2;
    let manifest = cmd_generate(&cfg, tmp.path(), 1).unwrap();
    assert_eq!(manifest.samples.len(), 2);
    let set = read_trajectory_set(&tmp.path().join(DATASET_FILE), 2.0).unwrap();
    assert_eq!(set.samples.len(), 2);
    assert_eq!((set.grid.nx, set.grid.ny), (64, 64));
    assert_eq!(set.temporal, cfg.dataset.temporal);
    assert!(set.samples.iter().all(|s| s.trajectory.n_snapshots() == 500));
    assert!(set.samples.iter().zip(&manifest.samples).all(|(s, m)| s.seed == m.seed && s.params == m.params));
}

#[test]
fn generate_is_byte_reproducible_and_handles_empty_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(PdeKind::Heat);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_generate(&cfg, &a, 1).unwrap();
    cmd_generate(&cfg, &b, 2).unwrap();
    assert_eq!(
        std::fs::read(a.join(DATASET_FILE)).unwrap(),
        std::fs::read(b.join(DATASET_FILE)).unwrap()
    );

    let mut empty = cfg.clone();
    empty.dataset.n_samples = 0;
    let dir = tmp.path().join("empty");
    cmd_generate(&empty, &dir, 1).unwrap();
    let bytes = std::fs::read(dir.join(DATASET_FILE)).unwrap();
    assert_eq!(bytes.len(), 4 + 5 * 4 + 2 * 8);
    assert!(read_trajectory_set(&dir.join(DATASET_FILE), 2.0).unwrap().samples.is_empty());
}

#[test]
fn train_smoke_run_writes_checkpoints_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(PdeKind::Heat);
    cfg.dataset.n_samples = 1;
    cfg.training.epochs = 10;
    cfg.training.repeats = 1;
    cfg.training.schemes = vec![SchemeKind::ForwardEuler];
    cfg.training.strategies = vec![Strategy::Single];
    let data = tmp.path().join("data");
    cmd_generate(&cfg, &data, 1).unwrap();
    let first = cmd_train(&cfg, &data, &tmp.path().join("runs1"), 1).unwrap();
    let second = cmd_train(&cfg, &data, &tmp.path().join("runs2"), 1).unwrap();
    assert_eq!(first.runs.len(), 1);
    let run = &first.runs[0];
    assert!(run.is_ok());
    assert!(tmp.path().join("runs1").join(run.spec.rel_dir()).join("model.arpm").is_file());
    assert!(tmp.path().join("runs1").join(RUNS_MANIFEST).is_file());
    assert_eq!(run.final_loss, second.runs[0].final_loss);
}

#[test]
fn train_rejects_mismatched_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(PdeKind::Heat);
    cmd_generate(&cfg, tmp.path(), 1).unwrap();
    let mut other = cfg.clone();
    other.dataset.nx = 32;
    let err = cmd_train(&other, tmp.path(), &tmp.path().join("runs"), 1).unwrap_err();
    assert!(err.to_string().contains("grid"), "{err}");
}

/// One sample holds values whose squares overflow; its runs fail, the
/// other sample's runs complete, and the table counts the failures.
#[test]
fn non_finite_runs_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(PdeKind::Heat);
    cfg.training.schemes = vec![SchemeKind::Direct];
    cfg.training.strategies = vec![Strategy::Single];
    let data = tmp.path().join("data");
    cmd_generate(&cfg, &data, 1).unwrap();
    let path = data.join(DATASET_FILE);
    let mut set = read_trajectory_set(&path, 2.0).unwrap();
    let grid = set.grid;
    let huge: Vec<f64> = set.samples[0].trajectory.data().iter().map(|v| v * 1e300).collect();
    set.samples[0] = Sample {
        params: PdeParams::heat(0.01),
        seed: set.samples[0].seed,
        trajectory: Trajectory::from_flat(grid, cfg.dataset.temporal.n_snapshots, huge).unwrap(),
    };
    ar_surrogate::dataset::write_trajectory_set(&path, &set).unwrap();

    let runs_dir = tmp.path().join("runs");
    let manifest = cmd_train(&cfg, &data, &runs_dir, 2).unwrap();
    for run in &manifest.runs {
        let failed = matches!(run.status, RunStatus::NonFiniteLoss { .. });
        assert_eq!(failed, run.spec.sample == 0, "{run:?}");
    }
    let sweep = cmd_evaluate(&cfg, &runs_dir, None, &tmp.path().join("results"), 1).unwrap();
    let row = &sweep.cells[0];
    assert_eq!((row.n_runs, row.n_failed), (4, 2));
    assert!(row.mse_mean.is_finite());
}

/// Replays the ground truth: the `n`-th call returns target snapshot `n`.
struct Memorizer<'a> {
    traj: &'a Trajectory,
    first_target: usize,
    calls: StdCell<usize>,
}

impl PointModel for Memorizer<'_> {
    fn predict(&self, inputs: ArrayView2<f64>) -> ar_surrogate::Result<Array1<f64>> {
        let t = self.first_target + self.calls.get();
        self.calls.set(self.calls.get() + 1);
        assert_eq!(inputs.nrows(), self.traj.n_points());
        Ok(Array1::from(self.traj.snapshot(t).to_vec()))
    }
}

#[test]
fn memorizing_model_gives_a_zero_mse_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(PdeKind::Heat);
    cmd_generate(&cfg, tmp.path(), 1).unwrap();
    let set: TrajectorySet = read_trajectory_set(&tmp.path().join(DATASET_FILE), 2.0).unwrap();
    let cell = Cell {
        pde: PdeKind::Heat,
        scheme: SchemeKind::Direct,
        strategy: Strategy::Single,
        m: 1,
    };
    let split = cfg.window_spec().split_index(cfg.dataset.temporal.n_snapshots);
    let runs: Vec<RunResult> = set
        .samples
        .iter()
        .enumerate()
        .map(|(sample, s)| {
            let stub = Memorizer {
                traj: &s.trajectory,
                first_target: split,
                calls: StdCell::new(0),
            };
            let outcome = evaluate_run(
                &stub,
                &cfg.integrator(SchemeKind::Direct),
                &s.trajectory,
                &cfg.window_spec(),
                None,
                &[],
                None,
            )
            .unwrap();
            RunResult {
                spec: RunSpec {
                    cell,
                    sample,
                    repeat: 0,
                    seed: 0,
                },
                train_seconds: 0.0,
                report: Some(outcome.report),
            }
        })
        .collect();
    let sweep = SweepResult::aggregate(&[cell], runs);
    assert_eq!(sweep.cells[0].mse_mean, 0.0);
    assert_eq!(sweep.cells[0].n_runs, 2);
}

#[test]
fn sweep_table_and_means_follow_the_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(PdeKind::Heat);
    let data = tmp.path().join("data");
    cmd_generate(&cfg, &data, 1).unwrap();
    let runs_dir = tmp.path().join("runs");
    cmd_train(&cfg, &data, &runs_dir, 1).unwrap();
    let out = tmp.path().join("results");
    let sweep = cmd_evaluate(&cfg, &runs_dir, None, &out, 1).unwrap();
    let table = std::fs::read_to_string(out.join(SWEEP_CSV)).unwrap();
    assert_eq!(
        table.lines().count() - 1,
        cfg.training.schemes.len() * cfg.training.strategies.len()
    );
    for summary in &sweep.cells {
        let values: Vec<f64> = sweep
            .runs
            .iter()
            .filter(|r| r.spec.cell == summary.cell)
            .filter_map(RunResult::finite_mse)
            .collect();
        assert_eq!(values.len(), cfg.dataset.n_samples * cfg.training.repeats);
        let hand = values.iter().sum::<f64>() / values.len() as f64;
        assert!((summary.mse_mean - hand).abs() <= 1e-15 * hand.abs());
    }
}
