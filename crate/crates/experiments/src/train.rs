use std::path::{Path, PathBuf};
use std::time::Instant;

use ar_surrogate::dataset::{build_windows, Split};
use ar_surrogate::nn::Mlp;
use ar_surrogate::pde::Trajectory;
use ar_surrogate::training::train;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::generate::load_dataset;
use crate::layout::{CHECKPOINT, RUNS_MANIFEST, RUN_RECORD, TRAIN_LOG};
use crate::sweep::{plan_runs, run_pool, RunRecord, RunSpec, RunStatus};
use crate::{create_dir, read_json, write_json};

/// Index of a training sweep, stored as `runs.json` in the runs directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunsManifest {
    pub config: ExperimentConfig,
    pub data_dir: PathBuf,
    pub runs: Vec<RunRecord>,
}

impl RunsManifest {
    pub fn load(runs_dir: &Path) -> Result<Self> {
        read_json(&runs_dir.join(RUNS_MANIFEST))
    }

    pub fn n_failed(&self) -> usize {
        self.runs.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Train one model per (cell, sample, repeat). A run whose loss turns
/// non-finite is recorded as such and the sweep carries on.
pub fn cmd_train(cfg: &ExperimentConfig, data_dir: &Path, out: &Path, jobs: usize) -> Result<RunsManifest> {
    cfg.validate()?;
    let set = load_dataset(cfg, data_dir)?;
    create_dir(out)?;
    let specs = plan_runs(cfg);
    let runs = run_pool(jobs, &specs, |spec| {
        train_run(cfg, &set.samples[spec.sample].trajectory, spec, &out.join(spec.rel_dir()))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let manifest = RunsManifest {
        config: cfg.clone(),
        data_dir: data_dir.canonicalize().unwrap_or_else(|_| data_dir.to_path_buf()),
        runs,
    };
    write_json(&out.join(RUNS_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Train a single run into `dir`: checkpoint, training log and run record.
pub fn train_run(cfg: &ExperimentConfig, traj: &Trajectory, spec: &RunSpec, dir: &Path) -> Result<RunRecord> {
    create_dir(dir)?;
    let windows = build_windows(traj.n_snapshots(), &cfg.window_spec(), spec.cell.m, Split::Train)?;
    let integrator = cfg.integrator(cfg.training_scheme(spec.cell.scheme));
    let plan = cfg.rollout_plan(spec.cell.strategy);
    let mut model = Mlp::new(cfg.mlp_spec(), spec.seed)?;
    let started = Instant::now();
    let outcome = train(&mut model, &integrator, traj, &windows, &plan, &cfg.train_config(spec.seed));
    let train_seconds = started.elapsed().as_secs_f64();
    let checkpoint = dir.join(CHECKPOINT);
    let record = match outcome {
        Ok(log) => {
            model.save(&checkpoint)?;
            ar_surrogate::write_atomic(&dir.join(TRAIN_LOG), log.to_csv().as_bytes())?;
            RunRecord {
                spec: *spec,
                status: RunStatus::Ok,
                final_loss: log.final_loss(),
                train_seconds,
            }
        }
        Err(e @ ar_surrogate::Error::NonFiniteLoss { .. }) => {
            // a checkpoint left over from an earlier sweep must not be evaluated
            let _ = std::fs::remove_file(&checkpoint);
            let _ = std::fs::remove_file(dir.join(TRAIN_LOG));
            RunRecord {
                spec: *spec,
                status: RunStatus::NonFiniteLoss { message: e.to_string() },
                final_loss: None,
                train_seconds,
            }
        }
        Err(e) => return Err(e.into()),
    };
    write_json(&dir.join(RUN_RECORD), &record)?;
    Ok(record)
}
