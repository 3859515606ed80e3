use std::collections::HashMap;
use std::path::Path;

use ar_surrogate::dataset::{build_windows, Split, WindowSpec};
use ar_surrogate::metrics::{rollout_eval, EvalReport, RolloutOutcome, StrouhalConfig};
use ar_surrogate::nn::Mlp;
use ar_surrogate::pde::Trajectory;
use ar_surrogate::schemes::{Integrator, PointModel, RolloutState};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ExpError, IoContext, Result};
use crate::generate::load_dataset;
use crate::layout::{
    CHECKPOINT, FIELDS_DIR, MSE_CURVES_CSV, REPORTS_DIR, RUNS_CSV, SWEEP_CSV, TIMING_CSV, TRAINLOGS_DIR, TRAIN_LOG,
};
use crate::sweep::{run_pool, Cell, RunRecord, RunSpec};
use crate::train::RunsManifest;
use crate::{create_dir, write_json};

/// Roll `model` out over the test segment of `traj`, starting from the last
/// `history_len` training snapshots.
pub fn evaluate_run(
    model: &dyn PointModel,
    integrator: &Integrator,
    traj: &Trajectory,
    window: &WindowSpec,
    horizon: Option<usize>,
    probes: &[usize],
    strouhal: Option<&StrouhalConfig>,
) -> ar_surrogate::Result<RolloutOutcome> {
    let test = build_windows(traj.n_snapshots(), window, 1, Split::Test)?[0];
    let horizon = horizon.unwrap_or(test.n_targets).min(test.n_targets);
    let state = RolloutState::from_trajectory(traj, test.history())?;
    let truth: Vec<&[f64]> = test.targets().take(horizon).map(|i| traj.snapshot(i)).collect();
    rollout_eval(model, integrator, state, &truth, probes, strouhal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub spec: RunSpec,
    pub train_seconds: f64,
    /// `None` when training ended with a non-finite loss.
    pub report: Option<EvalReport>,
}

impl RunResult {
    /// Aggregate MSE of a completed, non-divergent rollout.
    pub fn finite_mse(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.aggregate_mse).filter(|v| v.is_finite())
    }
}

/// Aggregates of one cell over samples and repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub n_runs: usize,
    /// Runs whose training loss became non-finite.
    pub n_failed: usize,
    /// Runs whose test rollout produced a non-finite prediction.
    pub n_diverged: usize,
    /// Mean aggregate MSE over runs that neither failed nor diverged.
    pub mse_mean: f64,
    /// Sample standard deviation of the same values.
    pub mse_std: f64,
    pub train_seconds_mean: f64,
    pub eval_seconds_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunResult>,
}

#[derive(Serialize)]
struct SweepRow {
    pde: String,
    scheme: String,
    strategy: String,
    m: usize,
    n_runs: usize,
    n_failed: usize,
    n_diverged: usize,
    mse_mean: f64,
    mse_std: f64,
}

#[derive(Serialize)]
struct TimingRow {
    pde: String,
    scheme: String,
    strategy: String,
    m: usize,
    train_seconds_mean: f64,
    eval_seconds_mean: f64,
}

#[derive(Serialize)]
struct RunRow {
    pde: String,
    scheme: String,
    strategy: String,
    m: usize,
    sample: usize,
    repeat: usize,
    seed: u64,
    status: &'static str,
    aggregate_mse: f64,
    divergence_step: Option<usize>,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    match values.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => {
            let m = mean(values);
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        }
    }
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| ExpError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl SweepResult {
    /// One summary per requested cell, in the given order.
    pub fn aggregate(cells: &[Cell], runs: Vec<RunResult>) -> Self {
        let summaries = cells
            .iter()
            .map(|cell| {
                let of_cell: Vec<&RunResult> = runs.iter().filter(|r| r.spec.cell == *cell).collect();
                let mses: Vec<f64> = of_cell.iter().filter_map(|r| r.finite_mse()).collect();
                let reports: Vec<&EvalReport> = of_cell.iter().filter_map(|r| r.report.as_ref()).collect();
                CellSummary {
                    cell: *cell,
                    n_runs: of_cell.len(),
                    n_failed: of_cell.iter().filter(|r| r.report.is_none()).count(),
                    n_diverged: reports.iter().filter(|r| r.diverged()).count(),
                    mse_mean: mean(&mses),
                    mse_std: sample_std(&mses),
                    train_seconds_mean: mean(&of_cell.iter().map(|r| r.train_seconds).collect::<Vec<_>>()),
                    eval_seconds_mean: mean(&reports.iter().map(|r| r.runtime_seconds).collect::<Vec<_>>()),
                }
            })
            .collect();
        Self {
            cells: summaries,
            runs,
        }
    }

    pub fn cell(&self, cell: &Cell) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == *cell)
    }

    /// `pde,scheme,strategy,m,n_runs,n_failed,n_diverged,mse_mean,mse_std`
    pub fn sweep_csv(&self) -> Result<String> {
        to_csv(self.cells.iter().map(|c| SweepRow {
            pde: c.cell.pde.to_string(),
            scheme: c.cell.scheme.to_string(),
            strategy: c.cell.strategy.to_string(),
            m: c.cell.m,
            n_runs: c.n_runs,
            n_failed: c.n_failed,
            n_diverged: c.n_diverged,
            mse_mean: c.mse_mean,
            mse_std: c.mse_std,
        }))
    }

    /// `pde,scheme,strategy,m,train_seconds_mean,eval_seconds_mean`
    pub fn timing_csv(&self) -> Result<String> {
        to_csv(self.cells.iter().map(|c| TimingRow {
            pde: c.cell.pde.to_string(),
            scheme: c.cell.scheme.to_string(),
            strategy: c.cell.strategy.to_string(),
            m: c.cell.m,
            train_seconds_mean: c.train_seconds_mean,
            eval_seconds_mean: c.eval_seconds_mean,
        }))
    }

    /// `pde,scheme,strategy,m,sample,repeat,seed,status,aggregate_mse,divergence_step`
    pub fn runs_csv(&self) -> Result<String> {
        to_csv(self.runs.iter().map(|r| RunRow {
            pde: r.spec.cell.pde.to_string(),
            scheme: r.spec.cell.scheme.to_string(),
            strategy: r.spec.cell.strategy.to_string(),
            m: r.spec.cell.m,
            sample: r.spec.sample,
            repeat: r.spec.repeat,
            seed: r.spec.seed,
            status: match &r.report {
                None => "non_finite_loss",
                Some(rep) if rep.diverged() => "diverged",
                Some(_) => "ok",
            },
            aggregate_mse: r.report.as_ref().map_or(f64::NAN, |rep| rep.aggregate_mse),
            divergence_step: r.report.as_ref().and_then(|rep| rep.divergence_step),
        }))
    }

    /// `step,<cell label>...`: per-step MSE averaged over non-divergent runs.
    pub fn mse_curves_csv(&self) -> String {
        let horizon = self
            .runs
            .iter()
            .filter_map(|r| r.report.as_ref().map(|rep| rep.per_step_mse.len()))
            .max()
            .unwrap_or(0);
        let mut out = String::from("step");
        for c in &self.cells {
            out.push(',');
            out.push_str(&c.cell.label());
        }
        out.push('\n');
        let curves: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|c| {
                let reports: Vec<&EvalReport> = self
                    .runs
                    .iter()
                    .filter(|r| r.spec.cell == c.cell)
                    .filter_map(|r| r.report.as_ref())
                    .filter(|rep| !rep.diverged())
                    .collect();
                (0..horizon)
                    .map(|s| mean(&reports.iter().filter_map(|rep| rep.per_step_mse.get(s).copied()).collect::<Vec<_>>()))
                    .collect()
            })
            .collect();
        for s in 0..horizon {
            out.push_str(&(s + 1).to_string());
            for curve in &curves {
                out.push_str(&format!(",{:e}", curve[s]));
            }
            out.push('\n');
        }
        out
    }
}

fn same_training_setup(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.dataset == b.dataset && a.model == b.model && a.training == b.training
}

/// Evaluate every run of a sweep and write per-run reports and the
/// aggregate tables into `out`.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    runs_dir: &Path,
    data_dir: Option<&Path>,
    out: &Path,
    jobs: usize,
) -> Result<SweepResult> {
    cfg.validate()?;
    let manifest = RunsManifest::load(runs_dir)?;
    if !same_training_setup(cfg, &manifest.config) {
        return Err(ExpError::Config(format!(
            "runs in {} were trained with a different dataset/model/training configuration",
            runs_dir.display()
        )));
    }
    let set = load_dataset(cfg, data_dir.unwrap_or(&manifest.data_dir))?;
    let fingerprint = cfg.fingerprint();
    let window = cfg.window_spec();
    let evaluated = run_pool(jobs, &manifest.runs, |record: &RunRecord| -> Result<(RunResult, Option<Vec<f64>>)> {
        let spec = record.spec;
        if !record.is_ok() {
            return Ok((
                RunResult {
                    spec,
                    train_seconds: record.train_seconds,
                    report: None,
                },
                None,
            ));
        }
        let model = Mlp::load(&runs_dir.join(spec.rel_dir()).join(CHECKPOINT))?;
        let integrator = cfg.integrator(spec.cell.scheme);
        let outcome = evaluate_run(
            &model,
            &integrator,
            &set.samples[spec.sample].trajectory,
            &window,
            cfg.eval.horizon,
            &cfg.eval.probes,
            cfg.eval.strouhal.as_ref(),
        )?;
        let mut report = outcome.report;
        report.config_fingerprint = fingerprint.clone();
        let report_dir = out.join(REPORTS_DIR).join(spec.cell.label());
        create_dir(&report_dir)?;
        write_json(&report_dir.join(format!("s{:03}_r{}.json", spec.sample, spec.repeat)), &report)?;
        let representative = spec.sample == 0 && spec.repeat == 0;
        Ok((
            RunResult {
                spec,
                train_seconds: record.train_seconds,
                report: Some(report),
            },
            representative.then_some(outcome.final_prediction),
        ))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut finals: HashMap<Cell, Vec<f64>> = HashMap::new();
    let mut runs = Vec::with_capacity(evaluated.len());
    for (result, last) in evaluated {
        if let Some(last) = last {
            finals.insert(result.spec.cell, last);
        }
        runs.push(result);
    }
    let result = SweepResult::aggregate(&cfg.cells(), runs);

    create_dir(out)?;
    write_field_maps(cfg, &set.samples.first().map(|s| &s.trajectory), &finals, &out.join(FIELDS_DIR))?;
    copy_train_logs(&manifest, runs_dir, &out.join(TRAINLOGS_DIR))?;
    ar_surrogate::write_atomic(&out.join(SWEEP_CSV), result.sweep_csv()?.as_bytes())?;
    ar_surrogate::write_atomic(&out.join(TIMING_CSV), result.timing_csv()?.as_bytes())?;
    ar_surrogate::write_atomic(&out.join(RUNS_CSV), result.runs_csv()?.as_bytes())?;
    ar_surrogate::write_atomic(&out.join(MSE_CURVES_CSV), result.mse_curves_csv().as_bytes())?;
    Ok(result)
}

/// `x,y,truth,prediction` at the last scored step of sample 0, repeat 0.
fn write_field_maps(
    cfg: &ExperimentConfig,
    traj: &Option<&Trajectory>,
    finals: &HashMap<Cell, Vec<f64>>,
    dir: &Path,
) -> Result<()> {
    let Some(traj) = traj else {
        return Ok(());
    };
    if finals.is_empty() {
        return Ok(());
    }
    let test = build_windows(traj.n_snapshots(), &cfg.window_spec(), 1, Split::Test)?[0];
    let horizon = cfg.eval.horizon.unwrap_or(test.n_targets).min(test.n_targets);
    let truth = traj.snapshot(test.history_end() + horizon - 1);
    let grid = traj.grid();
    create_dir(dir)?;
    for cell in cfg.cells() {
        let Some(pred) = finals.get(&cell) else {
            continue;
        };
        let mut text = String::from("x,y,truth,prediction\n");
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.index(i, j);
                text.push_str(&format!("{},{},{:e},{:e}\n", grid.x(i), grid.y(j), truth[k], pred[k]));
            }
        }
        ar_surrogate::write_atomic(&dir.join(format!("{}.csv", cell.label())), text.as_bytes())?;
    }
    Ok(())
}

/// Training log of sample 0, repeat 0 for every cell that has one.
fn copy_train_logs(manifest: &RunsManifest, runs_dir: &Path, dir: &Path) -> Result<()> {
    let mut created = false;
    for record in manifest.runs.iter().filter(|r| r.is_ok() && r.spec.sample == 0 && r.spec.repeat == 0) {
        let src = runs_dir.join(record.spec.rel_dir()).join(TRAIN_LOG);
        let text = std::fs::read(&src).at(&src)?;
        if !created {
            create_dir(dir)?;
            created = true;
        }
        ar_surrogate::write_atomic(&dir.join(format!("{}.csv", record.spec.cell.label())), &text)?;
    }
    Ok(())
}
