//! File names shared by the commands.

/// Trajectory set written by `generate`.
pub const DATASET_FILE: &str = "trajectories.arts";
/// Seeds and parameters of every generated sample.
pub const DATASET_MANIFEST: &str = "manifest.json";
/// Run list written by `train`.
pub const RUNS_MANIFEST: &str = "runs.json";
pub const CHECKPOINT: &str = "model.arpm";
pub const TRAIN_LOG: &str = "trainlog.csv";
pub const RUN_RECORD: &str = "run.json";

/// Per-cell aggregates written by `evaluate`.
pub const SWEEP_CSV: &str = "sweep.csv";
/// Per-cell wall-clock times, kept apart so `sweep.csv` is reproducible.
pub const TIMING_CSV: &str = "timing.csv";
pub const RUNS_CSV: &str = "runs.csv";
pub const MSE_CURVES_CSV: &str = "mse_curves.csv";
pub const REPORTS_DIR: &str = "reports";
pub const FIELDS_DIR: &str = "fields";
pub const TRAINLOGS_DIR: &str = "trainlogs";
pub const WEIGHTS_DIR: &str = "weights";
