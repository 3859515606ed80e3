//! Experiment configuration and its JSON file form.

use std::path::{Path, PathBuf};

use ar_surrogate::dataset::{IcRanges, WindowSpec};
use ar_surrogate::grid::GridSpec;
use ar_surrogate::metrics::StrouhalConfig;
use ar_surrogate::nn::{Activation, AdamConfig, MlpSpec};
use ar_surrogate::pde::{PdeKind, TemporalSpec};
use ar_surrogate::schemes::{Integrator, SchemeKind};
use ar_surrogate::training::{NoiseConfig, RolloutPlan, TrainConfig};
use ar_surrogate::weighting::{Strategy, VanillaWeights};
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, IoContext, Result};
use crate::sweep::Cell;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub eval: EvalSection,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub pde: PdeKind,
    pub n_samples: usize,
    pub nx: usize,
    pub ny: usize,
    /// Side of the periodic square `[-L/2, L/2]^2`.
    pub domain_length: f64,
    pub temporal: TemporalSpec,
    /// Master seed: dataset sample seeds and per-run seeds derive from it.
    pub seed: u64,
    pub initial_conditions: IcRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: Activation,
    pub adam: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub history_len: usize,
    pub split_fraction: f64,
    pub schemes: Vec<SchemeKind>,
    pub strategies: Vec<Strategy>,
    /// Rollout depth used by every strategy other than `single`.
    pub steps: usize,
    pub vanilla: VanillaWeights,
    pub sharpness: f64,
    /// Initial learnable exponent parameter; -0.5 starts `k_e` at about 0.52.
    pub k_init: f64,
    pub noise_std: f64,
    /// Seeds per (sample, cell).
    pub repeats: usize,
    /// Random grid points per window batch; `null` trains on every point.
    pub points_per_batch: Option<usize>,
    pub target_scale: f64,
    /// Adams-Euler runs reuse the forward-Euler training of the same
    /// (strategy, sample, repeat) instead of training their own model.
    pub share_derivative_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Rollout steps scored; `null` uses the whole test segment.
    pub horizon: Option<usize>,
    /// Flat grid indices recorded as time series.
    pub probes: Vec<usize>,
    pub strouhal: Option<StrouhalConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            eval: EvalSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            pde: PdeKind::Burgers,
            n_samples: 10,
            nx: 64,
            ny: 64,
            domain_length: 2.0,
            temporal: TemporalSpec {
                t_start: 0.0,
                t_end: 2.0,
                n_snapshots: 500,
            },
            seed: 0,
            initial_conditions: IcRanges::default(),
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let spec = MlpSpec::forecaster(1);
        Self {
            hidden_dims: spec.hidden_dims,
            hidden_activation: spec.hidden_activation,
            adam: AdamConfig::default(),
        }
    }
}

impl Default for TrainingSection {
    fn default() -> Self {
        let w = WindowSpec::default();
        Self {
            epochs: 250,
            history_len: w.history_len,
            split_fraction: w.split_fraction,
            schemes: SchemeKind::ALL.to_vec(),
            strategies: vec![Strategy::Single],
            steps: 4,
            vanilla: VanillaWeights::default(),
            sharpness: 10.0,
            k_init: -0.5,
            noise_std: 0.0,
            repeats: 3,
            points_per_batch: None,
            target_scale: 1.0,
            share_derivative_model: false,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            horizon: None,
            probes: Vec::new(),
            strouhal: None,
        }
    }
}

impl ExperimentConfig {
    /// Reduced-compute preset for single-core sweeps: 40 epochs with the
    /// learning-rate decay interval scaled to match, and 64 random grid
    /// points per window batch.
    pub fn desk_scale(pde: PdeKind) -> Self {
        let mut cfg = Self::default();
        cfg.dataset.pde = pde;
        cfg.training.epochs = 40;
        cfg.training.points_per_batch = Some(64);
        cfg.model.adam.decay_every = 10;
        cfg.training.schemes = vec![SchemeKind::Direct, SchemeKind::ForwardEuler, SchemeKind::AdamsEuler];
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| ExpError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ar_surrogate::write_atomic(path, self.to_json().as_bytes()).map_err(Into::into)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(ExpError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.grid()?;
        self.dataset.temporal.validate()?;
        let t = &self.training;
        if t.schemes.is_empty() || t.strategies.is_empty() {
            return Err(ExpError::Config("schemes and strategies must be non-empty".into()));
        }
        if t.repeats == 0 {
            return Err(ExpError::Config("repeats must be at least 1".into()));
        }
        if t.strategies.iter().any(|s| *s != Strategy::Single) && t.steps < 2 {
            return Err(ExpError::Config("multi-step strategies need steps >= 2".into()));
        }
        if !(t.noise_std >= 0.0 && t.target_scale > 0.0 && t.sharpness > 0.0) {
            return Err(ExpError::Config(
                "noise_std must be >= 0, target_scale and sharpness > 0".into(),
            ));
        }
        if self.model.hidden_dims.contains(&0) {
            return Err(ExpError::Config("hidden layer widths must be positive".into()));
        }
        let n = self.dataset.temporal.n_snapshots;
        let w = self.window_spec();
        let split = w.split_index(n);
        let deepest = self.cells().iter().map(|c| c.m).max().unwrap_or(1);
        if w.history_len + deepest > split || split + 1 > n || w.history_len >= split {
            return Err(ExpError::Config(format!(
                "{n} snapshots with split {split} leave no room for history {} and M = {deepest}",
                w.history_len
            )));
        }
        if let Some(h) = self.eval.horizon {
            if h == 0 || h > n - split {
                return Err(ExpError::Config(format!("horizon {h} outside 1..={}", n - split)));
            }
        }
        let n_points = self.dataset.nx * self.dataset.ny;
        if let Some(&p) = self.eval.probes.iter().find(|&&p| p >= n_points) {
            return Err(ExpError::Config(format!("probe {p} outside the {n_points}-point grid")));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let half = self.dataset.domain_length / 2.0;
        Ok(GridSpec::new(self.dataset.nx, self.dataset.ny, -half, half, -half, half)?)
    }

    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            history_len: self.training.history_len,
            split_fraction: self.training.split_fraction,
        }
    }

    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.training.history_len,
            hidden_dims: self.model.hidden_dims.clone(),
            output_dim: 1,
            hidden_activation: self.model.hidden_activation,
        }
    }

    pub fn integrator(&self, scheme: SchemeKind) -> Integrator {
        Integrator::new(scheme, self.dataset.temporal.snapshot_dt()).with_target_scale(self.training.target_scale)
    }

    /// Scheme whose update rule and seed a run of `scheme` trains with.
    pub fn training_scheme(&self, scheme: SchemeKind) -> SchemeKind {
        if self.training.share_derivative_model && scheme == SchemeKind::AdamsEuler {
            SchemeKind::ForwardEuler
        } else {
            scheme
        }
    }

    pub fn rollout_plan(&self, strategy: Strategy) -> RolloutPlan {
        let t = &self.training;
        let steps = if strategy == Strategy::Single { 1 } else { t.steps };
        RolloutPlan {
            steps,
            strategy,
            vanilla: t.vanilla,
            sharpness: t.sharpness,
            k_init: t.k_init,
            noise: (t.noise_std > 0.0).then_some(NoiseConfig { std: t.noise_std }),
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            adam: self.model.adam,
            points_per_batch: self.training.points_per_batch,
            seed,
        }
    }

    /// Requested cells in scheme-major order.
    pub fn cells(&self) -> Vec<Cell> {
        let pde = self.dataset.pde;
        self.training
            .schemes
            .iter()
            .flat_map(|&scheme| {
                self.training.strategies.iter().map(move |&strategy| Cell {
                    pde,
                    scheme,
                    strategy,
                    m: if strategy == Strategy::Single { 1 } else { self.training.steps },
                })
            })
            .collect()
    }

    /// Short stable digest of the JSON form, embedded in reports.
    pub fn fingerprint(&self) -> String {
        crate::seeds::digest_hex(self.to_json().as_bytes(), 8)
    }
}
