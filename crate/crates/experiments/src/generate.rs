use std::path::Path;

use ar_surrogate::dataset::{generate_sample, read_trajectory_set, IcRanges, TrajectorySet};
use ar_surrogate::pde::{PdeKind, PdeParams, TemporalSpec};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{ExpError, Result};
use crate::layout::{DATASET_FILE, DATASET_MANIFEST};
use crate::seeds::digest_hex;
use crate::sweep::run_pool;
use crate::{create_dir, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub pde: PdeKind,
    pub n_samples: usize,
    pub nx: usize,
    pub ny: usize,
    pub domain_length: f64,
    pub temporal: TemporalSpec,
    pub seed: u64,
    pub initial_conditions: IcRanges,
    pub samples: Vec<SampleEntry>,
    /// SHA-256 of the trajectory file.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: usize,
    pub seed: u64,
    pub params: PdeParams,
}

/// Simulate the configured samples and write the trajectory file plus its
/// manifest into `out`.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<DatasetManifest> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let d = &cfg.dataset;
    let indices: Vec<u64> = (0..d.n_samples as u64).collect();
    let samples = run_pool(jobs, &indices, |&i| {
        generate_sample(d.pde, grid, &d.temporal, &d.initial_conditions, d.seed ^ i)
    })?
    .into_iter()
    .collect::<ar_surrogate::Result<Vec<_>>>()?;
    let set = TrajectorySet {
        grid,
        temporal: d.temporal,
        samples,
        seed: d.seed,
    };
    let bytes = set.to_bytes()?;
    create_dir(out)?;
    ar_surrogate::write_atomic(&out.join(DATASET_FILE), &bytes)?;
    let manifest = DatasetManifest {
        version: cfg.version,
        pde: d.pde,
        n_samples: d.n_samples,
        nx: d.nx,
        ny: d.ny,
        domain_length: d.domain_length,
        temporal: d.temporal,
        seed: d.seed,
        initial_conditions: d.initial_conditions.clone(),
        samples: set
            .samples
            .iter()
            .enumerate()
            .map(|(index, s)| SampleEntry {
                index,
                seed: s.seed,
                params: s.params,
            })
            .collect(),
        sha256: digest_hex(&bytes, 32),
    };
    write_json(&out.join(DATASET_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Read the trajectory file in `data_dir` and check it against `cfg`.
pub fn load_dataset(cfg: &ExperimentConfig, data_dir: &Path) -> Result<TrajectorySet> {
    let set = read_trajectory_set(&data_dir.join(DATASET_FILE), cfg.dataset.domain_length)?;
    let d = &cfg.dataset;
    if (set.grid.nx, set.grid.ny) != (d.nx, d.ny) {
        return Err(ExpError::Format(format!(
            "dataset grid {}x{} does not match config {}x{}",
            set.grid.nx, set.grid.ny, d.nx, d.ny
        )));
    }
    if set.temporal != d.temporal {
        return Err(ExpError::Format(format!(
            "dataset time axis {:?} does not match config {:?}",
            set.temporal, d.temporal
        )));
    }
    if set.samples.len() < d.n_samples {
        return Err(ExpError::Format(format!(
            "dataset holds {} samples, config asks for {}",
            set.samples.len(),
            d.n_samples
        )));
    }
    if let Some(s) = set.samples.iter().find(|s| s.params.kind != d.pde) {
        return Err(ExpError::Format(format!("dataset contains a {} sample, config is {}", s.params.kind, d.pde)));
    }
    Ok(set)
}
