use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ar_experiments::evaluate::cmd_evaluate;
use ar_experiments::generate::cmd_generate;
use ar_experiments::report::cmd_report;
use ar_experiments::train::cmd_train;
use ar_experiments::ExperimentConfig;
use ar_surrogate::pde::PdeKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arsim", version, about = "Train and compare auto-regressive PDE surrogates")]
struct Cli {
    /// Upper bound on concurrently executing runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides `dataset.seed`, from which every sample and run seed derives.
    #[arg(long, global = true)]
    master_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the dataset described by the config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per (scheme, strategy, sample, repeat).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll trained models out over the test segment and tabulate.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dataset directory; defaults to the one recorded at training time.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Render SVG figures and CSV tables from evaluation results.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a config file with default values.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
        /// Use the reduced-compute preset for this PDE instead of the full defaults.
        #[arg(long)]
        desk: Option<PdeKind>,
    },
}

fn load_config(path: &Path, master_seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = master_seed {
        cfg.dataset.seed = seed;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = load_config(&config, cli.master_seed)?;
            let manifest = cmd_generate(&cfg, &out, jobs)?;
            println!(
                "wrote {} {} samples ({}x{}, {} snapshots) to {}",
                manifest.n_samples,
                manifest.pde,
                manifest.nx,
                manifest.ny,
                manifest.temporal.n_snapshots,
                out.display()
            );
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(&config, cli.master_seed)?;
            let manifest = cmd_train(&cfg, &data, &out, jobs)?;
            println!(
                "trained {} runs ({} with non-finite loss) into {}",
                manifest.runs.len(),
                manifest.n_failed(),
                out.display()
            );
        }
        Command::Evaluate { config, runs, out, data } => {
            let cfg = load_config(&config, cli.master_seed)?;
            let sweep = cmd_evaluate(&cfg, &runs, data.as_deref(), &out, jobs)?;
            for c in &sweep.cells {
                println!(
                    "{:<40} mse {:.4e} ± {:.2e}  runs {}  failed {}  diverged {}",
                    c.cell.label(),
                    c.mse_mean,
                    c.mse_std,
                    c.n_runs,
                    c.n_failed,
                    c.n_diverged
                );
            }
        }
        Command::Report { results, out } => {
            let outcome = cmd_report(&results, &out)?;
            println!("wrote {} files to {}", outcome.files.len(), out.display());
        }
        Command::InitConfig { out, desk } => {
            let mut cfg = desk.map_or_else(ExperimentConfig::default, ExperimentConfig::desk_scale);
            if let Some(seed) = cli.master_seed {
                cfg.dataset.seed = seed;
            }
            cfg.save(&out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
