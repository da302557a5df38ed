//! Command-line front end for `distforest`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 fitting or
//! evaluation error.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ModelArgs, ModelKind, RunConfig};
pub use error::{CliError, CliResult, ExitClass};

#[derive(Debug, Parser)]
#[command(name = "distforest", version, about = "Distributional regression forests for censored responses")]
pub struct Cli {
    /// Worker threads for forest growth, prediction and cross-validation
    /// (0 uses every available core).
    #[arg(long, global = true, env = "DISTFOREST_WORKERS", default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write its archive.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        /// Training data file.
        #[arg(long)]
        data: PathBuf,
        /// Archive to write.
        #[arg(long)]
        out: PathBuf,
        /// Store forests without leaf membership (smaller, cannot predict).
        #[arg(long)]
        slim: bool,
    },
    /// Predict distribution parameters, point mass and quantiles.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Schema for the data file [default: the one stored in the archive]
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Output file [default: standard output]
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
        quantiles: Vec<f64>,
    },
    /// Score a model on held-out data.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Archive of a reference model for the skill score.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Randomized PIT draws for the calibration check (0 skips it).
        #[arg(long, default_value_t = 1)]
        residual_draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write per-observation CRPS and PIT values here.
        #[arg(long)]
        per_obs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated grouped K-fold cross-validation of several model kinds.
    Cv {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        /// Model kinds to compare.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "forest,intercept")]
        models: Vec<ModelKind>,
        /// Reference kind for the skill score; must be among `--models`.
        #[arg(long, value_enum, default_value_t = ModelKind::Intercept)]
        reference: ModelKind,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 7)]
        folds: usize,
        /// Seed of the fold assignment.
        #[arg(long, default_value_t = 1)]
        cv_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Permutation importance of every covariate on held-out data.
    Importance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        permutations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a scenario file.
    Simulate {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Data file to write.
        #[arg(long)]
        out: PathBuf,
        /// Where to write the schema that reads the data back.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot start {} workers: {e}", cli.workers)))?;
    match cli.command {
        Command::Fit { model, data, out, slim } => commands::fit(&RunConfig::from_args(&model)?, &data, &out, slim),
        Command::Predict {
            model,
            data,
            schema,
            out,
            quantiles,
        } => commands::predict(&model, &data, schema.as_deref(), out.as_deref(), &quantiles),
        Command::Evaluate {
            model,
            data,
            schema,
            reference,
            residual_draws,
            seed,
            per_obs,
            out,
        } => commands::evaluate(&commands::EvaluateArgs {
            model: &model,
            data: &data,
            schema: schema.as_deref(),
            reference: reference.as_deref(),
            residual_draws,
            seed,
            per_obs: per_obs.as_deref(),
            out: out.as_deref(),
        }),
        Command::Cv {
            model,
            data,
            models,
            reference,
            repetitions,
            folds,
            cv_seed,
            out,
        } => commands::cv(&commands::CvArgs {
            config: &RunConfig::from_args(&model)?,
            data: &data,
            models: &models,
            reference,
            repetitions,
            folds,
            seed: cv_seed,
            out: out.as_deref(),
        }),
        Command::Importance {
            model,
            data,
            schema,
            permutations,
            seed,
            out,
        } => commands::importance(&model, &data, schema.as_deref(), permutations, seed, out.as_deref()),
        Command::Simulate {
            scenario,
            out,
            schema_out,
        } => commands::simulate(&scenario, &out, schema_out.as_deref()),
    }
}
