//! Experiment runner behind the `rhpt` binary.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_balance, cmd_benchmark, cmd_generate, cmd_match, cmd_sensitivity};
pub use config::{ExperimentConfig, FieldProblem};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "rhpt", version, about = "Causal effect estimation by matching on binary tessellation sketches")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and write dataset.csv and manifest.json.
    Generate(DataArgs),
    /// Embed a dataset file and write its within-file matches.
    Match {
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[command(flatten)]
        tess: TessArgs,
    },
    /// Compare methods over replications; writes results.csv,
    /// timings.csv and summary.json.
    Benchmark {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        tess: TessArgs,
        /// Comma-separated method labels.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Spread of the RHPT ATE over tessellation seeds per β.
    Sensitivity {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        study: StudyArgs,
    },
    /// Propensity balance ψ of the sketches per β.
    Balance {
        /// Use this dataset (needs an `e` column) instead of drawing one.
        #[arg(long, value_name = "PATH")]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        study: StudyArgs,
    },
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TessArgs {
    #[arg(long)]
    pub beta_angular: Option<usize>,
    #[arg(long)]
    pub beta_shifted: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct StudyArgs {
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub beta_list: Option<Vec<usize>>,
    #[arg(long)]
    pub runs: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl DataArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set(&mut c.n, self.n);
        set(&mut c.dim, self.dim);
    }
}

impl TessArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set(&mut c.beta_angular, self.beta_angular);
        set(&mut c.beta_shifted, self.beta_shifted);
        if self.lambda.is_some() {
            c.lambda = self.lambda;
        }
    }
}

impl StudyArgs {
    fn apply(self, c: &mut ExperimentConfig) {
        set(&mut c.beta_list, self.beta_list);
        set(&mut c.runs_per_beta, self.runs);
    }
}

/// Loads the config file (if any) and applies global flags.
pub fn base_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut c = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    set(&mut c.master_seed, cli.seed);
    set(&mut c.output_dir, cli.out.clone());
    Ok(c)
}

/// Executes one parsed invocation and returns a short report.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let mut c = base_config(&cli)?;
    if cli.jobs == Some(0) {
        return Err(CliError::config("jobs", "must be at least 1"));
    }
    match cli.command {
        Command::Generate(data) => {
            data.apply(&mut c);
            let out = cmd_generate(&c)?;
            Ok(format!("wrote {} and {}", out.dataset.display(), out.manifest.display()))
        }
        Command::Match { dataset, tess } => {
            tess.apply(&mut c);
            let path = cmd_match(&c, &dataset)?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::Benchmark {
            data,
            tess,
            methods,
            replications,
        } => {
            data.apply(&mut c);
            tess.apply(&mut c);
            set(&mut c.methods, methods);
            set(&mut c.replications, replications);
            let out = cmd_benchmark(&c)?;
            let failed = out.rows.iter().filter(|r| r.outcome.is_err()).count();
            Ok(format!(
                "wrote {} ({} rows, {failed} failed), {} and {}",
                out.results.display(),
                out.rows.len(),
                out.timings.display(),
                out.summary.display()
            ))
        }
        Command::Sensitivity { data, study } => {
            data.apply(&mut c);
            study.apply(&mut c);
            let (_, path) = cmd_sensitivity(&c)?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::Balance { dataset, data, study } => {
            data.apply(&mut c);
            study.apply(&mut c);
            let (_, path) = cmd_balance(&c, dataset.as_deref())?;
            Ok(format!("wrote {}", path.display()))
        }
    }
}

/// The guide's command-line chapter, compiled and run as doc-tests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub struct GuideCli;
