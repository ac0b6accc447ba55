//! Subcommand implementations. Each takes a validated config and writes
//! its artifacts under `config.output_dir`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rhpt::evaluation::{balance_study, sensitivity_study, Summary};
use rhpt::matching::{match_within, transductive_ite, DistanceSpec, Representations};
use rhpt::seed::{derive_seed, Stream};
use rhpt::synthetic::DataSplit;
use rhpt::tessellation::default_lambda;
use rhpt::{
    evaluate_method, generate, BalanceDiagnostic, CausalDataset, EvaluationReport, Method,
    RhptEmbedder, SensitivityResult, TessellationParams,
};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const DATASET_FILE: &str = "dataset.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MATCHES_FILE: &str = "matches.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const BALANCE_FILE: &str = "balance.csv";

/// Seed of the dataset drawn for replication `r`.
pub fn dataset_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, Stream::Dataset, r as u64)
}

pub fn split_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, Stream::Split, r as u64)
}

/// Seed handed to every method in replication `r`.
pub fn method_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, Stream::Tessellation, r as u64)
}

fn out_path(config: &ExperimentConfig, file: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", config.output_dir.display())))?;
    Ok(config.output_dir.join(file))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<CausalDataset, CliError> {
    CausalDataset::load_csv(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub struct GenerateOutput {
    pub dataset: PathBuf,
    pub manifest: PathBuf,
}

/// Draws the replication-0 dataset and writes it with a manifest.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<GenerateOutput, CliError> {
    config.validate()?;
    let seed = dataset_seed(config.master_seed, 0);
    let dgp = config.dgp(seed);
    let ds = generate(&dgp)?;
    let dataset = out_path(config, DATASET_FILE)?;
    ds.save_csv(&dataset)?;
    let manifest = out_path(config, MANIFEST_FILE)?;
    write_json(
        &manifest,
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "master_seed": config.master_seed,
            "dataset_seed": seed,
            "rows": ds.n(),
            "dim": ds.dim(),
            "treated": ds.t.treated().len(),
            "dgp": dgp,
        }),
    )?;
    Ok(GenerateOutput { dataset, manifest })
}

/// Embeds every row of `dataset`, matches within the file and writes the
/// assignment with transductive ITEs.
pub fn cmd_match(config: &ExperimentConfig, dataset: &Path) -> Result<PathBuf, CliError> {
    config.validate()?;
    let ds = load_dataset(dataset)?;
    let x = if config.standardize {
        rhpt::pipeline::Standardizer::fit(ds.x.view()).apply(ds.x.view())
    } else {
        ds.x.clone()
    };
    let lambda = config.lambda.unwrap_or_else(|| default_lambda(x.view()));
    let params = TessellationParams::new(
        ds.dim(),
        config.beta_angular,
        config.beta_shifted,
        lambda,
        method_seed(config.master_seed, 0),
    )?;
    let sketches = RhptEmbedder::new(params)?.embed_batch(x.view())?;
    let m = match_within(Representations::Sketches(&sketches), &ds.t, &DistanceSpec::HAMMING)?;
    let ite = transductive_ite(&ds.y, &ds.t, &m)?;
    let path = out_path(config, MATCHES_FILE)?;
    let mut w = create(&path)?;
    m.write_csv(&mut w, Some(&ite))?;
    w.flush()?;
    Ok(path)
}

/// One method on one replication, or the reason it failed.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub method: Method,
    pub replication: usize,
    pub outcome: Result<EvaluationReport, String>,
}

pub struct BenchmarkOutput {
    pub rows: Vec<ResultRow>,
    pub results: PathBuf,
    pub timings: PathBuf,
    pub summary: PathBuf,
}

fn run_replication(config: &ExperimentConfig, methods: &[Method], r: usize) -> Vec<ResultRow> {
    let fail_all = |msg: String| {
        methods
            .iter()
            .map(|&method| ResultRow {
                method,
                replication: r,
                outcome: Err(msg.clone()),
            })
            .collect()
    };
    let ds = match generate(&config.dgp(dataset_seed(config.master_seed, r))) {
        Ok(ds) => ds,
        Err(e) => return fail_all(e.to_string()),
    };
    let split = match DataSplit::new(ds.n(), config.out_fraction, split_seed(config.master_seed, r)) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let settings = config.method_settings();
    let seed = method_seed(config.master_seed, r);
    methods
        .iter()
        .map(|&method| ResultRow {
            method,
            replication: r,
            outcome: evaluate_method(method, &ds, &split, &settings, seed, r).map_err(|e| e.to_string()),
        })
        .collect()
}

/// Every configured method on `replications` fresh datasets.
///
/// `results.csv` holds only seed-determined values so reruns are
/// byte-identical; wall times go to `timings.csv` and `summary.json`.
pub fn cmd_benchmark(config: &ExperimentConfig) -> Result<BenchmarkOutput, CliError> {
    config.validate()?;
    let methods = config.parsed_methods();
    let rows: Vec<ResultRow> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, &methods, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let results = out_path(config, RESULTS_FILE)?;
    let mut w = csv_writer(&results)?;
    w.write_record([
        "method",
        "replication",
        "within_eps_ate",
        "within_eps_ite",
        "out_eps_ate",
        "out_eps_pehe",
        "error",
    ])
    .map_err(csv_err)?;
    for row in &rows {
        let mut rec = vec![row.method.label().to_string(), row.replication.to_string()];
        match &row.outcome {
            Ok(r) => {
                rec.extend([r.within_eps_ate, r.within_eps_ite, r.out_eps_ate, r.out_eps_pehe].map(num));
                rec.push(String::new());
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), 4));
                rec.push(msg.clone());
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let timings = out_path(config, TIMINGS_FILE)?;
    let mut w = csv_writer(&timings)?;
    w.write_record(["method", "replication", "wall_time_seconds"]).map_err(csv_err)?;
    for row in &rows {
        if let Ok(r) = &row.outcome {
            w.write_record([row.method.label().to_string(), row.replication.to_string(), num(r.wall_time_seconds)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;

    let summary = out_path(config, SUMMARY_FILE)?;
    write_json(&summary, &benchmark_summary(config, &methods, &rows)?)?;
    Ok(BenchmarkOutput {
        rows,
        results,
        timings,
        summary,
    })
}

fn metric_summary(values: &[f64]) -> Result<serde_json::Value, CliError> {
    if values.is_empty() {
        return Ok(json!({ "mean": null, "stderr": null }));
    }
    let s = Summary::of(values)?;
    Ok(json!({ "mean": s.mean, "stderr": s.stderr }))
}

fn benchmark_summary(
    config: &ExperimentConfig,
    methods: &[Method],
    rows: &[ResultRow],
) -> Result<serde_json::Value, CliError> {
    let mut per_method = Vec::new();
    for &m in methods {
        let ok: Vec<&EvaluationReport> = rows
            .iter()
            .filter(|r| r.method == m)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        let failures = rows.iter().filter(|r| r.method == m && r.outcome.is_err()).count();
        let pick = |f: fn(&EvaluationReport) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
        let wall = pick(|r| r.wall_time_seconds);
        per_method.push(json!({
            "method": m.label(),
            "replications": ok.len(),
            "failures": failures,
            "within_eps_ate": metric_summary(&pick(|r| r.within_eps_ate))?,
            "within_eps_ite": metric_summary(&pick(|r| r.within_eps_ite))?,
            "out_eps_ate": metric_summary(&pick(|r| r.out_eps_ate))?,
            "out_eps_pehe": metric_summary(&pick(|r| r.out_eps_pehe))?,
            "wall_time_mean_seconds": if wall.is_empty() { None } else { Some(wall.iter().sum::<f64>() / wall.len() as f64) },
            "wall_time_total_seconds": wall.iter().sum::<f64>(),
        }));
    }
    Ok(json!({
        "master_seed": config.master_seed,
        "replications": config.replications,
        "methods": per_method,
    }))
}

fn aggregate_record(beta: usize, s: &Summary) -> Vec<String> {
    vec![
        "aggregate".into(),
        beta.to_string(),
        String::new(),
        String::new(),
        num(s.mean),
        num(s.std),
        num(s.ci95_low),
        num(s.ci95_high),
    ]
}

/// RHPT ATE spread per β on the replication-0 dataset and split.
pub fn cmd_sensitivity(config: &ExperimentConfig) -> Result<(Vec<SensitivityResult>, PathBuf), CliError> {
    config.validate()?;
    if config.runs_per_beta < 2 {
        return Err(CliError::config("runs_per_beta", "the sensitivity study needs at least 2 runs"));
    }
    let ds = generate(&config.dgp(dataset_seed(config.master_seed, 0)))?;
    let split = DataSplit::new(ds.n(), config.out_fraction, split_seed(config.master_seed, 0))?;
    let base = derive_seed(config.master_seed, Stream::Sensitivity, 0);
    let results = sensitivity_study(&ds, &split, &config.beta_list, config.runs_per_beta, base)?;

    let path = out_path(config, SENSITIVITY_FILE)?;
    let mut w = csv_writer(&path)?;
    w.write_record(["row", "beta", "run", "ate", "mean", "std", "ci95_low", "ci95_high"])
        .map_err(csv_err)?;
    for r in &results {
        for (run, ate) in r.ate_estimates.iter().enumerate() {
            let mut rec = vec!["run".to_string(), r.beta.to_string(), run.to_string(), num(*ate)];
            rec.extend(std::iter::repeat_n(String::new(), 4));
            w.write_record(&rec).map_err(csv_err)?;
        }
        let s = Summary::of(&r.ate_estimates)?;
        w.write_record(aggregate_record(r.beta, &s)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok((results, path))
}

/// ψ per `(β, run)`. Uses `dataset` when given, else the replication-0
/// draw. Aggregate rows are written for β values with at least two runs.
pub fn cmd_balance(
    config: &ExperimentConfig,
    dataset: Option<&Path>,
) -> Result<(Vec<BalanceDiagnostic>, PathBuf), CliError> {
    config.validate()?;
    let ds = match dataset {
        Some(p) => load_dataset(p)?,
        None => generate(&config.dgp(dataset_seed(config.master_seed, 0)))?,
    };
    ds.truth()?;
    let base = derive_seed(config.master_seed, Stream::Balance, 0);
    let rows = balance_study(&ds, &config.beta_list, config.runs_per_beta, base, &config.balance_logistic())?;

    let path = out_path(config, BALANCE_FILE)?;
    let mut w = csv_writer(&path)?;
    w.write_record(["row", "beta", "run", "psi", "mean", "std", "ci95_low", "ci95_high"])
        .map_err(csv_err)?;
    for &beta in &config.beta_list {
        let group: Vec<&BalanceDiagnostic> = rows.iter().filter(|r| r.beta == beta).collect();
        for r in &group {
            let mut rec = vec!["run".to_string(), beta.to_string(), r.run_id.to_string(), num(r.psi)];
            rec.extend(std::iter::repeat_n(String::new(), 4));
            w.write_record(&rec).map_err(csv_err)?;
        }
        if group.len() >= 2 {
            let psis: Vec<f64> = group.iter().map(|r| r.psi).collect();
            w.write_record(aggregate_record(beta, &Summary::of(&psis)?)).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok((rows, path))
}
