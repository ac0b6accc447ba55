//! Error metrics, the propensity balance diagnostic ψ, the β-sensitivity
//! study and wall-time accounting.
//!
//! Metric conventions:
//!
//! | metric | formula |
//! |---|---|
//! | `eps_ate` | `|mean(ite_hat) - mean(ite_true)|` |
//! | `eps_ite` | `sqrt(mean((ite_hat - ite_true)²))` |
//! | `eps_pehe` | same as `eps_ite`, on out-of-sample inductive estimates |
//! | ψ | `mean(|e_true - e_hat|)` |
//!
//! Confidence intervals are normal approximations, `mean ± 1.96·s/√R`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_logistic_sketches, LogisticHyper};
use crate::error::{Error, Result};
use crate::matching::{ate, TreatmentVector};
use crate::pipeline::rhpt_within_ate;
use crate::seed::{derive_seed, Stream};
use crate::sketch::BinarySketch;
use crate::synthetic::{CausalDataset, DataSplit};
use crate::tessellation::{default_lambda, RhptEmbedder, TessellationParams};

/// z-value of the two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn eps_ate(ite_hat: &[f64], ite_true: &[f64]) -> Result<f64> {
    check_pair(ite_hat, ite_true)?;
    Ok((ate(ite_hat)? - ate(ite_true)?).abs())
}

pub fn eps_ite(ite_hat: &[f64], ite_true: &[f64]) -> Result<f64> {
    check_pair(ite_hat, ite_true)?;
    let sq: f64 = ite_hat
        .iter()
        .zip(ite_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / ite_hat.len() as f64).sqrt())
}

pub fn eps_pehe(ite_hat_out: &[f64], ite_true_out: &[f64]) -> Result<f64> {
    eps_ite(ite_hat_out, ite_true_out)
}

/// One method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method_name: String,
    pub replication_id: usize,
    pub within_eps_ate: f64,
    pub within_eps_ite: f64,
    pub out_eps_ate: f64,
    pub out_eps_pehe: f64,
    pub wall_time_seconds: f64,
}

/// Mean, sample standard deviation and 95% interval of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub std: f64,
    /// `std / √n`; `None` for a single value.
    pub stderr: Option<f64>,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len();
        let mean = ate(values)?;
        // A constant sample must report exactly zero spread.
        let std = if n < 2 || values.iter().all(|&v| v == values[0]) {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        let stderr = (n > 1).then(|| std / (n as f64).sqrt());
        let half = Z95 * stderr.unwrap_or(0.0);
        // The compensated mean can land an ulp outside the sample range.
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mean = mean.clamp(lo, hi);
        Ok(Self {
            n,
            mean,
            std,
            stderr,
            ci95_low: mean - half,
            ci95_high: mean + half,
        })
    }
}

/// ψ for one tessellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceDiagnostic {
    pub beta: usize,
    pub run_id: usize,
    pub psi: f64,
}

/// `mean(|e_true - e_hat|)`.
pub fn psi_from_predictions(e_true: &[f64], e_hat: &[f64]) -> Result<f64> {
    check_pair(e_true, e_hat)?;
    for (i, &p) in e_true.iter().chain(e_hat).enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParams(format!(
                "probability {p} at position {} is outside [0, 1]",
                i % e_true.len()
            )));
        }
    }
    let total: f64 = e_true.iter().zip(e_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok((total / e_true.len() as f64).clamp(0.0, 1.0))
}

/// Fits a logistic model of `t` on the sketch bits and compares its
/// propensities to `e_true`.
pub fn balance_psi(
    e_true: &[f64],
    sketches: &[BinarySketch],
    t: &TreatmentVector,
    hyper: &LogisticHyper,
    beta: usize,
    run_id: usize,
) -> Result<BalanceDiagnostic> {
    if e_true.len() != sketches.len() || t.len() != sketches.len() {
        return Err(Error::LengthMismatch {
            left: e_true.len(),
            right: sketches.len(),
        });
    }
    let model = fit_logistic_sketches(sketches, t, hyper)?;
    let e_hat = model.predict_sketches(sketches)?;
    let psi = psi_from_predictions(e_true, e_hat.as_slice().expect("contiguous"))?;
    Ok(BalanceDiagnostic { beta, run_id, psi })
}

/// Solver settings used by the balance study. Short fits keep the
/// comparison about what the sketch exposes rather than how far the
/// optimizer overfits thousands of bits.
pub fn balance_hyper() -> LogisticHyper {
    LogisticHyper {
        max_epochs: 200,
        standardize: false,
        ..LogisticHyper::default()
    }
}

/// Seed of the tessellation for run `run` at total size `beta`.
pub fn study_seed(base_seed: u64, beta: usize, run: usize) -> u64 {
    derive_seed(
        derive_seed(base_seed, Stream::Sensitivity, beta as u64),
        Stream::Tessellation,
        run as u64,
    )
}

/// ψ for every `(β, run)` on the whole of `ds`, sorted by β then run.
pub fn balance_study(
    ds: &CausalDataset,
    beta_list: &[usize],
    runs: usize,
    base_seed: u64,
    hyper: &LogisticHyper,
) -> Result<Vec<BalanceDiagnostic>> {
    if runs == 0 || beta_list.is_empty() {
        return Err(Error::InvalidParams("balance study needs β values and runs".into()));
    }
    let e_true = &ds.truth()?.e;
    let lambda = default_lambda(ds.x.view());
    let jobs: Vec<(usize, usize)> = beta_list
        .iter()
        .flat_map(|&b| (0..runs).map(move |r| (b, r)))
        .collect();
    jobs.par_iter()
        .map(|&(beta, run)| {
            let go = || -> Result<BalanceDiagnostic> {
                let params = TessellationParams::with_total(ds.dim(), beta, lambda, study_seed(base_seed, beta, run))?;
                let sketches = RhptEmbedder::new(params)?.embed_batch(ds.x.view())?;
                balance_psi(e_true, &sketches, &ds.t, hyper, beta, run)
            };
            go().map_err(|e| e.annotate(format!("beta {beta}, run {run}")))
        })
        .collect()
}

/// Spread of the RHPT ATE over independent tessellations at one β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub beta: usize,
    pub ate_estimates: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl SensitivityResult {
    pub fn from_estimates(beta: usize, ate_estimates: Vec<f64>) -> Result<Self> {
        let s = Summary::of(&ate_estimates)?;
        Ok(Self {
            beta,
            mean: s.mean,
            std: s.std,
            ci95_low: s.ci95_low,
            ci95_high: s.ci95_high,
            ate_estimates,
        })
    }
}

/// Within-sample RHPT ATE, `runs` times per β with [`study_seed`] seeds.
/// The dataset and split stay fixed; only the tessellation changes.
pub fn sensitivity_study(
    ds: &CausalDataset,
    split: &DataSplit,
    beta_list: &[usize],
    runs: usize,
    base_seed: u64,
) -> Result<Vec<SensitivityResult>> {
    sensitivity_study_with(ds, split, beta_list, runs, |beta, run| {
        study_seed(base_seed, beta, run)
    })
}

/// [`sensitivity_study`] with caller-chosen tessellation seeds.
pub fn sensitivity_study_with<F>(
    ds: &CausalDataset,
    split: &DataSplit,
    beta_list: &[usize],
    runs: usize,
    seed_for: F,
) -> Result<Vec<SensitivityResult>>
where
    F: Fn(usize, usize) -> u64 + Sync,
{
    if runs < 2 {
        return Err(Error::InvalidParams(format!("sensitivity needs at least 2 runs, got {runs}")));
    }
    if beta_list.is_empty() {
        return Err(Error::InvalidParams("sensitivity needs at least one β".into()));
    }
    let within = ds.subset(&split.within_idx)?;
    let lambda = default_lambda(within.x.view());
    beta_list
        .iter()
        .map(|&beta| {
            let estimates = (0..runs)
                .into_par_iter()
                .map(|run| {
                    let go = || -> Result<f64> {
                        let params = TessellationParams::with_total(within.dim(), beta, lambda, seed_for(beta, run))?;
                        rhpt_within_ate(within.x.view(), &within.t, &within.y, params)
                    };
                    go().map_err(|e| e.annotate(format!("beta {beta}, run {run}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            SensitivityResult::from_estimates(beta, estimates)
        })
        .collect()
}

/// A value together with the wall time spent producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Timed<T> {
    pub label: String,
    pub value: T,
    pub seconds: f64,
}

/// Runs `thunk` and measures it with a monotonic clock.
pub fn time_section<T>(label: &str, thunk: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = thunk();
    Timed {
        label: label.to_string(),
        value,
        seconds: start.elapsed().as_secs_f64(),
    }
}
