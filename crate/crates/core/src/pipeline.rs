//! End-to-end estimation pipelines: fit a representation on the
//! within-sample units, match within and out of sample, and score the
//! resulting effect estimates against ground truth.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_logistic, fit_pca_with, JlProjection, LogisticHyper};
use crate::error::{Error, Result};
use crate::evaluation::{eps_ate, eps_ite, eps_pehe, time_section, EvaluationReport};
use crate::matching::{
    inductive_ite, match_opposite_within, match_out_of_sample, match_within, transductive_ite, DistanceSpec,
    MatchAssignment, Representations, TreatmentVector,
};
use crate::seed::{derive_seed, Stream};
use crate::sketch::BinarySketch;
use crate::synthetic::{CausalDataset, DataSplit};
use crate::tessellation::{default_lambda, RhptEmbedder, TessellationParams};

/// The matching methods that can be benchmarked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Rhpt,
    Raw,
    Pca,
    Jl,
    PropensityRaw,
    PropensityPca,
    Random,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Rhpt,
        Method::Raw,
        Method::Pca,
        Method::Jl,
        Method::PropensityRaw,
        Method::PropensityPca,
        Method::Random,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Rhpt => "rhpt",
            Method::Raw => "raw",
            Method::Pca => "pca",
            Method::Jl => "jl",
            Method::PropensityRaw => "propensity-raw",
            Method::PropensityPca => "propensity-pca",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| {
                let allowed: Vec<&str> = Method::ALL.iter().map(|m| m.label()).collect();
                Error::InvalidConfig(format!(
                    "unknown method `{s}`; expected one of {}",
                    allowed.join(", ")
                ))
            })
    }
}

/// Knobs shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub beta_angular: usize,
    pub beta_shifted: usize,
    /// Shift half-range; `None` means three times the largest within-sample
    /// row norm.
    pub lambda: Option<f64>,
    /// z-score covariates (using within-sample statistics) before embedding.
    pub standardize: bool,
    pub pca_components: usize,
    pub pca_standardize: bool,
    pub jl_dim: usize,
    pub logistic: LogisticHyper,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            beta_angular: 8192,
            beta_shifted: 8192,
            lambda: None,
            standardize: false,
            pca_components: 5,
            pca_standardize: false,
            jl_dim: 32,
            logistic: LogisticHyper::default(),
        }
    }
}

/// Per-feature z-scoring fitted on one matrix and applied to others.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: ndarray::Array1<f64>,
    scale: ndarray::Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x
            .mean_axis(Axis(0))
            .unwrap_or_else(|| ndarray::Array1::zeros(x.ncols()));
        let scale = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

/// Matched effect estimates for one method on one split.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub within: MatchAssignment,
    pub out: MatchAssignment,
    pub ite_within: Vec<f64>,
    pub ite_out: Vec<f64>,
}

fn estimate(
    within: Representations<'_>,
    out: Representations<'_>,
    t: &TreatmentVector,
    y: &[f64],
    dist: &DistanceSpec,
    out_dist: &DistanceSpec,
) -> Result<Estimates> {
    let mw = match_within(within, t, dist)?;
    let mo = match_out_of_sample(out, within, t, out_dist)?;
    Ok(Estimates {
        ite_within: transductive_ite(y, t, &mw)?,
        ite_out: inductive_ite(y, &mo)?,
        within: mw,
        out: mo,
    })
}

/// Embeds both sets with a fresh tessellation.
pub fn rhpt_sketches(
    x_within: ArrayView2<'_, f64>,
    x_out: ArrayView2<'_, f64>,
    settings: &MethodSettings,
    seed: u64,
) -> Result<(Vec<BinarySketch>, Vec<BinarySketch>)> {
    let (w, o) = if settings.standardize {
        let s = Standardizer::fit(x_within);
        (s.apply(x_within), s.apply(x_out))
    } else {
        (x_within.to_owned(), x_out.to_owned())
    };
    let lambda = settings.lambda.unwrap_or_else(|| default_lambda(w.view()));
    let params = TessellationParams::new(
        w.ncols(),
        settings.beta_angular,
        settings.beta_shifted,
        lambda,
        seed,
    )?;
    let embedder = RhptEmbedder::new(params)?;
    Ok((embedder.embed_batch(w.view())?, embedder.embed_batch(o.view())?))
}

/// Runs `method` on `split` and returns the effect estimates.
///
/// `seed` drives every random choice the method makes (tessellation,
/// projection, random draws).
pub fn run_estimates(
    method: Method,
    ds: &CausalDataset,
    split: &DataSplit,
    settings: &MethodSettings,
    seed: u64,
) -> Result<Estimates> {
    let within = ds.subset(&split.within_idx)?;
    let x_out = ds.x.select(Axis(0), &split.out_idx);
    let (xw, t, y) = (within.x.view(), &within.t, &within.y[..]);
    match method {
        Method::Rhpt => {
            let (sw, so) = rhpt_sketches(xw, x_out.view(), settings, derive_seed(seed, Stream::Tessellation, 0))?;
            let d = DistanceSpec::HAMMING;
            estimate(Representations::Sketches(&sw), Representations::Sketches(&so), t, y, &d, &d)
        }
        Method::Raw => {
            let d = DistanceSpec::EUCLIDEAN;
            estimate(Representations::Vectors(xw), Representations::Vectors(x_out.view()), t, y, &d, &d)
        }
        Method::Pca => {
            let k = settings.pca_components.min(xw.nrows()).min(xw.ncols());
            let pca = fit_pca_with(xw, k, settings.pca_standardize)?;
            let (zw, zo) = (pca.project(xw)?, pca.project(x_out.view())?);
            let d = DistanceSpec::EUCLIDEAN;
            estimate(Representations::Vectors(zw.view()), Representations::Vectors(zo.view()), t, y, &d, &d)
        }
        Method::Jl => {
            let jl = JlProjection::new(xw.ncols(), settings.jl_dim, derive_seed(seed, Stream::Projection, 0))?;
            let (zw, zo) = (jl.project(xw)?, jl.project(x_out.view())?);
            let d = DistanceSpec::EUCLIDEAN;
            estimate(Representations::Vectors(zw.view()), Representations::Vectors(zo.view()), t, y, &d, &d)
        }
        Method::PropensityRaw | Method::PropensityPca => {
            let (fw, fo) = if method == Method::PropensityPca {
                let k = settings.pca_components.min(xw.nrows()).min(xw.ncols());
                let pca = fit_pca_with(xw, k, settings.pca_standardize)?;
                (pca.project(xw)?, pca.project(x_out.view())?)
            } else {
                (xw.to_owned(), x_out.clone())
            };
            let model = fit_logistic(fw.view(), t, &settings.logistic)?;
            let ew = model.predict_propensity(fw.view())?.to_vec();
            let eo = model.predict_propensity(fo.view())?.to_vec();
            let d = DistanceSpec::SCALAR_ABSOLUTE;
            estimate(Representations::Scalars(&ew), Representations::Scalars(&eo), t, y, &d, &d)
        }
        Method::Random => {
            let s = derive_seed(seed, Stream::RandomMatch, 0);
            let placeholder_w = vec![0.0; xw.nrows()];
            let placeholder_o = vec![0.0; x_out.nrows()];
            estimate(
                Representations::Scalars(&placeholder_w),
                Representations::Scalars(&placeholder_o),
                t,
                y,
                &DistanceSpec::random(s),
                &DistanceSpec::random(derive_seed(s, Stream::RandomMatch, 1)),
            )
        }
    }
}

/// Runs `method`, times it, and scores it against the noiseless truth.
pub fn evaluate_method(
    method: Method,
    ds: &CausalDataset,
    split: &DataSplit,
    settings: &MethodSettings,
    seed: u64,
    replication_id: usize,
) -> Result<EvaluationReport> {
    let ite_true = ds.ite_true()?;
    let timed = time_section(method.label(), || run_estimates(method, ds, split, settings, seed));
    let est = timed.value.map_err(|e| e.annotate(format!("method {method}")))?;
    let truth_w: Vec<f64> = split.within_idx.iter().map(|&i| ite_true[i]).collect();
    let truth_o: Vec<f64> = split.out_idx.iter().map(|&i| ite_true[i]).collect();
    Ok(EvaluationReport {
        method_name: method.label().to_string(),
        replication_id,
        within_eps_ate: eps_ate(&est.ite_within, &truth_w)?,
        within_eps_ite: eps_ite(&est.ite_within, &truth_w)?,
        out_eps_ate: eps_ate(&est.ite_out, &truth_o)?,
        out_eps_pehe: eps_pehe(&est.ite_out, &truth_o)?,
        wall_time_seconds: timed.seconds,
    })
}

/// Within-sample ATE from RHPT matching on `x` alone (no held-out units).
pub fn rhpt_within_ate(
    x: ArrayView2<'_, f64>,
    t: &TreatmentVector,
    y: &[f64],
    params: TessellationParams,
) -> Result<f64> {
    let embedder = RhptEmbedder::new(params)?;
    let sketches = embedder.embed_batch(x)?;
    let m = match_opposite_within(Representations::Sketches(&sketches), t, &DistanceSpec::HAMMING)?;
    if y.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: t.len(),
        });
    }
    let ite: Vec<f64> = m
        .iter()
        .enumerate()
        .map(|(i, &j)| if t.is_treated(i) { y[i] - y[j] } else { y[j] - y[i] })
        .collect();
    crate::matching::ate(&ite)
}
