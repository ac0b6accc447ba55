//! Synthetic causal datasets with known propensities and noiseless potential
//! outcomes, CSV I/O, and the within/out-of-sample split.
//!
//! The generator is a latent factor model. For unit `i`:
//!
//! ```text
//! z_i ~ N(0, I_L)                      L = latent_dim
//! x_i = W z_i + 0.1 ε_i                ε_i ~ N(0, I_d), W_jk ~ N(0, 1/L)
//! u_i ~ N(0, 1)                        hidden, never part of x
//! κ   = ln(hidden_confounding)
//! e_i = clip(σ(α (⟨w_e, z_i⟩/√L + κ u_i)), c, 1 - c)
//! T_i ~ Bernoulli(e_i)
//! μ0_i = ⟨w_y, z_i⟩ + sin(⟨w_s, z_i⟩) + 2κ u_i
//! μ1_i = μ0_i + effect_scale · (1 + ⟨w_τ, z_i⟩² / L)
//! Y_i = μ_{T_i} + N(0, σ²)
//! ```
//!
//! `W`, `w_e`, `w_y`, `w_s` and `w_τ` (standard normal entries) are drawn
//! from one seed stream and the per-unit quantities from another, so the
//! weights are a fixed function of the seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::TreatmentVector;
use crate::seed::{derive_seed, rng_from_seed, Stream};

/// Fraction of units held out for out-of-sample evaluation.
pub const DEFAULT_OUT_FRACTION: f64 = 0.1;

/// Generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub dim: usize,
    pub latent_dim: usize,
    /// α: scale of the propensity logit.
    pub propensity_sharpness: f64,
    /// Propensities are clipped to `[clip, 1 - clip]`.
    pub positivity_clip: f64,
    pub outcome_noise_sd: f64,
    pub effect_scale: f64,
    /// 1 means no hidden confounding.
    pub hidden_confounding: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            n: 3000,
            dim: 300,
            latent_dim: 8,
            propensity_sharpness: 2.0,
            positivity_clip: 0.05,
            outcome_noise_sd: 1.0,
            effect_scale: 1.0,
            hidden_confounding: 1.0,
            seed: 0,
        }
    }
}

impl DgpConfig {
    /// Every violated constraint, as `(field, message)` pairs.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.n < 2 {
            out.push(("n", format!("must be at least 2, got {}", self.n)));
        }
        if self.dim == 0 {
            out.push(("dim", "must be positive".to_string()));
        }
        if self.latent_dim == 0 || self.latent_dim > self.dim {
            out.push((
                "latent_dim",
                format!("must be in 1..=dim ({}), got {}", self.dim, self.latent_dim),
            ));
        }
        if !(self.propensity_sharpness > 0.0 && self.propensity_sharpness.is_finite()) {
            out.push(("propensity_sharpness", "must be positive".to_string()));
        }
        if !(self.positivity_clip > 0.0 && self.positivity_clip < 0.5) {
            out.push(("positivity_clip", "must lie in (0, 0.5)".to_string()));
        }
        if !(self.outcome_noise_sd >= 0.0 && self.outcome_noise_sd.is_finite()) {
            out.push(("outcome_noise_sd", "must be non-negative".to_string()));
        }
        if !self.effect_scale.is_finite() {
            out.push(("effect_scale", "must be finite".to_string()));
        }
        if !(self.hidden_confounding >= 1.0 && self.hidden_confounding.is_finite()) {
            out.push(("hidden_confounding", "must be at least 1".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().first() {
            None => Ok(()),
            Some((field, msg)) => Err(Error::InvalidConfig(format!("{field}: {msg}"))),
        }
    }
}

/// Quantities only known for simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub e: Vec<f64>,
}

impl GroundTruth {
    pub fn ite(&self) -> Vec<f64> {
        self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b).collect()
    }
}

/// Covariates, treatments and factual outcomes, with ground truth when
/// available.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalDataset {
    pub x: Array2<f64>,
    pub t: TreatmentVector,
    pub y: Vec<f64>,
    pub truth: Option<GroundTruth>,
}

impl CausalDataset {
    pub fn new(x: Array2<f64>, t: TreatmentVector, y: Vec<f64>, truth: Option<GroundTruth>) -> Result<Self> {
        let n = x.nrows();
        let mut lens = vec![t.len(), y.len()];
        if let Some(g) = &truth {
            lens.extend([g.mu0.len(), g.mu1.len(), g.e.len()]);
        }
        if let Some(&bad) = lens.iter().find(|&&l| l != n) {
            return Err(Error::LengthMismatch { left: n, right: bad });
        }
        Ok(Self { x, t, y, truth })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn truth(&self) -> Result<&GroundTruth> {
        self.truth.as_ref().ok_or(Error::MissingGroundTruth("e"))
    }

    /// True individual effects `μ1 - μ0`.
    pub fn ite_true(&self) -> Result<Vec<f64>> {
        self.truth
            .as_ref()
            .map(GroundTruth::ite)
            .ok_or(Error::MissingGroundTruth("mu0"))
    }

    /// Rows `idx`, in order. Fails if the subset lacks an arm.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            x: self.x.select(ndarray::Axis(0), idx),
            t: self.t.subset(idx)?,
            y: pick(&self.y),
            truth: self.truth.as_ref().map(|g| GroundTruth {
                mu0: pick(&g.mu0),
                mu1: pick(&g.mu1),
                e: pick(&g.e),
            }),
        })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_csv(BufWriter::new(file))
    }

    /// Header `x0,…,x{d-1},t,y[,mu0,mu1,e]`; floats in shortest round-trip
    /// decimal form.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        header.extend(["t".into(), "y".into()]);
        if self.truth.is_some() {
            header.extend(["mu0".into(), "mu1".into(), "e".into()]);
        }
        w.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            rec.clear();
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(u8::from(self.t.is_treated(i)).to_string());
            rec.push(self.y[i].to_string());
            if let Some(g) = &self.truth {
                rec.extend([g.mu0[i].to_string(), g.mu1[i].to_string(), g.e[i].to_string()]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Self::read_csv(BufReader::new(file))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let layout = parse_header(&header)?;
        let width = header.len();
        let mut x = Vec::new();
        let mut t = Vec::new();
        let mut y = Vec::new();
        let (mut mu0, mut mu1, mut e) = (Vec::new(), Vec::new(), Vec::new());
        for (r_idx, rec) in r.records().enumerate() {
            let row = r_idx + 1;
            let rec = rec.map_err(|err| Error::MalformedFile {
                row,
                column: String::new(),
                message: err.to_string(),
            })?;
            if rec.len() != width {
                return Err(Error::MalformedFile {
                    row,
                    column: String::new(),
                    message: format!("expected {width} fields, found {}", rec.len()),
                });
            }
            let num = |j: usize| -> Result<f64> {
                let v: f64 = rec[j].trim().parse().map_err(|_| Error::MalformedFile {
                    row,
                    column: header[j].clone(),
                    message: format!("`{}` is not a number", &rec[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedFile {
                        row,
                        column: header[j].clone(),
                        message: "value is not finite".into(),
                    });
                }
                Ok(v)
            };
            for j in 0..layout.dim {
                x.push(num(j)?);
            }
            let tj = layout.dim;
            t.push(match rec[tj].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::MalformedFile {
                        row,
                        column: "t".into(),
                        message: format!("`{other}` is not 0 or 1"),
                    })
                }
            });
            y.push(num(tj + 1)?);
            if layout.truth {
                mu0.push(num(tj + 2)?);
                mu1.push(num(tj + 3)?);
                e.push(num(tj + 4)?);
            }
        }
        let n = y.len();
        let x = Array2::from_shape_vec((n, layout.dim), x).expect("row-major fill");
        let t = TreatmentVector::new(t)?;
        let truth = layout.truth.then_some(GroundTruth { mu0, mu1, e });
        Self::new(x, t, y, truth)
    }
}

struct CsvLayout {
    dim: usize,
    truth: bool,
}

fn parse_header(header: &[String]) -> Result<CsvLayout> {
    let malformed = |column: &str, message: String| Error::MalformedFile {
        row: 0,
        column: column.to_string(),
        message,
    };
    let dim = header
        .iter()
        .enumerate()
        .take_while(|(j, h)| h.as_str() == format!("x{j}"))
        .count();
    if dim == 0 {
        let col = header.first().map_or("x0", String::as_str);
        return Err(malformed(col, "expected covariate column `x0`".into()));
    }
    let rest: Vec<&str> = header[dim..].iter().map(String::as_str).collect();
    let required = ["t", "y"];
    let optional = ["mu0", "mu1", "e"];
    for (k, want) in required.iter().enumerate() {
        match rest.get(k) {
            Some(got) if got == want => {}
            Some(got) => return Err(malformed(got, format!("expected column `{want}`"))),
            None => return Err(malformed(want, "missing required column".into())),
        }
    }
    let extra = &rest[2..];
    if extra.is_empty() {
        return Ok(CsvLayout { dim, truth: false });
    }
    for (k, want) in optional.iter().enumerate() {
        match extra.get(k) {
            Some(got) if got == want => {}
            Some(got) => return Err(malformed(got, format!("expected column `{want}`"))),
            None => return Err(malformed(want, "ground-truth columns must be mu0,mu1,e together".into())),
        }
    }
    if let Some(got) = extra.get(3) {
        return Err(malformed(got, "unexpected column".into()));
    }
    Ok(CsvLayout { dim, truth: true })
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws a dataset from the latent factor model. Deterministic in `config`.
pub fn generate(config: &DgpConfig) -> Result<CausalDataset> {
    config.validate()?;
    let DgpConfig {
        n,
        dim,
        latent_dim: l,
        propensity_sharpness: alpha,
        positivity_clip: clip,
        outcome_noise_sd: sigma,
        effect_scale,
        hidden_confounding,
        seed,
    } = *config;

    let mut wrng = rng_from_seed(derive_seed(seed, Stream::DgpWeights, 0));
    let loading = 1.0 / (l as f64).sqrt();
    let w: Array2<f64> = Array2::from_shape_simple_fn((dim, l), || {
        loading * gauss(&mut wrng)
    });
    let mut draw_vec = || -> Array1<f64> { Array1::from_shape_simple_fn(l, || gauss(&mut wrng)) };
    let w_e = draw_vec();
    let w_y = draw_vec();
    let w_s = draw_vec();
    let w_tau = draw_vec();

    let kappa = hidden_confounding.ln();
    let sqrt_l = (l as f64).sqrt();
    let mut rng = rng_from_seed(derive_seed(seed, Stream::DgpSamples, 0));
    let mut x = Array2::zeros((n, dim));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let (mut mu0, mut mu1, mut e) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut z = Array1::<f64>::zeros(l);
    for i in 0..n {
        z.mapv_inplace(|_| gauss(&mut rng));
        let mut row = x.row_mut(i);
        row.assign(&w.dot(&z));
        for v in row.iter_mut() {
            *v += 0.1 * gauss(&mut rng);
        }
        let u: f64 = gauss(&mut rng);
        let logit = alpha * (w_e.dot(&z) / sqrt_l + kappa * u);
        let ei = sigmoid(logit).clamp(clip, 1.0 - clip);
        let ti = rng.random::<f64>() < ei;
        let base = w_y.dot(&z) + w_s.dot(&z).sin() + 2.0 * kappa * u;
        let tau = effect_scale * (1.0 + w_tau.dot(&z).powi(2) / l as f64);
        let noise: f64 = gauss(&mut rng);
        let (m0, m1) = (base, base + tau);
        y.push(if ti { m1 } else { m0 } + sigma * noise);
        t.push(ti);
        mu0.push(m0);
        mu1.push(m1);
        e.push(ei);
    }
    let t = TreatmentVector::new(t).map_err(|err| err.annotate(format!("dataset seed {seed}")))?;
    CausalDataset::new(x, t, y, Some(GroundTruth { mu0, mu1, e }))
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Disjoint, exhaustive within-sample and out-of-sample index sets, each
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub within_idx: Vec<usize>,
    pub out_idx: Vec<usize>,
}

impl DataSplit {
    /// Uniform random partition of `0..n` with `round(out_fraction · n)`
    /// held-out units.
    pub fn new(n: usize, out_fraction: f64, seed: u64) -> Result<Self> {
        if n < 10 {
            return Err(Error::TooFewSamples { needed: 10, actual: n });
        }
        if !(out_fraction > 0.0 && out_fraction < 1.0) {
            return Err(Error::InvalidParams(format!(
                "out_fraction must lie in (0, 1), got {out_fraction}"
            )));
        }
        let n_out = ((out_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng_from_seed(seed));
        let mut out_idx = perm[..n_out].to_vec();
        let mut within_idx = perm[n_out..].to_vec();
        out_idx.sort_unstable();
        within_idx.sort_unstable();
        Ok(Self { within_idx, out_idx })
    }
}

pub fn split(ds: &CausalDataset, out_fraction: f64, seed: u64) -> Result<DataSplit> {
    DataSplit::new(ds.n(), out_fraction, seed)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> DgpConfig {
        DgpConfig {
            n: 200,
            dim: 20,
            latent_dim: 4,
            seed,
            ..DgpConfig::default()
        }
    }

    #[test]
    fn noiseless_outcomes_are_exact() {
        let ds = generate(&DgpConfig {
            outcome_noise_sd: 0.0,
            ..small(1)
        })
        .unwrap();
        let g = ds.truth().unwrap();
        for i in 0..ds.n() {
            let mu = if ds.t.is_treated(i) { g.mu1[i] } else { g.mu0[i] };
            assert_eq!(ds.y[i], mu);
        }
    }

    #[test]
    fn null_effect() {
        let ds = generate(&DgpConfig {
            effect_scale: 0.0,
            ..small(2)
        })
        .unwrap();
        assert!(ds.ite_true().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positivity_and_ite_identity() {
        let cfg = small(3);
        let ds = generate(&cfg).unwrap();
        let g = ds.truth().unwrap();
        assert!(g.e.iter().all(|&e| (cfg.positivity_clip..=1.0 - cfg.positivity_clip).contains(&e)));
        for (i, v) in ds.ite_true().unwrap().iter().enumerate() {
            assert_eq!(*v, g.mu1[i] - g.mu0[i]);
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(generate(&small(4)).unwrap(), generate(&small(4)).unwrap());
        assert_ne!(generate(&small(4)).unwrap().y, generate(&small(5)).unwrap().y);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            DgpConfig { n: 1, ..small(0) },
            DgpConfig { latent_dim: 21, ..small(0) },
            DgpConfig { positivity_clip: 0.5, ..small(0) },
            DgpConfig { hidden_confounding: 0.9, ..small(0) },
            DgpConfig { outcome_noise_sd: -1.0, ..small(0) },
        ] {
            assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = DataSplit::new(100, 0.1, 7).unwrap();
        assert_eq!((s.within_idx.len(), s.out_idx.len()), (90, 10));
        let s10 = DataSplit::new(10, 0.1, 7).unwrap();
        assert_eq!((s10.within_idx.len(), s10.out_idx.len()), (9, 1));
        assert_eq!(s, DataSplit::new(100, 0.1, 7).unwrap());
        let mut all: Vec<usize> = s.within_idx.iter().chain(&s.out_idx).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(matches!(DataSplit::new(9, 0.1, 0), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ds = generate(&small(6)).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = CausalDataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back, ds);
        let mut again = Vec::new();
        back.write_csv(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn csv_without_truth() {
        let text = "x0,x1,t,y\n0.5,1,1,2.5\n-1,0,0,0.25\n";
        let ds = CausalDataset::read_csv(text.as_bytes()).unwrap();
        assert!(ds.truth.is_none());
        assert_eq!(ds.dim(), 2);
        assert!(matches!(ds.ite_true(), Err(Error::MissingGroundTruth(_))));
    }

    #[test]
    fn csv_header_errors_name_the_column() {
        let err = CausalDataset::read_csv("x0,x1,treat,y\n1,2,1,3\n".as_bytes()).unwrap_err();
        match err {
            Error::MalformedFile { column, .. } => assert_eq!(column, "treat"),
            other => panic!("{other:?}"),
        }
        let err = CausalDataset::read_csv("x0,t,y,mu0,mu1\n1,1,3,0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedFile { column, .. } if column == "e"));
        let err = CausalDataset::read_csv("x0,t,y\n1,1,3\nabc,0,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedFile { row: 2, column, .. } if column == "x0"));
        let err = CausalDataset::read_csv("x0,t,y\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MalformedFile { column, .. } if column == "t"));
    }
}
