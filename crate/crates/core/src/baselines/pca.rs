use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_version, MODEL_VERSION};
use crate::error::{Error, Result};

/// Above this dimension the covariance is not formed and components come
/// from subspace iteration.
pub const DENSE_EIGEN_MAX_DIM: usize = 2000;
const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITER: usize = 1000;

/// Principal components of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// Per-feature scale divided out before projecting; all ones unless the
    /// model was fitted with standardization.
    pub scale: Array1<f64>,
    /// `k × dim`, orthonormal rows in order of decreasing variance.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// The last component carries (numerically) no variance.
    pub fn is_rank_deficient(&self) -> bool {
        let first = self.explained_variance[0];
        let last = self.explained_variance[self.k() - 1];
        last <= 1e-12 * first.max(f64::MIN_POSITIVE)
    }

    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let centered = (&x - &self.mean) / &self.scale;
        Ok(centered.dot(&self.components.t()))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = PcaDocument {
            version: MODEL_VERSION,
            kind: "pca".into(),
            mean: self.mean.to_vec(),
            scale: self.scale.to_vec(),
            components: self.components.rows().into_iter().map(|r| r.to_vec()).collect(),
            explained_variance: self.explained_variance.to_vec(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PcaDocument = serde_json::from_str(s)?;
        check_version(doc.version, &doc.kind, "pca")?;
        let k = doc.components.len();
        let dim = doc.mean.len();
        let flat: Vec<f64> = doc.components.into_iter().flatten().collect();
        let components = Array2::from_shape_vec((k, dim), flat)
            .map_err(|e| Error::InvalidParams(format!("pca components: {e}")))?;
        Ok(Self {
            mean: Array1::from(doc.mean),
            scale: Array1::from(doc.scale),
            components,
            explained_variance: Array1::from(doc.explained_variance),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PcaDocument {
    version: u32,
    kind: String,
    mean: Vec<f64>,
    scale: Vec<f64>,
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
}

/// Top-`k` principal components of the centered data.
pub fn fit_pca(x: ArrayView2<'_, f64>, k: usize) -> Result<PcaModel> {
    fit_pca_with(x, k, false)
}

/// As [`fit_pca`], optionally dividing each feature by its standard
/// deviation first.
pub fn fit_pca_with(x: ArrayView2<'_, f64>, k: usize, standardize: bool) -> Result<PcaModel> {
    let (n, dim) = x.dim();
    if n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: n,
        });
    }
    if k == 0 || k > n.min(dim) {
        return Err(Error::InvalidParams(format!(
            "k = {k} must be in 1..={}",
            n.min(dim)
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let mut centered = &x - &mean;
    let scale = if standardize {
        let sd = centered
            .map_axis(Axis(0), |c| (c.dot(&c) / (n - 1) as f64).sqrt())
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        centered /= &sd;
        sd
    } else {
        Array1::ones(dim)
    };

    let (mut components, variances) = if dim <= DENSE_EIGEN_MAX_DIM {
        dense_eigen(&centered, k)
    } else {
        subspace_iteration(&centered, k)
    };
    for mut row in components.rows_mut() {
        let (mut pivot, mut best) = (0.0, -1.0);
        for &v in row.iter() {
            if v.abs() > best {
                best = v.abs();
                pivot = v;
            }
        }
        if pivot < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }
    Ok(PcaModel {
        mean,
        scale,
        components,
        explained_variance: variances,
    })
}

fn dense_eigen(centered: &Array2<f64>, k: usize) -> (Array2<f64>, Array1<f64>) {
    let (n, dim) = centered.dim();
    let cov = centered.t().dot(centered) / (n - 1) as f64;
    let cov = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Array2::zeros((k, dim));
    let mut variances = Array1::zeros(k);
    for (r, &c) in order.iter().take(k).enumerate() {
        variances[r] = eig.eigenvalues[c].max(0.0);
        for j in 0..dim {
            components[[r, j]] = eig.eigenvectors[(j, c)];
        }
    }
    (components, variances)
}

/// Block power iteration on `XᵀX/(n-1)` with Gram-Schmidt
/// re-orthogonalization, without forming the covariance.
fn subspace_iteration(centered: &Array2<f64>, k: usize) -> (Array2<f64>, Array1<f64>) {
    let (n, dim) = centered.dim();
    // Deterministic, well-spread start: rows of a fixed pseudo-random matrix.
    let mut rng = crate::seed::rng_from_seed(0x5043_4131);
    let mut basis: Array2<f64> = Array2::from_shape_simple_fn((k, dim), || {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
    });
    orthonormalize(&mut basis);
    let mut values = Array1::zeros(k);
    for _ in 0..POWER_MAX_ITER {
        let scores = centered.dot(&basis.t());
        let mut next = scores.t().dot(centered) / (n - 1) as f64;
        for r in 0..k {
            values[r] = next.row(r).dot(&basis.row(r));
        }
        orthonormalize(&mut next);
        let delta = (0..k)
            .map(|r| 1.0 - next.row(r).dot(&basis.row(r)).abs())
            .fold(0.0, f64::max);
        basis = next;
        if delta < POWER_TOL {
            break;
        }
    }
    // Rayleigh-Ritz within the converged subspace to fix ordering.
    let scores = centered.dot(&basis.t());
    let small = scores.t().dot(&scores) / (n - 1) as f64;
    let small = DMatrix::from_fn(k, k, |i, j| 0.5 * (small[[i, j]] + small[[j, i]]));
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Array2::zeros((k, dim));
    for (r, &c) in order.iter().enumerate() {
        values[r] = eig.eigenvalues[c].max(0.0);
        for q in 0..k {
            let w = eig.eigenvectors[(q, c)];
            components.row_mut(r).scaled_add(w, &basis.row(q));
        }
    }
    (components, values)
}

fn orthonormalize(rows: &mut Array2<f64>) {
    for r in 0..rows.nrows() {
        for _ in 0..2 {
            for q in 0..r {
                let proj = rows.row(r).dot(&rows.row(q));
                let prev = rows.row(q).to_owned();
                rows.row_mut(r).scaled_add(-proj, &prev);
            }
        }
        let norm = rows.row(r).dot(&rows.row(r)).sqrt();
        if norm > 0.0 {
            rows.row_mut(r).mapv_inplace(|v| v / norm);
        }
    }
}
