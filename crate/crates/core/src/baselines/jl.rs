use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_version, MODEL_VERSION};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Gaussian random projection with `N(0, 1/k)` entries, so projected
/// distances estimate original distances without rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct JlProjection {
    pub matrix: Array2<f64>,
    pub seed: u64,
}

impl JlProjection {
    pub fn new(dim: usize, k: usize, seed: u64) -> Result<Self> {
        if dim == 0 || k == 0 {
            return Err(Error::InvalidParams(format!(
                "projection needs positive dim and k, got dim={dim}, k={k}"
            )));
        }
        let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt())
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut rng = rng_from_seed(seed);
        let matrix = Array2::from_shape_simple_fn((k, dim), || normal.sample(&mut rng));
        Ok(Self { matrix, seed })
    }

    pub fn k(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// `X · Mᵀ`; no centering.
    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        Ok(x.dot(&self.matrix.t()))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = JlDocument {
            version: MODEL_VERSION,
            kind: "jl".into(),
            seed: self.seed,
            matrix: self.matrix.rows().into_iter().map(|r| r.to_vec()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: JlDocument = serde_json::from_str(s)?;
        check_version(doc.version, &doc.kind, "jl")?;
        let k = doc.matrix.len();
        let dim = doc.matrix.first().map_or(0, Vec::len);
        let flat: Vec<f64> = doc.matrix.into_iter().flatten().collect();
        let matrix = Array2::from_shape_vec((k, dim), flat)
            .map_err(|e| Error::InvalidParams(format!("jl matrix: {e}")))?;
        Ok(Self {
            matrix,
            seed: doc.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct JlDocument {
    version: u32,
    kind: String,
    seed: u64,
    matrix: Vec<Vec<f64>>,
}
