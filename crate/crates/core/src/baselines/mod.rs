//! Comparison methods: PCA and Johnson-Lindenstrauss projections for
//! nearest-neighbor matching, logistic propensity scores for scalar
//! matching, and uniform random matching.

mod jl;
mod logistic;
mod pca;
mod random;

pub use jl::JlProjection;
pub use logistic::{
    fit_logistic, fit_logistic_sketches, sigmoid, sketch_features, Convergence, LogisticHyper,
    LogisticModel,
};
pub use pca::{fit_pca, fit_pca_with, PcaModel, DENSE_EIGEN_MAX_DIM};
pub use random::random_match;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Version tag written into every model JSON document.
pub const MODEL_VERSION: u32 = 1;

fn check_version(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != MODEL_VERSION {
        return Err(Error::InvalidParams(format!(
            "unsupported model document version {version}"
        )));
    }
    if kind != expected {
        return Err(Error::InvalidParams(format!(
            "expected a `{expected}` model document, found `{kind}`"
        )));
    }
    Ok(())
}

/// A fitted linear map from covariates to a lower-dimensional space.
pub trait Projector {
    fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

impl Projector for PcaModel {
    fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        PcaModel::project(self, x)
    }
}

impl Projector for JlProjection {
    fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        JlProjection::project(self, x)
    }
}
