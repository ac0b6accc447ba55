//! Causal effect estimation by matching on random hyperplane tessellation
//! (RHPT) sketches.
//!
//! Covariates are embedded into bit strings by thresholding random
//! projections, units are paired with their nearest opposite-arm neighbour
//! in Hamming distance, and matched outcomes give individual and average
//! treatment effect estimates.
//!
//! ```
//! use rhpt::{generate, DgpConfig, RhptEmbedder, TessellationParams};
//! use rhpt::matching::{match_within, transductive_ite, ate, DistanceSpec, Representations};
//!
//! let ds = generate(&DgpConfig { n: 200, dim: 20, latent_dim: 4, ..DgpConfig::default() })?;
//! let params = TessellationParams::with_total(ds.dim(), 1024, 10.0, 7)?;
//! let sketches = RhptEmbedder::new(params)?.embed_batch(ds.x.view())?;
//! let m = match_within(Representations::Sketches(&sketches), &ds.t, &DistanceSpec::HAMMING)?;
//! let estimate = ate(&transductive_ite(&ds.y, &ds.t, &m)?)?;
//! assert!(estimate.is_finite());
//! # Ok::<(), rhpt::Error>(())
//! ```

pub mod baselines;
pub mod error;
pub mod evaluation;
pub mod matching;
pub mod pipeline;
pub mod seed;
pub mod sketch;
pub mod synthetic;
pub mod tessellation;

pub use error::{Error, Result};
pub use evaluation::{
    balance_psi, eps_ate, eps_ite, eps_pehe, sensitivity_study, time_section, BalanceDiagnostic,
    EvaluationReport, SensitivityResult,
};
pub use matching::{DistanceKind, DistanceSpec, MatchAssignment, TreatmentVector};
pub use pipeline::{evaluate_method, Method, MethodSettings};
pub use sketch::BinarySketch;
pub use synthetic::{generate, CausalDataset, DataSplit, DgpConfig};
pub use tessellation::{RhptEmbedder, TessellationParams};

/// The guide's code samples, compiled and run as doc-tests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/tessellation.md")]
    pub struct Tessellation;
    #[doc = include_str!("../../../book/src/sketches.md")]
    pub struct Sketches;
    #[doc = include_str!("../../../book/src/matching.md")]
    pub struct Matching;
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub struct Baselines;
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    pub struct SyntheticData;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
pub struct ReadmeDoctests;
