//! Random hyperplane tessellations.
//!
//! An [`RhptEmbedder`] holds two families of Gaussian hyperplanes. The
//! angular family passes through the origin, so its bits are `step(a · x)`
//! and the normalized Hamming distance between two sketches estimates the
//! angle between the inputs. The shifted family adds a uniform offset drawn
//! from `[-λ, λ]` to every hyperplane, giving bits `step(a · x + γ)`; the
//! Hamming distance over those bits, scaled by `√(2π)·λ/β`, estimates the
//! Euclidean distance. Both families are concatenated into one
//! [`BinarySketch`], angular bits first.
//!
//! `step(z)` is 1 for `z >= 0` and 0 otherwise.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::sketch::{BinarySketch, WORD_BITS};

/// Rows embedded per task in [`RhptEmbedder::embed_batch`].
const ROW_BLOCK: usize = 512;
/// Hyperplanes per matrix product; bounds the size of the projection buffer.
const PLANE_BLOCK: usize = 16 * WORD_BITS;

/// Shape and randomness of a tessellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TessellationParams {
    pub dim: usize,
    pub beta_angular: usize,
    pub beta_shifted: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl TessellationParams {
    pub fn new(
        dim: usize,
        beta_angular: usize,
        beta_shifted: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        let p = Self {
            dim,
            beta_angular,
            beta_shifted,
            lambda,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    /// Splits `beta_total` evenly, giving the odd bit (if any) to the
    /// shifted family.
    pub fn with_total(dim: usize, beta_total: usize, lambda: f64, seed: u64) -> Result<Self> {
        let beta_angular = beta_total / 2;
        Self::new(dim, beta_angular, beta_total - beta_angular, lambda, seed)
    }

    pub fn beta_total(&self) -> usize {
        self.beta_angular + self.beta_shifted
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParams("dim must be positive".into()));
        }
        if self.beta_total() == 0 {
            return Err(Error::InvalidParams(
                "beta_angular + beta_shifted must be at least 1".into(),
            ));
        }
        if self.beta_shifted > 0 && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "lambda must be positive and finite when shifted bits are requested, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Shift half-range covering the data: three times the largest row norm.
///
/// Falls back to 1 for an all-zero (or empty) matrix.
pub fn default_lambda(x: ArrayView2<'_, f64>) -> f64 {
    let max_norm = x
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    if max_norm > 0.0 {
        3.0 * max_norm
    } else {
        1.0
    }
}

/// A frozen pair of Gaussian tessellations.
#[derive(Debug, Clone)]
pub struct RhptEmbedder {
    params: TessellationParams,
    // Angular rows first, then shifted rows.
    hyperplanes: Array2<f64>,
    // Per-row offset: zero for angular rows, the shift for shifted rows.
    offsets: Vec<f64>,
}

impl RhptEmbedder {
    /// Samples the hyperplanes from `params.seed`.
    ///
    /// Draw order: angular matrix (row-major), shifted matrix (row-major),
    /// then the shifts.
    pub fn new(params: TessellationParams) -> Result<Self> {
        params.validate()?;
        let mut rng = rng_from_seed(params.seed);
        let rows = params.beta_total();
        let hyperplanes = Array2::from_shape_simple_fn((rows, params.dim), || {
            StandardNormal.sample(&mut rng)
        });
        let mut offsets = vec![0.0; params.beta_angular];
        if params.beta_shifted > 0 {
            let u = Uniform::new_inclusive(-params.lambda, params.lambda)
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            offsets.extend((0..params.beta_shifted).map(|_| u.sample(&mut rng)));
        }
        Ok(Self {
            params,
            hyperplanes,
            offsets,
        })
    }

    pub fn params(&self) -> &TessellationParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn beta_total(&self) -> usize {
        self.params.beta_total()
    }

    pub fn angular_matrix(&self) -> ArrayView2<'_, f64> {
        self.hyperplanes.slice(s![..self.params.beta_angular, ..])
    }

    pub fn shifted_matrix(&self) -> ArrayView2<'_, f64> {
        self.hyperplanes.slice(s![self.params.beta_angular.., ..])
    }

    pub fn shifts(&self) -> &[f64] {
        &self.offsets[self.params.beta_angular..]
    }

    /// Sketch of a single vector.
    pub fn embed(&self, x: ArrayView1<'_, f64>) -> Result<BinarySketch> {
        let row = x.insert_axis(Axis(0));
        let mut out = self.embed_block(row)?;
        Ok(out.pop().expect("one row in, one sketch out"))
    }

    /// Sketches of every row of `x`.
    ///
    /// Rows are processed in blocks, possibly in parallel; element `i` is
    /// always bit-identical to `embed(x.row(i))`.
    pub fn embed_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<BinarySketch>> {
        if x.ncols() != self.params.dim {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim,
                actual: x.ncols(),
            });
        }
        let blocks: Vec<_> = x.axis_chunks_iter(Axis(0), ROW_BLOCK).collect();
        let parts = blocks
            .into_par_iter()
            .map(|block| self.embed_block(block))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().flatten().collect())
    }

    fn embed_block(&self, x: ArrayView2<'_, f64>) -> Result<Vec<BinarySketch>> {
        if x.ncols() != self.params.dim {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim,
                actual: x.ncols(),
            });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        let beta_angular = self.params.beta_angular;
        let beta_total = self.params.beta_total();
        let mut sketches = vec![BinarySketch::zeros(beta_total, beta_angular); x.nrows()];
        // Each element of the product sums over the input dimension in the
        // same order whatever the tile shape, so tiling does not change bits.
        for start in (0..beta_total).step_by(PLANE_BLOCK) {
            let end = (start + PLANE_BLOCK).min(beta_total);
            let proj = x.dot(&self.hyperplanes.slice(s![start..end, ..]).t());
            let offsets = &self.offsets[start..end];
            for (sk, p) in sketches.iter_mut().zip(proj.rows()) {
                let p = p.as_slice().expect("fresh product is row-major");
                let words = &mut sk.words_mut()[start / WORD_BITS..];
                for ((word, vals), offs) in words.iter_mut().zip(p.chunks(WORD_BITS)).zip(offsets.chunks(WORD_BITS)) {
                    *word = vals
                        .iter()
                        .zip(offs)
                        .enumerate()
                        .fold(0u64, |w, (b, (&v, &o))| w | (((v + o >= 0.0) as u64) << b));
                }
            }
        }
        Ok(sketches)
    }
}

/// Normalized Hamming distance over the angular bits; estimates the angular
/// distance between the embedded vectors.
pub fn angular_estimate(a: &BinarySketch, b: &BinarySketch) -> Result<f64> {
    if a.angular_len() == 0 {
        return Err(Error::NoAngularBits);
    }
    Ok(a.hamming_angular(b)? as f64 / a.angular_len() as f64)
}

/// `√(2π)·λ/β_shifted` times the Hamming distance over the shifted bits;
/// estimates the Euclidean distance between the embedded vectors.
pub fn euclidean_estimate(a: &BinarySketch, b: &BinarySketch, lambda: f64) -> Result<f64> {
    if a.shifted_len() == 0 {
        return Err(Error::NoShiftedBits);
    }
    let scale = (2.0 * std::f64::consts::PI).sqrt() * lambda / a.shifted_len() as f64;
    Ok(scale * a.hamming_shifted(b)? as f64)
}

/// `arccos(⟨x, y⟩ / (‖x‖‖y‖)) / π`, in `[0, 1]`.
pub fn angular_distance_exact(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let nx = x.dot(&x).sqrt();
    let ny = y.dot(&y).sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = (x.dot(&y) / (nx * ny)).clamp(-1.0, 1.0);
    Ok(cos.acos() / std::f64::consts::PI)
}
