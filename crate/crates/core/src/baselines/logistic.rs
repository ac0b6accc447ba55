use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_version, MODEL_VERSION};
use crate::error::{Error, Result};
use crate::matching::TreatmentVector;
use crate::sketch::BinarySketch;

/// Probabilities are kept this far away from 0 and 1.
const PROB_FLOOR: f64 = 1e-15;

/// Solver settings for [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticHyper {
    /// Initial step size; halved whenever a step would raise the loss.
    pub learning_rate: f64,
    /// Strength of the `l2/2 · ‖w‖²` penalty (the bias is not penalized).
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    /// z-score each feature before fitting. Off for binary sketch features.
    pub standardize: bool,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2: 1e-4,
            max_epochs: 5000,
            tolerance: 1e-6,
            standardize: true,
        }
    }
}

impl LogisticHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParams(format!("logistic {what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        Ok(())
    }
}

/// How a fit ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub epochs: usize,
    pub gradient_norm: f64,
    /// Penalized training loss after every accepted step, starting with the
    /// initial loss.
    pub loss_history: Vec<f64>,
}

/// Fitted logistic regression of treatment on features.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    /// Feature centering applied before the linear score (zeros when not
    /// standardized).
    pub feature_mean: Array1<f64>,
    /// Feature scaling applied before the linear score (ones when not
    /// standardized).
    pub feature_scale: Array1<f64>,
    pub hyper: LogisticHyper,
    pub convergence: Convergence,
}

impl LogisticModel {
    /// Model with the given raw-feature weights and no preprocessing.
    pub fn from_weights(weights: Array1<f64>, bias: f64) -> Self {
        let p = weights.len();
        Self {
            weights,
            bias,
            feature_mean: Array1::zeros(p),
            feature_scale: Array1::ones(p),
            hyper: LogisticHyper {
                standardize: false,
                ..LogisticHyper::default()
            },
            convergence: Convergence {
                converged: true,
                epochs: 0,
                gradient_norm: 0.0,
                loss_history: Vec::new(),
            },
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    /// Linear scores `((f - mean) / scale) · w + b`.
    pub fn decision_function(&self, f: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if f.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: f.ncols(),
            });
        }
        // Fold preprocessing into effective weights: w/scale, b - Σ w·mean/scale.
        let w = &self.weights / &self.feature_scale;
        let b = self.bias - w.dot(&self.feature_mean);
        Ok(f.dot(&w) + b)
    }

    /// Propensities `σ(score)`, clamped into the open unit interval.
    pub fn predict_propensity(&self, f: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(self.decision_function(f)?.mapv(sigmoid))
    }

    pub fn predict_sketches(&self, sketches: &[BinarySketch]) -> Result<Array1<f64>> {
        let design = BitDesign::new(sketches)?;
        if design.cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: design.cols(),
            });
        }
        let w = &self.weights / &self.feature_scale;
        let b = self.bias - w.dot(&self.feature_mean);
        let mut scores = vec![0.0; design.rows()];
        design.mul(w.as_slice().expect("contiguous"), &mut scores);
        Ok(scores.into_iter().map(|s| sigmoid(s + b)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = LogisticDocument {
            version: MODEL_VERSION,
            kind: "logistic".into(),
            weights: self.weights.to_vec(),
            bias: self.bias,
            feature_mean: self.feature_mean.to_vec(),
            feature_scale: self.feature_scale.to_vec(),
            hyper: self.hyper,
            convergence: self.convergence.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: LogisticDocument = serde_json::from_str(s)?;
        check_version(doc.version, &doc.kind, "logistic")?;
        Ok(Self {
            weights: Array1::from(doc.weights),
            bias: doc.bias,
            feature_mean: Array1::from(doc.feature_mean),
            feature_scale: Array1::from(doc.feature_scale),
            hyper: doc.hyper,
            convergence: doc.convergence,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LogisticDocument {
    version: u32,
    kind: String,
    weights: Vec<f64>,
    bias: f64,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
    hyper: LogisticHyper,
    convergence: Convergence,
}

/// Numerically stable logistic function, clamped to `[1e-15, 1 - 1e-15]`.
pub fn sigmoid(s: f64) -> f64 {
    let p = if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `log(1 + e^s)` without overflow.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Dense 0/1 feature matrix from sketches.
pub fn sketch_features(sketches: &[BinarySketch]) -> Result<Array2<f64>> {
    let Some(first) = sketches.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let p = first.len();
    let mut f = Array2::zeros((sketches.len(), p));
    for (mut row, s) in f.rows_mut().into_iter().zip(sketches) {
        if s.len() != p {
            return Err(Error::LengthMismatch {
                left: s.len(),
                right: p,
            });
        }
        for (j, v) in row.iter_mut().enumerate() {
            if s.get(j) {
                *v = 1.0;
            }
        }
    }
    Ok(f)
}

/// Fits `P(T = 1 | f)` by full-batch gradient descent on the mean negative
/// log-likelihood plus an L2 penalty.
///
/// Steps that would increase the loss are halved until they do not; the
/// reduced step carries over to later epochs. The model is returned even if
/// the gradient tolerance was not reached; check
/// [`LogisticModel::convergence`].
pub fn fit_logistic(
    f: ArrayView2<'_, f64>,
    t: &TreatmentVector,
    hyper: &LogisticHyper,
) -> Result<LogisticModel> {
    hyper.validate()?;
    let (n, p) = f.dim();
    if n != t.len() {
        return Err(Error::LengthMismatch {
            left: n,
            right: t.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: n,
        });
    }
    if let Some(pos) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let (mean, scale) = if hyper.standardize {
        let mean = f.mean_axis(Axis(0)).expect("n >= 2");
        let scale = f
            .map_axis(Axis(0), |c| {
                let m = c.mean().unwrap_or(0.0);
                (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt()
            })
            .mapv(|s| if s > 0.0 { s } else { 1.0 });
        (mean, scale)
    } else {
        (Array1::zeros(p), Array1::ones(p))
    };
    let owned;
    let x: ArrayView2<'_, f64> = if hyper.standardize {
        owned = (&f - &mean) / &scale;
        owned.view()
    } else {
        f
    };
    let (weights, bias, convergence) = solve(&DenseDesign(x), t, hyper);
    Ok(LogisticModel {
        weights,
        bias,
        feature_mean: mean,
        feature_scale: scale,
        hyper: *hyper,
        convergence,
    })
}

/// Gradient descent with backtracking on any design matrix.
fn solve(x: &impl Design, t: &TreatmentVector, hyper: &LogisticHyper) -> (Array1<f64>, f64, Convergence) {
    let (n, p) = (x.rows(), x.cols());
    let y: Array1<f64> = t.as_slice().iter().map(|&b| f64::from(u8::from(b))).collect();

    let mut w = Array1::<f64>::zeros(p);
    let mut b = 0.0;
    let mut scores = Array1::<f64>::zeros(n);
    let mut loss = penalized_loss(scores.view(), y.view(), &w, hyper.l2);
    let mut history = vec![loss];
    let mut step = hyper.learning_rate;
    let mut grad_norm = f64::INFINITY;
    let mut epochs = 0;
    let mut converged = false;
    let mut residual = vec![0.0; n];
    let mut gw = Array1::<f64>::zeros(p);
    let mut direction = Array1::<f64>::zeros(n);

    while epochs < hyper.max_epochs {
        for i in 0..n {
            residual[i] = sigmoid_raw(scores[i]) - y[i];
        }
        x.tmul(&residual, gw.as_slice_mut().expect("contiguous"));
        gw /= n as f64;
        gw.scaled_add(hyper.l2, &w);
        let gb = residual.iter().sum::<f64>() / n as f64;
        grad_norm = (gw.dot(&gw) + gb * gb).sqrt();
        if grad_norm < hyper.tolerance {
            converged = true;
            break;
        }
        x.mul(gw.as_slice().expect("contiguous"), direction.as_slice_mut().expect("contiguous"));
        direction += gb;
        let mut accepted = false;
        while step > 1e-300 {
            let trial_scores = &scores - &(&direction * step);
            let trial_w = &w - &(&gw * step);
            let trial_loss = penalized_loss(trial_scores.view(), y.view(), &trial_w, hyper.l2);
            if trial_loss <= loss {
                scores = trial_scores;
                w = trial_w;
                b -= step * gb;
                loss = trial_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(loss);
        epochs += 1;
    }
    let convergence = Convergence {
        converged,
        epochs,
        gradient_norm: grad_norm,
        loss_history: history,
    };
    (w, b, convergence)
}

/// [`fit_logistic`] on sketch bits, which are used unscaled.
pub fn fit_logistic_sketches(
    sketches: &[BinarySketch],
    t: &TreatmentVector,
    hyper: &LogisticHyper,
) -> Result<LogisticModel> {
    hyper.validate()?;
    let design = BitDesign::new(sketches)?;
    if design.rows() != t.len() {
        return Err(Error::LengthMismatch {
            left: design.rows(),
            right: t.len(),
        });
    }
    let hyper = LogisticHyper {
        standardize: false,
        ..*hyper
    };
    let p = design.cols();
    let (weights, bias, convergence) = solve(&design, t, &hyper);
    Ok(LogisticModel {
        weights,
        bias,
        feature_mean: Array1::zeros(p),
        feature_scale: Array1::ones(p),
        hyper,
        convergence,
    })
}

fn sigmoid_raw(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn penalized_loss(scores: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, w: &Array1<f64>, l2: f64) -> f64 {
    let n = scores.len() as f64;
    let nll: f64 = scores
        .iter()
        .zip(y.iter())
        .map(|(&s, &t)| softplus(s) - t * s)
        .sum();
    nll / n + 0.5 * l2 * w.dot(w)
}

/// The two products the solver needs.
trait Design {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = X v`
    fn mul(&self, v: &[f64], out: &mut [f64]);
    /// `out = Xᵀ r`
    fn tmul(&self, r: &[f64], out: &mut [f64]);
}

struct DenseDesign<'a>(ArrayView2<'a, f64>);

impl Design for DenseDesign<'_> {
    fn rows(&self) -> usize {
        self.0.nrows()
    }

    fn cols(&self) -> usize {
        self.0.ncols()
    }

    fn mul(&self, v: &[f64], out: &mut [f64]) {
        let prod = self.0.dot(&ArrayView1::from(v));
        out.copy_from_slice(prod.as_slice().expect("contiguous"));
    }

    /// Accumulated row by row in a fixed order.
    fn tmul(&self, r: &[f64], out: &mut [f64]) {
        let mut acc = ndarray::ArrayViewMut1::from(out);
        acc.fill(0.0);
        for (row, &ri) in self.0.rows().into_iter().zip(r) {
            if ri != 0.0 {
                acc.scaled_add(ri, &row);
            }
        }
    }
}

/// 0/1 features packed eight to a byte, one row per sketch.
///
/// Products go through per-byte tables: for `X v`, the 256 partial sums of
/// `v` over each byte's features; for `Xᵀ r`, the sum of `r` over rows
/// sharing each byte value.
struct BitDesign {
    bytes: Vec<u8>,
    row_bytes: usize,
    rows: usize,
    cols: usize,
}

impl BitDesign {
    fn new(sketches: &[BinarySketch]) -> Result<Self> {
        let cols = sketches.first().map_or(0, BinarySketch::len);
        let row_bytes = cols.div_ceil(8);
        let mut bytes = Vec::with_capacity(row_bytes * sketches.len());
        for s in sketches {
            if s.len() != cols {
                return Err(Error::LengthMismatch {
                    left: s.len(),
                    right: cols,
                });
            }
            bytes.extend(s.words().iter().flat_map(|w| w.to_le_bytes()).take(row_bytes));
        }
        Ok(Self {
            bytes,
            row_bytes,
            rows: sketches.len(),
            cols,
        })
    }
}

impl Design for BitDesign {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn mul(&self, v: &[f64], out: &mut [f64]) {
        let mut table = vec![0.0; self.row_bytes * 256];
        for (k, t) in table.chunks_exact_mut(256).enumerate() {
            for byte in 1..256usize {
                let bit = byte.trailing_zeros() as usize;
                let weight = v.get(8 * k + bit).copied().unwrap_or(0.0);
                t[byte] = t[byte & (byte - 1)] + weight;
            }
        }
        for (o, row) in out.iter_mut().zip(self.bytes.chunks_exact(self.row_bytes)) {
            *o = row
                .iter()
                .enumerate()
                .map(|(k, &byte)| table[k * 256 + byte as usize])
                .sum();
        }
    }

    fn tmul(&self, r: &[f64], out: &mut [f64]) {
        let mut buckets = vec![0.0; self.row_bytes * 256];
        for (&ri, row) in r.iter().zip(self.bytes.chunks_exact(self.row_bytes)) {
            for (k, &byte) in row.iter().enumerate() {
                buckets[k * 256 + byte as usize] += ri;
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            let (k, bit) = (j / 8, j % 8);
            *o = buckets[k * 256..(k + 1) * 256]
                .iter()
                .enumerate()
                .filter(|(byte, _)| byte >> bit & 1 == 1)
                .map(|(_, &b)| b)
                .sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use ndarray::{arr1, arr2};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rejects_single_class() {
        let t = TreatmentVector::try_from(vec![1u8, 1, 1]);
        assert!(t.is_err());
    }

    #[test]
    fn packed_products_match_dense() {
        let mut rng = rng_from_seed(12);
        let sketches: Vec<BinarySketch> = (0..37)
            .map(|_| BinarySketch::from_bits(&(0..203).map(|_| rng.random::<bool>()).collect::<Vec<_>>(), 100))
            .collect();
        let dense = sketch_features(&sketches).unwrap();
        let (bits, dd) = (BitDesign::new(&sketches).unwrap(), DenseDesign(dense.view()));
        let v: Vec<f64> = (0..203).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut a, mut b) = (vec![0.0; 37], vec![0.0; 37]);
        bits.mul(&v, &mut a);
        dd.mul(&v, &mut b);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        let (mut a, mut b) = (vec![0.0; 203], vec![0.0; 203]);
        bits.tmul(&r, &mut a);
        dd.tmul(&r, &mut b);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));

        let t = TreatmentVector::new((0..37).map(|i| sketches[i].get(3) ^ (i % 5 == 0)).collect()).unwrap();
        let hyper = LogisticHyper { max_epochs: 50, standardize: false, ..LogisticHyper::default() };
        let packed = fit_logistic_sketches(&sketches, &t, &hyper).unwrap();
        let plain = fit_logistic(dense.view(), &t, &hyper).unwrap();
        let (p, q) = (packed.predict_sketches(&sketches).unwrap(), plain.predict_propensity(dense.view()).unwrap());
        assert!(p.iter().zip(q.iter()).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = LogisticModel::from_weights(Array1::zeros(3), 0.0);
        let f = arr2(&[[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0]]);
        let p = m.predict_propensity(f.view()).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        assert!(m.predict_propensity(arr2(&[[1.0, 2.0]]).view()).is_err());
    }

    #[test]
    fn negation_complements_probabilities() {
        let w = arr1(&[0.5, -1.5, 2.0]);
        let m = LogisticModel::from_weights(w.clone(), 0.3);
        let neg = LogisticModel::from_weights(-w, -0.3);
        let f = arr2(&[[1.0, 2.0, 3.0], [-4.0, 0.0, 9.0], [0.1, 0.1, 0.1]]);
        let p = m.predict_propensity(f.view()).unwrap();
        let q = neg.predict_propensity(f.view()).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn direct_formula_agreement() {
        let mut rng = rng_from_seed(3);
        let w = Array1::from_shape_simple_fn(6, || rng.random_range(-1.0..1.0));
        let m = LogisticModel::from_weights(w.clone(), -0.2);
        let f = Array2::from_shape_simple_fn((50, 6), || rng.random_range(-2.0..2.0));
        let p = m.predict_propensity(f.view()).unwrap();
        for (i, row) in f.rows().into_iter().enumerate() {
            let direct = 1.0 / (1.0 + (-(row.dot(&w) - 0.2)).exp());
            assert!((p[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_in_single_feature() {
        let x = arr2(&[[-3.0], [-2.0], [-1.0], [1.0], [2.0], [3.0]]);
        let t = TreatmentVector::new(vec![false, false, false, true, true, true]).unwrap();
        let m = fit_logistic(x.view(), &t, &LogisticHyper::default()).unwrap();
        let grid = Array2::from_shape_fn((20, 1), |(i, _)| -5.0 + 0.5 * i as f64);
        let p = m.predict_propensity(grid.view()).unwrap();
        assert!(p.windows(2).into_iter().all(|w| w[1] >= w[0]));
        assert!(p[19] > p[0]);
    }

    #[test]
    fn loss_never_increases_and_converges() {
        let mut rng = rng_from_seed(8);
        let n = 400;
        let x: Array2<f64> = Array2::from_shape_simple_fn((n, 3), || StandardNormal.sample(&mut rng));
        let t: Vec<bool> = x
            .rows()
            .into_iter()
            .map(|r| rng.random::<f64>() < 1.0 / (1.0 + (-(r[0] - r[2])).exp()))
            .collect();
        let t = TreatmentVector::new(t).unwrap();
        let m = fit_logistic(x.view(), &t, &LogisticHyper::default()).unwrap();
        let h = &m.convergence.loss_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.convergence.converged, "{:?}", m.convergence.gradient_norm);
        assert!(m.convergence.gradient_norm < 1e-6);
    }

    #[test]
    fn non_convergence_still_returns_model() {
        let x = arr2(&[[0.0], [1.0], [2.0], [3.0]]);
        let t = TreatmentVector::new(vec![false, true, false, true]).unwrap();
        let hyper = LogisticHyper {
            max_epochs: 1,
            ..LogisticHyper::default()
        };
        let m = fit_logistic(x.view(), &t, &hyper).unwrap();
        assert!(!m.convergence.converged);
        assert!(m.convergence.gradient_norm.is_finite());
    }

    #[test]
    fn sketch_features_unpack() {
        let s = vec![
            BinarySketch::from_bits(&[true, false, true], 1),
            BinarySketch::from_bits(&[false, false, true], 1),
        ];
        assert_eq!(sketch_features(&s).unwrap(), arr2(&[[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]]));
    }

    #[test]
    fn json_roundtrip() {
        let x = arr2(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]]);
        let t = TreatmentVector::new(vec![false, true, false, true]).unwrap();
        let m = fit_logistic(x.view(), &t, &LogisticHyper { max_epochs: 20, ..Default::default() }).unwrap();
        let back = LogisticModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
