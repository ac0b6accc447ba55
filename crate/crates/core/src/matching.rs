//! One-nearest-neighbor matching with replacement, and the matching
//! estimators of individual and average treatment effects.
//!
//! Ties are broken by the smallest pool index. Distances are compared
//! exactly: integers for Hamming, IEEE doubles otherwise.

use std::io::Write;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Stream};
use crate::sketch::{hamming_words, BinarySketch};

/// Binary treatment indicators with both arms present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct TreatmentVector {
    t: Vec<bool>,
    treated: Vec<usize>,
    control: Vec<usize>,
}

impl TreatmentVector {
    pub fn new(t: Vec<bool>) -> Result<Self> {
        let treated: Vec<usize> = (0..t.len()).filter(|&i| t[i]).collect();
        let control: Vec<usize> = (0..t.len()).filter(|&i| !t[i]).collect();
        if treated.is_empty() {
            return Err(Error::DegenerateTreatment("no treated units".into()));
        }
        if control.is_empty() {
            return Err(Error::DegenerateTreatment("no control units".into()));
        }
        Ok(Self {
            t,
            treated,
            control,
        })
    }

    /// Restriction to `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(idx.iter().map(|&i| self.t[i]).collect())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.t.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    #[inline]
    pub fn is_treated(&self, i: usize) -> bool {
        self.t[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.t
    }

    pub fn treated(&self) -> &[usize] {
        &self.treated
    }

    pub fn control(&self) -> &[usize] {
        &self.control
    }

    /// Labels with treated and control swapped.
    pub fn flipped(&self) -> Self {
        Self {
            t: self.t.iter().map(|b| !b).collect(),
            treated: self.control.clone(),
            control: self.treated.clone(),
        }
    }
}

impl TryFrom<Vec<u8>> for TreatmentVector {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        let t = v
            .into_iter()
            .enumerate()
            .map(|(i, x)| match x {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidParams(format!(
                    "treatment at {i} is {other}, expected 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(t)
    }
}

impl From<TreatmentVector> for Vec<u8> {
    fn from(t: TreatmentVector) -> Self {
        t.t.into_iter().map(u8::from).collect()
    }
}

/// Which distance a matcher uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    /// Hamming distance on sketches.
    Hamming,
    /// Euclidean distance on real vectors.
    Euclidean,
    /// Angular distance on real vectors.
    Angular,
    /// `|a - b|` on scalars.
    ScalarAbsolute,
    /// Uniform draw from the candidate group, ignoring the representation.
    Random,
}

impl DistanceKind {
    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Hamming => "hamming",
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Angular => "angular",
            DistanceKind::ScalarAbsolute => "scalar-absolute",
            DistanceKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceSpec {
    pub kind: DistanceKind,
    /// Only read for [`DistanceKind::Random`].
    pub seed: Option<u64>,
}

impl DistanceSpec {
    pub const HAMMING: Self = Self::plain(DistanceKind::Hamming);
    pub const EUCLIDEAN: Self = Self::plain(DistanceKind::Euclidean);
    pub const ANGULAR: Self = Self::plain(DistanceKind::Angular);
    pub const SCALAR_ABSOLUTE: Self = Self::plain(DistanceKind::ScalarAbsolute);

    const fn plain(kind: DistanceKind) -> Self {
        Self { kind, seed: None }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            kind: DistanceKind::Random,
            seed: Some(seed),
        }
    }
}

/// A pool of representations, one per unit.
#[derive(Debug, Clone, Copy)]
pub enum Representations<'a> {
    Sketches(&'a [BinarySketch]),
    Vectors(ArrayView2<'a, f64>),
    Scalars(&'a [f64]),
}

impl<'a> Representations<'a> {
    pub fn len(&self) -> usize {
        match self {
            Representations::Sketches(s) => s.len(),
            Representations::Vectors(v) => v.nrows(),
            Representations::Scalars(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Representation<'a> {
        match *self {
            Representations::Sketches(s) => Representation::Sketch(&s[i]),
            Representations::Vectors(v) => Representation::Vector(v.index_axis_move(Axis(0), i)),
            Representations::Scalars(s) => Representation::Scalar(s[i]),
        }
    }
}

/// A single unit's representation.
#[derive(Debug, Clone, Copy)]
pub enum Representation<'a> {
    Sketch(&'a BinarySketch),
    Vector(ArrayView1<'a, f64>),
    Scalar(f64),
}

/// Per-unit nearest control (`match0`) and nearest treated (`match1`)
/// indices into a pool, with the matched distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchAssignment {
    pub match0: Vec<usize>,
    pub match1: Vec<usize>,
    /// Distance to `match0`; NaN for random matching.
    pub dist0: Vec<f64>,
    /// Distance to `match1`; NaN for random matching.
    pub dist1: Vec<f64>,
    pub pool_size: usize,
}

impl MatchAssignment {
    pub fn len(&self) -> usize {
        self.match0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.match0.is_empty()
    }

    /// CSV with columns `i,match0,match1,dist0,dist1`, plus `ite` when given.
    pub fn write_csv<W: Write>(&self, out: W, ite: Option<&[f64]>) -> Result<()> {
        if let Some(ite) = ite {
            if ite.len() != self.len() {
                return Err(Error::LengthMismatch {
                    left: ite.len(),
                    right: self.len(),
                });
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["i", "match0", "match1", "dist0", "dist1"];
        if ite.is_some() {
            header.push("ite");
        }
        w.write_record(&header)?;
        let fmt = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
        for i in 0..self.len() {
            let mut rec = vec![
                i.to_string(),
                self.match0[i].to_string(),
                self.match1[i].to_string(),
                fmt(self.dist0[i]),
                fmt(self.dist1[i]),
            ];
            if let Some(ite) = ite {
                rec.push(ite[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[inline]
fn squared_euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => {
            let mut acc = [0.0f64; 4];
            let mut ca = a.chunks_exact(4);
            let mut cb = b.chunks_exact(4);
            for (x, y) in (&mut ca).zip(&mut cb) {
                for k in 0..4 {
                    let d = x[k] - y[k];
                    acc[k] += d * d;
                }
            }
            let tail: f64 = ca
                .remainder()
                .iter()
                .zip(cb.remainder())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
        }
        _ => a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

fn angular_between(a: ArrayView1<'_, f64>, na: f64, b: ArrayView1<'_, f64>, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        // A zero vector has no direction; treat it as maximally far.
        return 1.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos() / std::f64::consts::PI
}

/// Index and distance of the nearest candidate. `candidates` must be sorted
/// ascending so that strict improvement keeps the smallest index on ties.
fn scan(
    query: Representation<'_>,
    query_norm: f64,
    pool: Representations<'_>,
    pool_norms: Option<&[f64]>,
    candidates: impl Iterator<Item = usize>,
    kind: DistanceKind,
) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    match (kind, query, pool) {
        (DistanceKind::Hamming, Representation::Sketch(q), Representations::Sketches(p)) => {
            let mut best_d = u64::MAX;
            for j in candidates {
                let c = &p[j];
                if c.len() != q.len() || c.angular_len() != q.angular_len() {
                    return Err(Error::LengthMismatch {
                        left: q.len(),
                        right: c.len(),
                    });
                }
                let d = hamming_words(q.words(), c.words());
                if d < best_d {
                    best_d = d;
                    best = Some((j, d as f64));
                }
            }
        }
        (DistanceKind::Euclidean, Representation::Vector(q), Representations::Vectors(p)) => {
            if q.len() != p.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: p.ncols(),
                    actual: q.len(),
                });
            }
            let mut best_d = f64::INFINITY;
            for j in candidates {
                let d = squared_euclidean(q, p.row(j));
                if d < best_d || best.is_none() {
                    best_d = d;
                    best = Some((j, d));
                }
            }
            best = best.map(|(j, d)| (j, d.sqrt()));
        }
        (DistanceKind::Angular, Representation::Vector(q), Representations::Vectors(p)) => {
            if q.len() != p.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: p.ncols(),
                    actual: q.len(),
                });
            }
            let norms = pool_norms.expect("angular matching needs pool norms");
            let mut best_d = f64::INFINITY;
            for j in candidates {
                let d = angular_between(q, query_norm, p.row(j), norms[j]);
                if d < best_d || best.is_none() {
                    best_d = d;
                    best = Some((j, d));
                }
            }
        }
        (
            DistanceKind::ScalarAbsolute,
            Representation::Scalar(q),
            Representations::Scalars(p),
        ) => {
            let mut best_d = f64::INFINITY;
            for j in candidates {
                let d = (q - p[j]).abs();
                if d < best_d || best.is_none() {
                    best_d = d;
                    best = Some((j, d));
                }
            }
        }
        (kind, _, _) => return Err(Error::RepresentationMismatch(kind.name())),
    }
    Ok(best)
}

fn norms_if_angular(pool: Representations<'_>, kind: DistanceKind) -> Option<Vec<f64>> {
    match (kind, pool) {
        (DistanceKind::Angular, Representations::Vectors(p)) => {
            Some(p.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect())
        }
        _ => None,
    }
}

fn query_norm(query: Representation<'_>, kind: DistanceKind) -> f64 {
    match (kind, query) {
        (DistanceKind::Angular, Representation::Vector(q)) => q.dot(&q).sqrt(),
        _ => 0.0,
    }
}

fn random_pick(members: &[usize], seed: u64) -> usize {
    let mut rng = rng_from_seed(seed);
    members[rng.random_range(0..members.len())]
}

fn random_seed(dist: &DistanceSpec) -> u64 {
    dist.seed.unwrap_or(0)
}

/// Nearest pool element among those with `group_mask[j]` set.
///
/// Returns the index and its distance (NaN for random matching).
pub fn nearest_in_group(
    query: Representation<'_>,
    pool: Representations<'_>,
    group_mask: &[bool],
    dist: &DistanceSpec,
) -> Result<(usize, f64)> {
    if group_mask.len() != pool.len() {
        return Err(Error::LengthMismatch {
            left: group_mask.len(),
            right: pool.len(),
        });
    }
    let members: Vec<usize> = (0..pool.len()).filter(|&j| group_mask[j]).collect();
    if members.is_empty() {
        return Err(Error::EmptyGroup("masked"));
    }
    if dist.kind == DistanceKind::Random {
        return Ok((random_pick(&members, random_seed(dist)), f64::NAN));
    }
    let norms = norms_if_angular(pool, dist.kind);
    let qn = query_norm(query, dist.kind);
    let found = scan(
        query,
        qn,
        pool,
        norms.as_deref(),
        members.iter().copied(),
        dist.kind,
    )?;
    Ok(found.expect("non-empty candidate set"))
}

fn check_same_kind(query: Representations<'_>, pool: Representations<'_>) -> Result<()> {
    let same = matches!(
        (query, pool),
        (Representations::Sketches(_), Representations::Sketches(_))
            | (Representations::Vectors(_), Representations::Vectors(_))
            | (Representations::Scalars(_), Representations::Scalars(_))
    );
    if same {
        Ok(())
    } else {
        Err(Error::RepresentationMismatch("query and pool"))
    }
}

/// Matches every unit of `reps` to its nearest control and nearest treated
/// unit within the same sample.
///
/// The opposite-arm match never involves the unit itself. The same-arm match
/// skips the unit itself unless it is the only member of its arm.
pub fn match_within(
    reps: Representations<'_>,
    t: &TreatmentVector,
    dist: &DistanceSpec,
) -> Result<MatchAssignment> {
    if reps.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: reps.len(),
            right: t.len(),
        });
    }
    let n = t.len();
    if let (DistanceKind::Hamming, Representations::Sketches(s)) = (dist.kind, reps) {
        let queries: Vec<usize> = (0..n).collect();
        let rows = hamming_blocked(s, &queries, s, t, |i, j| i == j)?;
        return Ok(assemble(rows, n));
    }
    let norms = norms_if_angular(reps, dist.kind);
    let rows: Vec<(usize, f64, usize, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pick = |group: &[usize], arm: u64| -> Result<(usize, f64)> {
                let same_arm = t.is_treated(i) == (arm == 1);
                let exclude_self = same_arm && group.len() > 1;
                if dist.kind == DistanceKind::Random {
                    let seed = derive_seed(random_seed(dist), Stream::RandomMatch, 2 * i as u64 + arm);
                    let mut rng = rng_from_seed(seed);
                    let j = if exclude_self {
                        let k = rng.random_range(0..group.len() - 1);
                        let pos = group.binary_search(&i).expect("self in own arm");
                        group[if k >= pos { k + 1 } else { k }]
                    } else {
                        group[rng.random_range(0..group.len())]
                    };
                    return Ok((j, f64::NAN));
                }
                let q = reps.get(i);
                let qn = query_norm(q, dist.kind);
                let cands = group.iter().copied().filter(|&j| !(exclude_self && j == i));
                scan(q, qn, reps, norms.as_deref(), cands, dist.kind)
                    .map(|b| b.expect("arm has a candidate"))
            };
            let (m0, d0) = pick(t.control(), 0)?;
            let (m1, d1) = pick(t.treated(), 1)?;
            Ok((m0, d0, m1, d1))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(rows, n))
}

/// Matches each query to its nearest control and nearest treated unit in the
/// pool. Queries are never part of the pool.
pub fn match_out_of_sample(
    queries: Representations<'_>,
    pool: Representations<'_>,
    pool_t: &TreatmentVector,
    dist: &DistanceSpec,
) -> Result<MatchAssignment> {
    if pool.len() != pool_t.len() {
        return Err(Error::LengthMismatch {
            left: pool.len(),
            right: pool_t.len(),
        });
    }
    if dist.kind != DistanceKind::Random {
        check_same_kind(queries, pool)?;
    }
    if let (DistanceKind::Hamming, Representations::Sketches(q), Representations::Sketches(p)) =
        (dist.kind, queries, pool)
    {
        let rows = hamming_blocked(q, &(0..q.len()).collect::<Vec<_>>(), p, pool_t, |_, _| false)?;
        return Ok(assemble(rows, pool.len()));
    }
    let norms = norms_if_angular(pool, dist.kind);
    let rows: Vec<(usize, f64, usize, f64)> = (0..queries.len())
        .into_par_iter()
        .map(|i| {
            let pick = |group: &[usize], arm: u64| -> Result<(usize, f64)> {
                if dist.kind == DistanceKind::Random {
                    let seed = derive_seed(random_seed(dist), Stream::RandomMatch, 2 * i as u64 + arm);
                    return Ok((random_pick(group, seed), f64::NAN));
                }
                let q = queries.get(i);
                let qn = query_norm(q, dist.kind);
                scan(q, qn, pool, norms.as_deref(), group.iter().copied(), dist.kind)
                    .map(|b| b.expect("arm has a candidate"))
            };
            let (m0, d0) = pick(pool_t.control(), 0)?;
            let (m1, d1) = pick(pool_t.treated(), 1)?;
            Ok((m0, d0, m1, d1))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(rows, pool.len()))
}

/// Queries handled together so each candidate is read once per block.
const QUERY_BLOCK: usize = 8;

fn check_layouts(queries: &[BinarySketch], query_idx: &[usize], pool: &[BinarySketch]) -> Result<()> {
    let layout = |s: &BinarySketch| (s.len(), s.angular_len());
    if let Some(first) = pool.first() {
        let want = layout(first);
        for s in pool.iter().chain(query_idx.iter().map(|&i| &queries[i])) {
            if layout(s) != want {
                return Err(Error::LengthMismatch {
                    left: want.0,
                    right: s.len(),
                });
            }
        }
    }
    Ok(())
}

/// Nearest member of `group` for each query, in blocks of queries.
///
/// `is_self(query, candidate)` marks a pair to skip unless `group` has no
/// other member. Candidates are visited in ascending order and only strict
/// improvements are kept, so ties resolve to the smallest index exactly as
/// in the unblocked scan.
fn hamming_nearest(
    queries: &[BinarySketch],
    query_idx: &[usize],
    pool: &[BinarySketch],
    group: &[usize],
    is_self: &(impl Fn(usize, usize) -> bool + Sync),
) -> Vec<(usize, u64)> {
    query_idx
        .par_chunks(QUERY_BLOCK)
        .flat_map_iter(|block| {
            let mut best = [(usize::MAX, u64::MAX); QUERY_BLOCK];
            let skip: Vec<bool> = block
                .iter()
                .map(|&i| group.len() > 1 && group.iter().any(|&j| is_self(i, j)))
                .collect();
            for &j in group {
                let c = pool[j].words();
                for (b, &i) in block.iter().enumerate() {
                    if skip[b] && is_self(i, j) {
                        continue;
                    }
                    let d = hamming_words(queries[i].words(), c);
                    if d < best[b].1 {
                        best[b] = (j, d);
                    }
                }
            }
            best.into_iter().take(block.len())
        })
        .collect()
}

fn hamming_blocked(
    queries: &[BinarySketch],
    query_idx: &[usize],
    pool: &[BinarySketch],
    pool_t: &TreatmentVector,
    is_self: impl Fn(usize, usize) -> bool + Sync,
) -> Result<Vec<(usize, f64, usize, f64)>> {
    check_layouts(queries, query_idx, pool)?;
    let to_control = hamming_nearest(queries, query_idx, pool, pool_t.control(), &is_self);
    let to_treated = hamming_nearest(queries, query_idx, pool, pool_t.treated(), &is_self);
    Ok(to_control
        .into_iter()
        .zip(to_treated)
        .map(|((m0, d0), (m1, d1))| (m0, d0 as f64, m1, d1 as f64))
        .collect())
}

/// Opposite-arm match of every unit in the sample: the nearest control
/// for treated units and the nearest treated unit for controls. Equal to
/// the corresponding column of [`match_within`], at half the cost.
pub fn match_opposite_within(
    reps: Representations<'_>,
    t: &TreatmentVector,
    dist: &DistanceSpec,
) -> Result<Vec<usize>> {
    if reps.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: reps.len(),
            right: t.len(),
        });
    }
    match (dist.kind, reps) {
        (DistanceKind::Hamming, Representations::Sketches(s)) => {
            check_layouts(s, &[], s)?;
            let never = |_: usize, _: usize| false;
            let mut out = vec![0; t.len()];
            for (queries, group) in [(t.treated(), t.control()), (t.control(), t.treated())] {
                for (&i, (j, _)) in queries.iter().zip(hamming_nearest(s, queries, s, group, &never)) {
                    out[i] = j;
                }
            }
            Ok(out)
        }
        _ => {
            let m = match_within(reps, t, dist)?;
            Ok((0..t.len())
                .map(|i| if t.is_treated(i) { m.match0[i] } else { m.match1[i] })
                .collect())
        }
    }
}

fn assemble(rows: Vec<(usize, f64, usize, f64)>, pool_size: usize) -> MatchAssignment {
    let mut m = MatchAssignment {
        match0: Vec::with_capacity(rows.len()),
        match1: Vec::with_capacity(rows.len()),
        dist0: Vec::with_capacity(rows.len()),
        dist1: Vec::with_capacity(rows.len()),
        pool_size,
    };
    for (m0, d0, m1, d1) in rows {
        m.match0.push(m0);
        m.dist0.push(d0);
        m.match1.push(m1);
        m.dist1.push(d1);
    }
    m
}

/// Within-sample effects: the factual outcome against the matched
/// counterfactual.
pub fn transductive_ite(y: &[f64], t: &TreatmentVector, m: &MatchAssignment) -> Result<Vec<f64>> {
    if y.len() != t.len() || m.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: m.len().min(t.len()),
        });
    }
    (0..y.len())
        .map(|i| {
            let (m0, m1) = (m.match0[i], m.match1[i]);
            for j in [m0, m1] {
                if j >= y.len() {
                    return Err(Error::IndexOutOfRange {
                        index: j,
                        len: y.len(),
                    });
                }
            }
            Ok(if t.is_treated(i) {
                y[i] - y[m0]
            } else {
                y[m1] - y[i]
            })
        })
        .collect()
}

/// Out-of-sample effects: both potential outcomes imputed from pool matches.
pub fn inductive_ite(y_pool: &[f64], m: &MatchAssignment) -> Result<Vec<f64>> {
    m.match0
        .iter()
        .zip(&m.match1)
        .map(|(&m0, &m1)| {
            let bad = if m0 >= y_pool.len() { Some(m0) } else if m1 >= y_pool.len() { Some(m1) } else { None };
            match bad {
                Some(index) => Err(Error::IndexOutOfRange {
                    index,
                    len: y_pool.len(),
                }),
                None => Ok(y_pool[m1] - y_pool[m0]),
            }
        })
        .collect()
}

/// Arithmetic mean of individual effects.
pub fn ate(ite: &[f64]) -> Result<f64> {
    if ite.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ite.iter().sum::<f64>() / ite.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tv(bits: &[u8]) -> TreatmentVector {
        TreatmentVector::try_from(bits.to_vec()).unwrap()
    }

    #[test]
    fn treatment_vector_requires_both_arms() {
        assert!(TreatmentVector::try_from(vec![1, 1]).is_err());
        assert!(TreatmentVector::try_from(vec![0]).is_err());
        assert!(TreatmentVector::try_from(vec![0, 2]).is_err());
        let t = tv(&[1, 0, 1]);
        assert_eq!(t.treated(), &[0, 2]);
        assert_eq!(t.control(), &[1]);
        assert_eq!(t.flipped().treated(), &[1]);
    }

    #[test]
    fn exact_copy_wins() {
        let pool = arr2(&[[0.0, 0.0], [5.0, 5.0], [1.0, 1.0], [3.0, 3.0], [2.0, 2.5]]);
        let q = ndarray::arr1(&[2.0, 2.5]);
        let mask = [true; 5];
        let (j, d) = nearest_in_group(
            Representation::Vector(q.view()),
            Representations::Vectors(pool.view()),
            &mask,
            &DistanceSpec::EUCLIDEAN,
        )
        .unwrap();
        assert_eq!((j, d), (4, 0.0));
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let pool: Vec<f64> = vec![9.0, 9.0, 1.0, 9.0, 9.0, 9.0, 9.0, 3.0];
        let mut mask = [false; 8];
        mask[2] = true;
        mask[7] = true;
        let (j, _) = nearest_in_group(
            Representation::Scalar(2.0),
            Representations::Scalars(&pool),
            &mask,
            &DistanceSpec::SCALAR_ABSOLUTE,
        )
        .unwrap();
        assert_eq!(j, 2);
    }

    #[test]
    fn empty_group_and_mismatch() {
        let pool = vec![1.0, 2.0];
        let err = nearest_in_group(
            Representation::Scalar(0.0),
            Representations::Scalars(&pool),
            &[false, false],
            &DistanceSpec::SCALAR_ABSOLUTE,
        );
        assert!(matches!(err, Err(Error::EmptyGroup(_))));
        let err = nearest_in_group(
            Representation::Scalar(0.0),
            Representations::Scalars(&pool),
            &[true, true],
            &DistanceSpec::HAMMING,
        );
        assert!(matches!(err, Err(Error::RepresentationMismatch(_))));
    }

    #[test]
    fn two_units_forced() {
        let x = arr2(&[[0.0], [10.0]]);
        let t = tv(&[1, 0]);
        let m = match_within(Representations::Vectors(x.view()), &t, &DistanceSpec::EUCLIDEAN).unwrap();
        assert_eq!(m.match0[0], 1);
        assert_eq!(m.match1[1], 0);
        let ite = transductive_ite(&[3.0, 1.0], &t, &m).unwrap();
        assert_eq!(ite, vec![2.0, 2.0]);
    }

    #[test]
    fn single_control_reused() {
        let x = arr2(&[[0.0], [1.0], [2.0], [3.0], [4.0]]);
        let t = tv(&[1, 1, 0, 1, 1]);
        let m = match_within(Representations::Vectors(x.view()), &t, &DistanceSpec::EUCLIDEAN).unwrap();
        for i in [0, 1, 3, 4] {
            assert_eq!(m.match0[i], 2);
        }
        // same-arm match for the lone control falls back to itself
        assert_eq!(m.match0[2], 2);
        // same-arm match for treated units excludes self
        assert_eq!(m.match1[1], 0);
        assert_eq!(m.match1[3], 4);
    }

    #[test]
    fn out_of_sample_forced_and_exact() {
        let pool = arr2(&[[0.0, 1.0], [4.0, 4.0]]);
        let t = tv(&[0, 1]);
        let q = arr2(&[[0.0, 1.0]]);
        let m = match_out_of_sample(
            Representations::Vectors(q.view()),
            Representations::Vectors(pool.view()),
            &t,
            &DistanceSpec::EUCLIDEAN,
        )
        .unwrap();
        assert_eq!((m.match0[0], m.match1[0]), (0, 1));
        assert_eq!(m.dist0[0], 0.0);
        assert!(match_out_of_sample(
            Representations::Scalars(&[1.0]),
            Representations::Vectors(pool.view()),
            &t,
            &DistanceSpec::EUCLIDEAN,
        )
        .is_err());
    }

    #[test]
    fn label_swap_with_negated_outcomes_keeps_ite() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let x = Array2::from_shape_simple_fn((n, 3), || StandardNormal.sample(&mut rng));
        let bits: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t = TreatmentVector::new(bits).unwrap();
        let reps = Representations::Vectors(x.view());
        let m = match_within(reps, &t, &DistanceSpec::EUCLIDEAN).unwrap();
        let a = transductive_ite(&y, &t, &m).unwrap();
        let tf = t.flipped();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let mf = match_within(reps, &tf, &DistanceSpec::EUCLIDEAN).unwrap();
        let b = transductive_ite(&neg, &tf, &mf).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u, v);
        }
    }

    #[test]
    fn inductive_cases() {
        let m = MatchAssignment {
            match0: vec![0, 2],
            match1: vec![1, 1],
            dist0: vec![0.0; 2],
            dist1: vec![0.0; 2],
            pool_size: 3,
        };
        let y = [2.0, 2.0, 7.5];
        assert_eq!(inductive_ite(&y, &m).unwrap(), vec![0.0, -5.5]);
        let shifted: Vec<f64> = y.iter().map(|v| v + 100.0).collect();
        assert_eq!(inductive_ite(&shifted, &m).unwrap(), vec![0.0, -5.5]);
        assert!(matches!(
            inductive_ite(&y[..2], &m),
            Err(Error::IndexOutOfRange { index: 2, .. })
        ));
    }

    #[test]
    fn ate_cases() {
        assert_eq!(ate(&[2.0, 2.0]).unwrap(), 2.0);
        assert_eq!(ate(&[1.0, -1.0]).unwrap(), 0.0);
        assert!(matches!(ate(&[]), Err(Error::EmptyInput)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..1000).map(|_| rng.random_range(-1e3..1e3)).collect();
        // Neumaier-compensated reference sum
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for &x in &v {
            let t = s + x;
            c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
            s = t;
        }
        let reference = (s + c) / 1000.0;
        let got = ate(&v).unwrap();
        assert!((got - reference).abs() <= 1e-12 * reference.abs().max(1.0));
    }

    #[test]
    fn random_within_is_deterministic_and_valid() {
        let t = tv(&[1, 0, 0, 1, 1, 0, 1]);
        let s = vec![0.0; 7];
        let a = match_within(Representations::Scalars(&s), &t, &DistanceSpec::random(3)).unwrap();
        let b = match_within(Representations::Scalars(&s), &t, &DistanceSpec::random(3)).unwrap();
        assert_eq!(a.match0, b.match0);
        assert_eq!(a.match1, b.match1);
        for i in 0..7 {
            assert!(!t.is_treated(a.match0[i]));
            assert!(t.is_treated(a.match1[i]));
        }
    }

    #[test]
    fn csv_layout() {
        let m = MatchAssignment {
            match0: vec![1],
            match1: vec![0],
            dist0: vec![0.5],
            dist1: vec![f64::NAN],
            pool_size: 2,
        };
        let mut buf = Vec::new();
        m.write_csv(&mut buf, Some(&[2.0])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,match0,match1,dist0,dist1,ite\n0,1,0,0.5,,2\n");
    }
}
