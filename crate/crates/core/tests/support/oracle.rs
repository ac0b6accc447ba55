//! Exhaustive-scan reference for nearest-neighbour matching, shared by the
//! integration and acceptance suites.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rhpt::matching::{
    match_opposite_within, match_out_of_sample, match_within, DistanceKind, DistanceSpec,
    Representations, TreatmentVector,
};
use rhpt::seed::{derive_seed, rng_from_seed, Stream};
use rhpt::BinarySketch;

pub enum Data {
    Sketches(Vec<BinarySketch>),
    Vectors(Array2<f64>),
    Scalars(Vec<f64>),
}

impl Data {
    pub fn reps(&self) -> Representations<'_> {
        match self {
            Data::Sketches(s) => Representations::Sketches(s),
            Data::Vectors(v) => Representations::Vectors(v.view()),
            Data::Scalars(s) => Representations::Scalars(s),
        }
    }
}

fn angular(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let (na, nb) = (a.dot(&a).sqrt(), b.dot(&b).sqrt());
    // A zero vector has no direction and counts as maximally far.
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos() / std::f64::consts::PI
}

/// Distance used by the oracle. Euclidean compares squared distances, as
/// the square root is monotone.
pub fn distance(q: &Data, i: usize, p: &Data, j: usize, kind: DistanceKind) -> f64 {
    match (q, p, kind) {
        (Data::Sketches(a), Data::Sketches(b), DistanceKind::Hamming) => {
            (0..a[i].len()).filter(|&k| a[i].get(k) != b[j].get(k)).count() as f64
        }
        (Data::Vectors(a), Data::Vectors(b), DistanceKind::Euclidean) => {
            a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum()
        }
        (Data::Vectors(a), Data::Vectors(b), DistanceKind::Angular) => angular(a.row(i), b.row(j)),
        (Data::Scalars(a), Data::Scalars(b), DistanceKind::ScalarAbsolute) => (a[i] - b[j]).abs(),
        _ => unreachable!(),
    }
}

/// First strict minimum over ascending candidates.
pub fn brute(q: &Data, i: usize, p: &Data, cands: impl Iterator<Item = usize>, kind: DistanceKind) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for j in cands {
        let d = distance(q, i, p, j, kind);
        if best.0 == usize::MAX || d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Uniform pick documented for random matching: one generator per
/// `(unit, arm)`, with the unit itself removed from its own arm.
pub fn random_oracle(seed: u64, i: usize, arm: u64, group: &[usize], exclude: Option<usize>) -> usize {
    let mut rng = rng_from_seed(derive_seed(seed, Stream::RandomMatch, 2 * i as u64 + arm));
    let members: Vec<usize> = group.iter().copied().filter(|&j| Some(j) != exclude).collect();
    members[rng.random_range(0..members.len())]
}

pub fn within_oracle(data: &Data, t: &TreatmentVector, spec: &DistanceSpec) -> (Vec<usize>, Vec<usize>) {
    let n = t.len();
    let mut m0 = Vec::with_capacity(n);
    let mut m1 = Vec::with_capacity(n);
    for i in 0..n {
        for (arm, group, out) in [(0u64, t.control(), &mut m0), (1, t.treated(), &mut m1)] {
            let own = t.is_treated(i) == (arm == 1);
            let exclude = (own && group.len() > 1).then_some(i);
            let j = if spec.kind == DistanceKind::Random {
                random_oracle(spec.seed.unwrap_or(0), i, arm, group, exclude)
            } else {
                brute(data, i, data, group.iter().copied().filter(|&j| Some(j) != exclude), spec.kind)
            };
            out.push(j);
        }
    }
    (m0, m1)
}

pub fn random_instance(seed: u64, kind: DistanceKind, n: usize) -> (Data, TreatmentVector) {
    let mut rng = rng_from_seed(seed);
    let mut t: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    t[0] = true;
    t[n - 1] = false;
    // Small value ranges so that ties actually happen.
    let data = match kind {
        DistanceKind::Hamming => {
            let len = rng.random_range(1..150);
            let ang = rng.random_range(0..=len);
            Data::Sketches(
                (0..n)
                    .map(|_| {
                        let bits: Vec<bool> = (0..len).map(|_| rng.random_bool(0.5)).collect();
                        BinarySketch::from_bits(&bits, ang)
                    })
                    .collect(),
            )
        }
        DistanceKind::Euclidean | DistanceKind::Angular => {
            let d = rng.random_range(1..6);
            Data::Vectors(Array2::from_shape_simple_fn((n, d), || rng.random_range(-2i32..=2) as f64))
        }
        DistanceKind::ScalarAbsolute | DistanceKind::Random => {
            Data::Scalars((0..n).map(|_| rng.random_range(0..8) as f64 / 4.0).collect())
        }
    };
    (data, TreatmentVector::new(t).unwrap())
}

pub fn spec_for(kind: DistanceKind, seed: u64) -> DistanceSpec {
    match kind {
        DistanceKind::Random => DistanceSpec::random(seed),
        DistanceKind::Hamming => DistanceSpec::HAMMING,
        DistanceKind::Euclidean => DistanceSpec::EUCLIDEAN,
        DistanceKind::Angular => DistanceSpec::ANGULAR,
        DistanceKind::ScalarAbsolute => DistanceSpec::SCALAR_ABSOLUTE,
    }
}

pub const KINDS: [DistanceKind; 5] = [
    DistanceKind::Hamming,
    DistanceKind::Euclidean,
    DistanceKind::Angular,
    DistanceKind::ScalarAbsolute,
    DistanceKind::Random,
];

/// Within-sample matching for instance `seed` against the scan.
pub fn check_within(seed: u64) -> Result<(), String> {
    let kind = KINDS[seed as usize % KINDS.len()];
    let n = 2 + (seed as usize * 37) % 99;
    let (data, t) = random_instance(seed, kind, n);
    let spec = spec_for(kind, seed);
    let m = match_within(data.reps(), &t, &spec).map_err(|e| e.to_string())?;
    let (o0, o1) = within_oracle(&data, &t, &spec);
    if m.match0 != o0 || m.match1 != o1 {
        return Err(format!("within seed {seed} {kind:?}"));
    }
    if (0..n).any(|i| t.is_treated(m.match0[i]) || !t.is_treated(m.match1[i])) {
        return Err(format!("within seed {seed} {kind:?}: match in wrong arm"));
    }
    let opp = match_opposite_within(data.reps(), &t, &spec).map_err(|e| e.to_string())?;
    for i in 0..n {
        if opp[i] != if t.is_treated(i) { m.match0[i] } else { m.match1[i] } {
            return Err(format!("opposite seed {seed} {kind:?} unit {i}"));
        }
    }
    Ok(())
}

/// Out-of-sample matching for instance `seed` against the scan. Instances
/// whose pool lacks an arm are skipped.
pub fn check_out_of_sample(seed: u64) -> Result<(), String> {
    let kind = KINDS[seed as usize % KINDS.len()];
    let n = 4 + (seed as usize * 53) % 97;
    let (all, t_all) = random_instance(seed + 1000, kind, n);
    let n_pool = (n * 3) / 4;
    let Ok(pool_t) = TreatmentVector::new(t_all.as_slice()[..n_pool].to_vec()) else {
        return Ok(());
    };
    let (pool, queries) = match &all {
        Data::Sketches(s) => (Data::Sketches(s[..n_pool].to_vec()), Data::Sketches(s[n_pool..].to_vec())),
        Data::Vectors(v) => (
            Data::Vectors(v.slice(ndarray::s![..n_pool, ..]).to_owned()),
            Data::Vectors(v.slice(ndarray::s![n_pool.., ..]).to_owned()),
        ),
        Data::Scalars(s) => (Data::Scalars(s[..n_pool].to_vec()), Data::Scalars(s[n_pool..].to_vec())),
    };
    let spec = spec_for(kind, seed);
    let m = match_out_of_sample(queries.reps(), pool.reps(), &pool_t, &spec).map_err(|e| e.to_string())?;
    if m.pool_size != n_pool {
        return Err(format!("out seed {seed}: pool size {}", m.pool_size));
    }
    for i in 0..queries.reps().len() {
        let want = if kind == DistanceKind::Random {
            (
                random_oracle(seed, i, 0, pool_t.control(), None),
                random_oracle(seed, i, 1, pool_t.treated(), None),
            )
        } else {
            (
                brute(&queries, i, &pool, pool_t.control().iter().copied(), kind),
                brute(&queries, i, &pool, pool_t.treated().iter().copied(), kind),
            )
        };
        if (m.match0[i], m.match1[i]) != want {
            return Err(format!("out seed {seed} {kind:?} query {i}"));
        }
    }
    Ok(())
}
