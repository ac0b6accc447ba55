//! Effect estimators on constructed datasets with known answers.

use ndarray::{concatenate, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rhpt::matching::{
    ate, inductive_ite, match_out_of_sample, match_within, transductive_ite, DistanceSpec,
    Representations, TreatmentVector,
};
use rhpt::seed::rng_from_seed;
use rhpt::tessellation::default_lambda;
use rhpt::{eps_ate, eps_ite, RhptEmbedder, TessellationParams};

/// Every base point appears twice, once per arm, with noiseless outcomes.
struct Twins {
    x: Array2<f64>,
    t: TreatmentVector,
    y: Vec<f64>,
    ite: Vec<f64>,
}

fn twins(pairs: usize, dim: usize, seed: u64) -> Twins {
    let mut rng = rng_from_seed(seed);
    let base = Array2::from_shape_simple_fn((pairs, dim), || rng.random_range(-1.0..1.0));
    let x = concatenate(Axis(0), &[base.view(), base.view()]).unwrap();
    let mu0 = |r: ndarray::ArrayView1<f64>| r.sum() + (3.0 * r[0]).sin();
    let tau = |r: ndarray::ArrayView1<f64>| 1.0 + r[1] * r[1] * 4.0;
    let t: Vec<bool> = (0..2 * pairs).map(|i| i < pairs).collect();
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .zip(&t)
        .map(|(r, &ti)| mu0(r) + if ti { tau(r) } else { 0.0 })
        .collect();
    let ite = x.rows().into_iter().map(tau).collect();
    Twins {
        x,
        t: TreatmentVector::new(t).unwrap(),
        y,
        ite,
    }
}

#[test]
fn exact_twins_recover_effects_under_euclidean() {
    let d = twins(150, 20, 1);
    let m = match_within(Representations::Vectors(d.x.view()), &d.t, &DistanceSpec::EUCLIDEAN).unwrap();
    let ite = transductive_ite(&d.y, &d.t, &m).unwrap();
    assert_eq!(eps_ate(&ite, &d.ite).unwrap(), 0.0);
    assert!(eps_ite(&ite, &d.ite).unwrap() <= 1e-9);
}

#[test]
fn exact_twins_recover_effects_under_rhpt() {
    let d = twins(150, 20, 2);
    let lambda = default_lambda(d.x.view());
    let e = RhptEmbedder::new(TessellationParams::with_total(20, 4096, lambda, 3).unwrap()).unwrap();
    let s = e.embed_batch(d.x.view()).unwrap();
    let m = match_within(Representations::Sketches(&s), &d.t, &DistanceSpec::HAMMING).unwrap();
    let ite = transductive_ite(&d.y, &d.t, &m).unwrap();
    assert!(eps_ite(&ite, &d.ite).unwrap() <= 1e-9);
    assert!(m.dist0.iter().zip(&m.dist1).enumerate().all(|(i, (a, b))| {
        if d.t.is_treated(i) { *a == 0.0 } else { *b == 0.0 }
    }));
}

#[test]
fn single_control_is_reused_by_every_treated_unit() {
    let x = Array2::from_shape_fn((6, 2), |(i, k)| (i * 3 + k) as f64);
    let t = TreatmentVector::new(vec![true, true, false, true, true, true]).unwrap();
    let m = match_within(Representations::Vectors(x.view()), &t, &DistanceSpec::EUCLIDEAN).unwrap();
    assert!(m.match0.iter().all(|&j| j == 2));
}

#[test]
fn inductive_estimates_ignore_pool_outcome_shift() {
    let d = twins(40, 5, 4);
    let queries = d.x.slice(ndarray::s![..10, ..]).to_owned();
    let m = match_out_of_sample(
        Representations::Vectors(queries.view()),
        Representations::Vectors(d.x.view()),
        &d.t,
        &DistanceSpec::EUCLIDEAN,
    )
    .unwrap();
    let a = inductive_ite(&d.y, &m).unwrap();
    let shifted: Vec<f64> = d.y.iter().map(|v| v + 17.5).collect();
    let b = inductive_ite(&shifted, &m).unwrap();
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-12);
    }
    // Each query sits exactly on both its twins.
    for (i, v) in a.iter().enumerate() {
        assert!((v - d.ite[i]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn label_swap_with_negated_outcomes_keeps_ite(
        units in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0, any::<bool>()), 2..40),
    ) {
        let mut t: Vec<bool> = units.iter().map(|u| u.3).collect();
        t[0] = true;
        t[1] = false;
        let x = Array2::from_shape_fn((units.len(), 2), |(i, k)| if k == 0 { units[i].0 } else { units[i].1 });
        let y: Vec<f64> = units.iter().map(|u| u.2).collect();
        let t = TreatmentVector::new(t).unwrap();
        let m = match_within(Representations::Vectors(x.view()), &t, &DistanceSpec::EUCLIDEAN).unwrap();
        let ite = transductive_ite(&y, &t, &m).unwrap();

        let flipped = t.flipped();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let mf = match_within(Representations::Vectors(x.view()), &flipped, &DistanceSpec::EUCLIDEAN).unwrap();
        let ite_f = transductive_ite(&neg, &flipped, &mf).unwrap();
        for (a, b) in ite.iter().zip(&ite_f) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((ate(&ite).unwrap() - ate(&ite_f).unwrap()).abs() < 1e-12);
    }
}
