mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::index;
use rand::Rng;
use topodict::sparse_coding::{omp, sparse_code_matrix};

#[test]
fn planted_sparse_signals_are_recovered_exactly() {
    let mut rng = common::rng(61);
    let mut runs = 0;
    while runs < 20 {
        let d = common::unit_gaussian(&mut rng, 256, 320);
        let k0 = rng.random_range(1..=3);
        // exact-recovery guarantee: k0 < (1 + 1/mu) / 2
        if (2 * k0 - 1) as f64 * common::coherence(&d) >= 1.0 {
            continue;
        }
        let support: Vec<usize> = index::sample(&mut rng, 320, k0).into_vec();
        let mut x = DVector::zeros(320);
        for &k in &support {
            x[k] = (rng.random::<f64>() + 0.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let y = &d * &x;
        let r = omp(&d, &y, k0, 0.0).unwrap();
        let mut got = r.support.clone();
        got.sort_unstable();
        let mut want = support.clone();
        want.sort_unstable();
        assert_eq!(got, want);
        assert!(*r.residual_norms.last().unwrap() <= 1e-10);
        assert!((r.to_dense(320) - &x).amax() < 1e-10);
        runs += 1;
    }
}

#[test]
fn batch_coding_maps_back_through_column_weights() {
    let mut rng = common::rng(67);
    let mut d = common::gaussian(&mut rng, 30, 50);
    d.column_mut(7).fill(0.0);
    for k in 0..50 {
        let s = 0.1 + 3.0 * rng.random::<f64>();
        d.column_mut(k).scale_mut(s);
    }
    let y = common::gaussian(&mut rng, 30, 12);
    let code = sparse_code_matrix(&d, &y, 4, 1e-12).unwrap();
    assert!(code.max_support() <= 4);
    assert!(code.s.row(7).iter().all(|&v| v == 0.0));
    // per-column least-squares optimality on the chosen support
    let recon = &d * &code.s;
    for t in 0..12 {
        let r = y.column(t) - recon.column(t);
        for k in (0..50).filter(|&k| code.s[(k, t)] != 0.0) {
            assert!(d.column(k).dot(&r).abs() < 1e-9 * d.column(k).norm() * y.column(t).norm());
        }
    }
}

#[test]
fn stops_when_signal_is_explained() {
    let d = DMatrix::identity(5, 5);
    let y = DVector::from_vec(vec![0.0, 2.0, 0.0, 0.0, 0.0]);
    let r = omp(&d, &y, 4, 1e-12).unwrap();
    assert_eq!(r.support, vec![1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_norm_never_increases(seed in any::<u64>(), rows in 4usize..20, extra in 0usize..20, k0 in 1usize..6) {
        let mut rng = common::rng(seed);
        let d = common::unit_gaussian(&mut rng, rows, rows + extra);
        let y = common::gaussian(&mut rng, rows, 1).column(0).into_owned();
        let r = omp(&d, &y, k0, 0.0).unwrap();
        prop_assert!(r.support.len() <= k0);
        for w in r.residual_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let mut seen = r.support.clone();
        seen.sort_unstable();
        seen.dedup();
        prop_assert_eq!(seen.len(), r.support.len());
    }
}
