mod support;

use edge_mi::graph::build_graph_sharded;
use edge_mi::hashing::{h1_scalar, h1_vector, h2_bucket, HashConfig, HashMode};
use edge_mi::prelude::*;
use proptest::prelude::*;
use support::*;

fn points(dim: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-50.0f64..50.0, dim), 1..max_len)
}

fn batch(max_len: usize) -> impl Strategy<Value = (SampleBatch, Vec<usize>)> {
    (1usize..3, 1usize..3, 1usize..max_len).prop_flat_map(|(dx, dy, n)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * dx),
            prop::collection::vec(-3.0f64..3.0, n * dy),
            Just((0..n).collect::<Vec<usize>>()).prop_shuffle(),
        )
            .prop_map(move |(x, y, perm)| (SampleBatch::new(x, dx, y, dy).unwrap(), perm))
    })
}

fn mode() -> impl Strategy<Value = HashMode> {
    prop_oneof![
        Just(HashMode::Floor),
        Just(HashMode::ExactBucket),
        Just(HashMode::PStable { r: None, law: StableLaw::Gaussian }),
        Just(HashMode::PStable { r: Some(1), law: StableLaw::Cauchy }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hashing_is_deterministic(pts in points(3, 40), eps in 0.01f64..5.0, u in 0.0f64..1.0, seed: u64, m in mode()) {
        let cfg = HashConfig::new(eps, u * eps, 97, seed, m).unwrap();
        prop_assert!(check_determinism(&pts, &cfg).is_ok());
    }

    /// On a dyadic grid every operation is exact, so the identity must hold
    /// without tolerance.
    #[test]
    fn shift_equivariance_dyadic(xs in prop::collection::vec(-4096i64..4096, 1..6), e in -3i32..4, j in 0u32..=16, k in -1000i64..1000) {
        let eps = 2f64.powi(e);
        let b = eps * j as f64 / 16.0;
        let x: Vec<f64> = xs.iter().map(|&m| m as f64 / 64.0).collect();
        let cfg = HashConfig::new(eps, b, 1, 0, HashMode::Floor).unwrap();
        prop_assert_eq!(check_shift_equivariance(&x, k, &cfg), Ok(()));
    }

    /// Generic reals: the identity holds whenever the scaled value is not
    /// within rounding distance of a cell boundary.
    #[test]
    fn shift_equivariance_generic(x in prop::collection::vec(-100.0f64..100.0, 1..5), eps in 0.05f64..3.0, u in 0.0f64..1.0, k in -50i64..50) {
        let b = u * eps;
        let clear = x.iter().all(|v| {
            let q = (v + b) / eps;
            let r = q - q.floor();
            r > 1e-9 && r < 1.0 - 1e-9
        });
        prop_assume!(clear);
        let cfg = HashConfig::new(eps, b, 1, 0, HashMode::Floor).unwrap();
        prop_assert_eq!(check_shift_equivariance(&x, k, &cfg), Ok(()));
    }

    #[test]
    fn h2_range(z in prop::collection::vec(any::<i64>(), 1..6), f in 1u64..10_000, seed: u64) {
        let b = h2_bucket(&z, f, seed).unwrap();
        prop_assert!((1..=f).contains(&b));
        prop_assert_eq!(b, h2_bucket(&z, f, seed).unwrap());
    }

    #[test]
    fn graph_marginals_and_identity((samples, _) in batch(60), eps in 0.05f64..4.0, seed: u64, m in mode()) {
        let opts = HashOptions { mode: m, ..HashOptions::default() };
        let (cx, cy) = HashConfig::pair_for_batch(eps, samples.len(), seed, &opts).unwrap();
        let g = build_graph(&samples, &cx, &cy).unwrap();
        prop_assert_eq!(check_marginals(&g), Ok(()));
        prop_assert_eq!(check_weight_identity(&g), Ok(()));
        prop_assert!(g.stats().x_nodes <= samples.len());
    }

    #[test]
    fn graph_permutation_invariance((samples, perm) in batch(60), eps in 0.05f64..4.0, seed: u64, m in mode()) {
        let opts = HashOptions { mode: m, ..HashOptions::default() };
        let (cx, cy) = HashConfig::pair_for_batch(eps, samples.len(), seed, &opts).unwrap();
        prop_assert_eq!(check_permutation_invariance(&samples, &perm, &cx, &cy), Ok(()));
        let a = mi_from_samples(&samples, eps, &Generator::shannon(), seed, &opts).unwrap().value;
        let b = mi_from_samples(&samples.permuted(&perm).unwrap(), eps, &Generator::shannon(), seed, &opts).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn sharded_build_is_identical((samples, _) in batch(80), shards in 1usize..9, seed: u64) {
        let (cx, cy) = HashConfig::pair_for_batch(0.7, samples.len(), seed, &HashOptions::floor()).unwrap();
        let a = build_graph(&samples, &cx, &cy).unwrap();
        let b = build_graph_sharded(&samples, &cx, &cy, shards).unwrap();
        let edges = |g: &edge_mi::graph::DependenceGraph| -> Vec<_> {
            g.edges().map(|e| (e.x_bucket.clone(), e.y_bucket.clone(), e.n_ij, e.n_i, e.m_j)).collect()
        };
        prop_assert_eq!(edges(&a), edges(&b));
        prop_assert_eq!(a.n_samples(), b.n_samples());
    }

    #[test]
    fn floor_and_exact_agree_when_h2_injective(pts in points(2, 80), eps in 0.2f64..5.0, u in 0.0f64..1.0, seed: u64) {
        // F large relative to the number of cells keeps injectivity likely;
        // the check itself verifies it.
        match check_partition_agreement(&pts, eps, u * eps, 1 << 30, seed) {
            Ok(_) => {}
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}

#[test]
fn partition_agreement_precondition_is_checked() {
    // With F = 1 every cell lands in one bucket, so H2 is not injective as
    // soon as two cells are realized.
    let pts = vec![vec![0.1], vec![5.3]];
    assert_eq!(check_partition_agreement(&pts, 1.0, 0.0, 1, 3), Ok(false));
    assert_eq!(check_partition_agreement(&pts, 1.0, 0.0, 1 << 40, 3), Ok(true));
}

#[test]
fn h2_uniformity_chi_square() {
    for (f, seed) in [(64u64, 1u64), (97, 2), (1000, 3)] {
        let (p_keys, p_seeds) = h2_uniformity_p(f, 50_000, seed);
        assert!(p_keys > 0.001, "F = {f}: p over keys = {p_keys}");
        assert!(p_seeds > 0.001, "F = {f}: p over seeds = {p_seeds}");
    }
}

#[test]
fn h1_examples() {
    assert_eq!(h1_scalar(0.0, 1.0, 0.0).unwrap(), 0);
    assert_eq!(h1_scalar(2.5, 1.0, 0.5).unwrap(), 3);
    assert_eq!(h1_scalar(-0.1, 0.25, 0.0).unwrap(), -1);
    let cfg = |eps, b| HashConfig::new(eps, b, 1, 0, HashMode::ExactBucket).unwrap();
    assert_eq!(h1_vector(&[0.0, 2.5], &cfg(1.0, 0.5)).unwrap(), vec![0, 3]);
    assert_eq!(h1_vector(&[0.1, 0.9], &cfg(0.5, 0.0)).unwrap(), vec![0, 1]);
    assert_eq!(h1_vector(&[7.3], &cfg(7.3, 0.0)).unwrap(), vec![1]);
    assert!(h1_vector(&[], &cfg(1.0, 0.0)).is_err());
    assert!(h1_scalar(f64::NAN, 1.0, 0.0).is_err());
    assert!(h1_scalar(1.0, 0.0, 0.0).is_err());
}

#[test]
fn bucket_count_collapses_monotonically() {
    let samples = generate(&SyntheticFamily::GaussNoise { d: 2, a: 0.5 }, 500, 11).unwrap();
    let mut prev = usize::MAX;
    for k in 0..40 {
        let eps = 0.01 * 1.4f64.powi(k);
        let cfg = HashConfig::new(eps, 0.0, 1, 0, HashMode::ExactBucket).unwrap();
        let h = cfg.bind(2).unwrap();
        let mut cells: Vec<_> = (0..samples.len()).map(|i| h.hash(samples.x_row(i)).unwrap()).collect();
        cells.sort();
        cells.dedup();
        assert!(cells.len() <= samples.len());
        // Cells at width 1.4 eps are not nested in cells at eps, so allow
        // small local increases but require the overall trend.
        assert!(cells.len() <= prev.saturating_add(prev / 4 + 2), "eps = {eps}: {} after {prev}", cells.len());
        prev = cells.len();
    }
    let huge = HashConfig::new(1e6, 5e5, 1, 0, HashMode::ExactBucket).unwrap().bind(2).unwrap();
    let first = huge.hash(samples.x_row(0)).unwrap();
    assert!((0..samples.len()).all(|i| huge.hash(samples.x_row(i)).unwrap() == first));
}

#[test]
fn nested_widths_never_split_cells() {
    // Doubling eps with b = 0 merges cells pairwise, so the count is
    // exactly non-increasing.
    let samples = generate(&SyntheticFamily::GaussNoise { d: 3, a: 0.5 }, 2000, 12).unwrap();
    let mut prev = usize::MAX;
    for e in -8..12 {
        let cfg = HashConfig::new(2f64.powi(e), 0.0, 1, 0, HashMode::ExactBucket).unwrap();
        let h = cfg.bind(3).unwrap();
        let mut cells: Vec<_> = (0..samples.len()).map(|i| h.hash(samples.x_row(i)).unwrap()).collect();
        cells.sort();
        cells.dedup();
        assert!(cells.len() <= prev);
        prev = cells.len();
    }
    // With b = 0 the widest cells are the 8 orthants.
    assert_eq!(prev, 8);
}

#[test]
fn graph_hand_examples() {
    let opts = HashOptions::exact().with_shift(0.0);
    let independent = SampleBatch::from_columns(&[0.1, 0.1, 0.9, 0.9], &[0.1, 0.9, 0.1, 0.9]).unwrap();
    let (cx, cy) = HashConfig::pair_for_batch(0.5, 4, 0, &opts).unwrap();
    let g = build_graph(&independent, &cx, &cy).unwrap();
    let s = g.stats();
    assert_eq!((s.x_nodes, s.y_nodes, s.edges), (2, 2, 4));
    assert!(g.edges().all(|e| e.n_ij == 1 && e.n_i == 2 && e.m_j == 2 && e.weight.omega_ij == 1.0));

    let dependent = SampleBatch::from_columns(&[0.1, 0.1, 0.9, 0.9], &[0.1, 0.1, 0.9, 0.9]).unwrap();
    let g = build_graph(&dependent, &cx, &cy).unwrap();
    let s = g.stats();
    assert_eq!((s.x_nodes, s.y_nodes, s.edges), (2, 2, 2));
    assert!(g.edges().all(|e| e.n_ij == 2 && e.weight.omega_ij == 2.0));

    let one = SampleBatch::from_columns(&[3.0], &[-1.0]).unwrap();
    let g = build_graph(&one, &cx, &cy).unwrap();
    assert_eq!(g.edges().map(|e| e.weight.omega_ij).collect::<Vec<_>>(), vec![1.0]);

    let same = SampleBatch::from_columns(&[0.3; 10], &[0.7; 10]).unwrap();
    let s = build_graph(&same, &cx, &cy).unwrap().stats();
    assert_eq!((s.x_nodes, s.y_nodes, s.edges), (1, 1, 1));
}

#[test]
fn birthday_bound_on_distinct_keys() {
    let f: u64 = 1 << 20;
    let n = 10_000u64;
    let mut seen = std::collections::HashSet::new();
    let mut collisions = 0u64;
    for k in 0..n as i64 {
        if !seen.insert(h2_bucket(&[k, -k, 17], f, 99).unwrap()) {
            collisions += 1;
        }
    }
    // Expected number of colliding inputs: n - F (1 - (1 - 1/F)^n).
    let fe = f as f64;
    let expected = n as f64 - fe * (1.0 - (1.0 - 1.0 / fe).powf(n as f64));
    assert!((collisions as f64) <= 1.2 * expected, "{collisions} collisions, expected {expected}");
}
