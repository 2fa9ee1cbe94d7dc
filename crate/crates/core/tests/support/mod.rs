//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::HashMap;

use edge_mi::graph::DependenceGraph;
use edge_mi::hashing::{h1_vector, h2_bucket, BucketId, HashConfig, HashMode};
use edge_mi::prelude::*;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type Check = std::result::Result<(), String>;

/// Minimum-norm solution of `A w = e_1`, rows `t^0..t^d`, from the KKT
/// system `[2I A^T; A 0] [w; lambda] = [0; e_1]` eliminated exactly over
/// the rationals.
pub fn qp_oracle(t: &[BigRational], d: usize) -> Vec<BigRational> {
    let tn = t.len();
    let m = d + 1;
    let size = tn + m;
    let mut a = vec![vec![BigRational::zero(); size + 1]; size];
    for k in 0..tn {
        a[k][k] = BigRational::from_integer(BigInt::from(2));
        let mut p = BigRational::one();
        for i in 0..m {
            a[k][tn + i] = p.clone();
            a[tn + i][k] = p.clone();
            p = &p * &t[k];
        }
    }
    a[tn][size] = BigRational::one();
    for col in 0..size {
        let pivot = (col..size).find(|&r| !a[r][col].is_zero()).expect("KKT matrix is nonsingular for distinct t");
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for c in col..=size {
            a[col][c] = &a[col][c] * &inv;
        }
        for r in 0..size {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in col..=size {
                    let v = &f * &a[col][c];
                    a[r][c] -= v;
                }
            }
        }
    }
    (0..tn).map(|k| a[k][size].clone()).collect()
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite rational")
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Row and column sums of the joint counts match the marginals.
pub fn check_marginals(g: &DependenceGraph) -> Check {
    let mut row: HashMap<&BucketId, u64> = HashMap::new();
    let mut col: HashMap<&BucketId, u64> = HashMap::new();
    let mut total = 0u64;
    for e in g.edges() {
        if e.n_ij == 0 {
            return Err("zero-count edge stored".into());
        }
        *row.entry(e.x_bucket).or_default() += e.n_ij;
        *col.entry(e.y_bucket).or_default() += e.n_ij;
        total += e.n_ij;
    }
    if total != g.n_samples() {
        return Err(format!("sum N_ij = {total}, N = {}", g.n_samples()));
    }
    for (k, c) in g.x_nodes() {
        if c == 0 || row.get(k).copied() != Some(c) {
            return Err(format!("x node {k:?}: N_i = {c}, row sum {:?}", row.get(k)));
        }
    }
    for (k, c) in g.y_nodes() {
        if c == 0 || col.get(k).copied() != Some(c) {
            return Err(format!("y node {k:?}: M_j = {c}, column sum {:?}", col.get(k)));
        }
    }
    if row.len() != g.x_nodes().count() || col.len() != g.y_nodes().count() {
        return Err("edge endpoint missing from node maps".into());
    }
    if g.edge_count() as u64 > g.n_samples() {
        return Err("more edges than samples".into());
    }
    Ok(())
}

/// `sum omega_i omega'_j omega_ij = 1` exactly over the rationals and to
/// 1e-12 in floating point; node weights sum to one.
pub fn check_weight_identity(g: &DependenceGraph) -> Check {
    let n = BigInt::from(g.n_samples());
    let mut exact = BigRational::zero();
    let mut float = 0.0;
    for e in g.edges() {
        let wi = BigRational::new(BigInt::from(e.n_i), n.clone());
        let wj = BigRational::new(BigInt::from(e.m_j), n.clone());
        let wij = BigRational::new(BigInt::from(e.n_ij) * &n, BigInt::from(e.n_i) * BigInt::from(e.m_j));
        exact += wi * wj * wij;
        float += e.weight.omega_i * e.weight.omega_j_prime * e.weight.omega_ij;
        if !(e.weight.omega_i > 0.0 && e.weight.omega_i <= 1.0 && e.weight.omega_j_prime > 0.0 && e.weight.omega_j_prime <= 1.0) {
            return Err(format!("node weight out of (0, 1]: {:?}", e.weight));
        }
        if !(e.weight.omega_ij > 0.0 && e.weight.omega_ij <= g.n_samples() as f64) {
            return Err(format!("omega_ij out of (0, N]: {}", e.weight.omega_ij));
        }
    }
    if !exact.is_one() {
        return Err(format!("rational identity sum = {exact}"));
    }
    if (float - 1.0).abs() > 1e-12 {
        return Err(format!("floating identity sum = {float}"));
    }
    let nf = g.n_samples() as f64;
    let sx: f64 = g.x_nodes().map(|(_, c)| c as f64 / nf).sum();
    let sy: f64 = g.y_nodes().map(|(_, c)| c as f64 / nf).sum();
    if (sx - 1.0).abs() > 1e-12 || (sy - 1.0).abs() > 1e-12 {
        return Err(format!("node weights sum to {sx}, {sy}"));
    }
    Ok(())
}

/// Counts keyed by bucket, independent of insertion order.
pub fn count_tables(g: &DependenceGraph) -> (Vec<(BucketId, u64)>, Vec<(BucketId, u64)>, Vec<(BucketId, BucketId, u64)>) {
    let mut x: Vec<_> = g.x_nodes().map(|(k, c)| (k.clone(), c)).collect();
    let mut y: Vec<_> = g.y_nodes().map(|(k, c)| (k.clone(), c)).collect();
    let mut e: Vec<_> = g.edges().map(|e| (e.x_bucket.clone(), e.y_bucket.clone(), e.n_ij)).collect();
    x.sort();
    y.sort();
    e.sort();
    (x, y, e)
}

pub fn check_permutation_invariance(samples: &SampleBatch, perm: &[usize], cx: &HashConfig, cy: &HashConfig) -> Check {
    let a = build_graph(samples, cx, cy).map_err(|e| e.to_string())?;
    let shuffled = samples.permuted(perm).map_err(|e| e.to_string())?;
    let b = build_graph(&shuffled, cx, cy).map_err(|e| e.to_string())?;
    if count_tables(&a) != count_tables(&b) {
        return Err("permuted batch produced different counts".into());
    }
    Ok(())
}

/// Same config and input give the same bucket, across fresh bindings.
pub fn check_determinism(points: &[Vec<f64>], cfg: &HashConfig) -> Check {
    let dim = points[0].len();
    let h1 = cfg.bind(dim).map_err(|e| e.to_string())?;
    let h2 = cfg.clone().bind(dim).map_err(|e| e.to_string())?;
    for p in points {
        let a = h1.hash(p).map_err(|e| e.to_string())?;
        let b = h2.hash(p).map_err(|e| e.to_string())?;
        let c = h1.hash(p).map_err(|e| e.to_string())?;
        if a != b || a != c {
            return Err(format!("hash of {p:?} not deterministic"));
        }
    }
    Ok(())
}

/// `H1(x + k eps) = H1(x) + k` componentwise.
pub fn check_shift_equivariance(x: &[f64], k: i64, cfg: &HashConfig) -> Check {
    let eps = cfg.epsilon();
    let base = h1_vector(x, cfg).map_err(|e| e.to_string())?;
    let moved: Vec<f64> = x.iter().map(|v| v + k as f64 * eps).collect();
    let shifted = h1_vector(&moved, cfg).map_err(|e| e.to_string())?;
    for (a, b) in base.iter().zip(&shifted) {
        if b - a != k {
            return Err(format!("x = {x:?}, k = {k}: {base:?} -> {shifted:?}"));
        }
    }
    Ok(())
}

/// Chi-square p-value of `counts` against the uniform distribution.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).expect("df >= 1");
    1.0 - dist.cdf(stat)
}

/// H2 bucket frequencies for `keys` distinct inputs with one seed, and for
/// one input over `keys` seeds.
pub fn h2_uniformity_p(f: u64, keys: usize, seed: u64) -> (f64, f64) {
    let mut by_key = vec![0u64; f as usize];
    let mut by_seed = vec![0u64; f as usize];
    for k in 0..keys as i64 {
        let z = [k % 101 - 50, k / 101, -3];
        by_key[(h2_bucket(&z, f, seed).unwrap() - 1) as usize] += 1;
        by_seed[(h2_bucket(&[7, -2, 11], f, seed.wrapping_add(k as u64)).unwrap() - 1) as usize] += 1;
    }
    (chi_square_uniform_p(&by_key), chi_square_uniform_p(&by_seed))
}

/// Canonical labels: index of the first point sharing each point's key.
pub fn partition_labels<K: std::hash::Hash + Eq + Clone>(keys: &[K]) -> Vec<usize> {
    let mut first: HashMap<K, usize> = HashMap::new();
    keys.iter().enumerate().map(|(i, k)| *first.entry(k.clone()).or_insert(i)).collect()
}

/// Floor and ExactBucket modes induce the same partition whenever `H2` is
/// injective on the realized cells. Returns `Ok(false)` when the
/// injectivity precondition fails.
pub fn check_partition_agreement(points: &[Vec<f64>], eps: f64, shift: f64, f: u64, seed: u64) -> std::result::Result<bool, String> {
    let floor = HashConfig::new(eps, shift, f, seed, HashMode::Floor).map_err(|e| e.to_string())?;
    let exact = HashConfig::new(eps, shift, f, seed, HashMode::ExactBucket).map_err(|e| e.to_string())?;
    let dim = points[0].len();
    let hf = floor.bind(dim).map_err(|e| e.to_string())?;
    let he = exact.bind(dim).map_err(|e| e.to_string())?;
    let fk: Vec<BucketId> = points.iter().map(|p| hf.hash(p).unwrap()).collect();
    let ek: Vec<BucketId> = points.iter().map(|p| he.hash(p).unwrap()).collect();
    let mut cell_of_bucket: HashMap<&BucketId, &BucketId> = HashMap::new();
    for (b, c) in fk.iter().zip(&ek) {
        if let Some(prev) = cell_of_bucket.insert(b, c) {
            if prev != c {
                return Ok(false);
            }
        }
    }
    if partition_labels(&fk) != partition_labels(&ek) {
        return Err("partitions differ although H2 is injective on the realized cells".into());
    }
    Ok(true)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn mse(v: &[f64], truth: f64) -> f64 {
    v.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / v.len() as f64
}

/// Number of adjacent increases in `v`.
pub fn inversions(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] > w[0]).count()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Perfectly dependent data on `k` atoms spaced one apart, `reps` copies of
/// each atom.
pub fn k_atom_batch(k: usize, reps: usize) -> SampleBatch {
    let x: Vec<f64> = (0..k * reps).map(|i| (i % k) as f64).collect();
    SampleBatch::from_columns(&x, &x).unwrap()
}
