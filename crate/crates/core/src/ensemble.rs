//! Ensemble bias reduction over a schedule of bin widths.
//!
//! Each member runs the base estimator at `eps(t) = t * N^(-1/(2d))`. The
//! leading bias of a member expands in powers `eps^i`, so weights with
//! `sum w = 1` and `sum w t^i = 0` for `i = 1..d` cancel those terms; among
//! such weights the minimum-norm vector keeps the variance inflation
//! `||w||^2` smallest.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{base_estimate, Generator};
use crate::graph::build_graph;
use crate::hashing::{HashConfig, HashOptions};
use crate::numeric::derive_seed;
use crate::samples::SampleBatch;

/// Largest accepted condition number of `A A^T`.
pub const MAX_CONDITION: f64 = 1e14;

/// Residual tolerance for `A w = e_1`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const MEMBER_STREAM: u64 = 0x4d45_4d42;

/// Error-free product `a * b = p + e`.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Dot product accumulated in roughly twice working precision.
fn dot2(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (a, b) in pairs {
        let (p, pe) = two_prod(a, b);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += pe + se;
    }
    s + c
}

/// Rows `t^0, t^1, ..., t^d` of the constraint matrix.
fn power_rows(t: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(d + 1);
    rows.push(vec![1.0; t.len()]);
    for i in 1..=d {
        let prev: &Vec<f64> = &rows[i - 1];
        let next = prev.iter().zip(t).map(|(p, t)| p * t).collect();
        rows.push(next);
    }
    rows
}

/// Infinity norm of `A w - e_1`.
pub fn constraint_residual(t_values: &[f64], d: usize, w: &[f64]) -> f64 {
    power_rows(t_values, d)
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let target = if i == 0 { 1.0 } else { 0.0 };
            (dot2(row.iter().copied().zip(w.iter().copied())) - target).abs()
        })
        .fold(0.0, f64::max)
}

/// Minimum-norm `w` with `sum w = 1` and `sum w t^i = 0` for `i = 1..=d`.
///
/// Solves `(A A^T) y = e_1` by Cholesky and sets `w = A^T y`, followed by
/// iterative refinement with compensated residuals. Row `i` is scaled by
/// `max(t)^-i` first; this leaves the feasible set unchanged and keeps the
/// Gram matrix usable for larger `d`. The reported condition number is that
/// of the scaled system.
pub fn solve_weights(t_values: &[f64], d: usize) -> Result<Vec<f64>> {
    let t_len = t_values.len();
    if t_len <= d {
        return Err(Error::Infeasible { t: t_len, d });
    }
    if let Some(bad) = t_values.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::invalid(format!("index values must be positive and finite, got {bad}")));
    }
    let t_max = t_values.iter().copied().fold(0.0, f64::max);
    let scaled: Vec<f64> = t_values.iter().map(|t| t / t_max).collect();
    let rows = power_rows(&scaled, d);
    let m = d + 1;
    let gram = DMatrix::from_fn(m, m, |i, j| dot2(rows[i].iter().copied().zip(rows[j].iter().copied())));

    let eig = SymmetricEigen::new(gram.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::MAX, f64::min);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    let chol = gram.cholesky().ok_or(Error::Conditioning { condition })?;

    let mut w = vec![0.0; t_len];
    let mut rhs = DVector::from_fn(m, |i, _| if i == 0 { 1.0 } else { 0.0 });
    for _ in 0..8 {
        let y = chol.solve(&rhs);
        for (k, wk) in w.iter_mut().enumerate() {
            *wk += dot2((0..m).map(|i| (rows[i][k], y[i])));
        }
        // rhs <- e_1 - A w
        for i in 0..m {
            let target = if i == 0 { 1.0 } else { 0.0 };
            rhs[i] = target - dot2(rows[i].iter().copied().zip(w.iter().copied()));
        }
        if rhs.amax() == 0.0 {
            break;
        }
    }
    let residual = constraint_residual(&scaled, d, &w);
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Conditioning { condition });
    }
    Ok(w)
}

pub const DEFAULT_T_START: f64 = 1.5;
pub const DEFAULT_T_STEP: f64 = 1.0;

/// `t = 1.5, 2.5, 3.5, ...` with `T = d + 3` entries.
///
/// Smaller `t` values put most samples in singleton cells, where the
/// `1/(N ε^d)` term swamps the polynomial bias the weights remove.
pub fn default_t_values(d: usize) -> Vec<f64> {
    (0..d + 3)
        .map(|k| DEFAULT_T_START + DEFAULT_T_STEP * k as f64)
        .collect()
}

/// Ensemble members and hashing options.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub t_values: Vec<f64>,
    /// Number of bias terms to cancel; defaults to the joint dimension.
    pub bias_order: Option<usize>,
    pub hash: HashOptions,
}

impl EnsembleConfig {
    pub fn new(t_values: Vec<f64>) -> Self {
        Self { t_values, bias_order: None, hash: HashOptions::default() }
    }

    /// Default schedule for joint dimension `d`.
    pub fn for_dim(d: usize) -> Self {
        Self::new(default_t_values(d))
    }

    pub fn with_hash(mut self, hash: HashOptions) -> Self {
        self.hash = hash;
        self
    }

    pub fn with_bias_order(mut self, order: usize) -> Self {
        self.bias_order = Some(order);
        self
    }
}

/// `eps(t) = t * N^(-1/(2d))`.
pub fn epsilon_for(t: f64, n: usize, d: usize) -> f64 {
    t * (n as f64).powf(-1.0 / (2.0 * d as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleMember {
    pub t: f64,
    pub epsilon: f64,
    pub estimate: f64,
    pub weight: f64,
    /// All points fell into one bucket on some side.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleEstimate {
    /// Nats.
    pub value: f64,
    pub n_samples: usize,
    pub generator: String,
    pub members: Vec<EnsembleMember>,
}

impl EnsembleEstimate {
    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.weight).collect()
    }
}

/// Weighted ensemble of base estimates over `config.t_values`.
pub fn edge_estimate(samples: &SampleBatch, config: &EnsembleConfig, g: &Generator, seed: u64) -> Result<EnsembleEstimate> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d = samples.joint_dim();
    let order = config.bias_order.unwrap_or(d);
    let weights = solve_weights(&config.t_values, order)?;

    let members: Vec<(f64, f64, bool)> = config
        .t_values
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let eps = epsilon_for(t, n, d);
            let (cx, cy) = HashConfig::pair_for_batch(eps, n, derive_seed(seed, MEMBER_STREAM + k as u64), &config.hash)?;
            let graph = build_graph(samples, &cx, &cy)?;
            let stats = graph.stats();
            let est = base_estimate(&graph, g)?;
            Ok((eps, est.value, stats.x_nodes == 1 || stats.y_nodes == 1))
        })
        .collect::<Result<_>>()?;

    let mut value = 0.0;
    let mut out = Vec::with_capacity(members.len());
    for ((&t, &w), (eps, est, saturated)) in config.t_values.iter().zip(&weights).zip(members) {
        if saturated {
            warn!("eps({t}) = {eps} exceeds the data range: all points share one bucket");
        }
        value += w * est;
        out.push(EnsembleMember { t, epsilon: eps, estimate: est, weight: w, saturated });
    }
    Ok(EnsembleEstimate { value, n_samples: n, generator: g.name(), members: out })
}
