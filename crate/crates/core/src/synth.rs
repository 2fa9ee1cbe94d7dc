//! Synthetic families with known mutual information.
//!
//! Ground truth is computed without any hashing: Monte-Carlo entropy
//! integration for [`SyntheticFamily::GaussNoise`] and adaptive quadrature
//! for [`SyntheticFamily::DiscreteGaussMix`].
//!
//! Random streams come from ChaCha8 keyed by SplitMix64-derived seeds, so a
//! `(seed, n)` pair always produces the same batch.

use std::f64::consts::{E, PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::numeric::derive_seed;
use crate::samples::SampleBatch;

/// Monte-Carlo sample count used by [`oracle_mi`].
pub const ORACLE_MC_SAMPLES: usize = 1_000_000;

const ORACLE_STREAM: u64 = 0x4f52_4143_4c45;
const MC_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SyntheticFamily {
    /// `X ~ N(0, I_d)`, `Y = X + a U` with `U` uniform on `[0, 1]^d`.
    GaussNoise { d: usize, a: f64 },
    /// `X` uniform on `{1..k}`, `Y | X = x ~ N([x/2, 0, ..., 0], I_{d_y})`.
    DiscreteGaussMix { k: usize, d_y: usize },
}

impl SyntheticFamily {
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            SyntheticFamily::GaussNoise { d, .. } => (d, d),
            SyntheticFamily::DiscreteGaussMix { d_y, .. } => (1, d_y),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SyntheticFamily::GaussNoise { d, a } if d == 0 || !a.is_finite() || a < 0.0 => {
                Err(Error::invalid(format!("GaussNoise needs d >= 1 and finite a >= 0, got d={d}, a={a}")))
            }
            SyntheticFamily::DiscreteGaussMix { k, d_y } if k == 0 || d_y == 0 => {
                Err(Error::invalid(format!("DiscreteGaussMix needs k >= 1 and d_y >= 1, got k={k}, d_y={d_y}")))
            }
            _ => Ok(()),
        }
    }
}

/// Draws `n` pairs from `family`.
pub fn generate(family: &SyntheticFamily, n: usize, seed: u64) -> Result<SampleBatch> {
    family.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dx, dy) = family.dims();
    let mut x = Vec::with_capacity(n * dx);
    let mut y = Vec::with_capacity(n * dy);
    match *family {
        SyntheticFamily::GaussNoise { d, a } => {
            for _ in 0..n {
                for _ in 0..d {
                    let xi: f64 = rng.sample(StandardNormal);
                    let u: f64 = rng.random();
                    x.push(xi);
                    y.push(xi + a * u);
                }
            }
        }
        SyntheticFamily::DiscreteGaussMix { k, d_y } => {
            for _ in 0..n {
                let atom = rng.random_range(1..=k) as f64;
                x.push(atom);
                for c in 0..d_y {
                    let z: f64 = rng.sample(StandardNormal);
                    y.push(if c == 0 { z + atom / 2.0 } else { z });
                }
            }
        }
    }
    SampleBatch::new(x, dx, y, dy)
}

/// Ground-truth value with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    /// Nats.
    pub value: f64,
    /// Monte-Carlo standard error (0 for quadrature).
    pub std_error: f64,
    /// Bound on `|value - truth|`: three standard errors, or the
    /// quadrature tolerance.
    pub error_bound: f64,
}

/// True mutual information of `family` with the default sample budget.
pub fn oracle_mi(family: &SyntheticFamily) -> Result<OracleValue> {
    oracle_mi_with(family, ORACLE_MC_SAMPLES, 0)
}

/// As [`oracle_mi`] with an explicit Monte-Carlo budget and seed (ignored
/// by the quadrature branch).
pub fn oracle_mi_with(family: &SyntheticFamily, mc_samples: usize, seed: u64) -> Result<OracleValue> {
    family.validate()?;
    match *family {
        SyntheticFamily::GaussNoise { a: 0.0, .. } => {
            Err(Error::InfiniteMi("GaussNoise with a = 0 makes Y a deterministic function of continuous X".into()))
        }
        SyntheticFamily::GaussNoise { d, a } => {
            if mc_samples < 2 {
                return Err(Error::invalid("Monte-Carlo oracle needs at least 2 samples"));
            }
            // I = h(X + aU) - h(aU), h(aU) = d ln a.
            let (h, se) = noisy_gaussian_entropy_mc(d, a, mc_samples, seed);
            Ok(OracleValue { value: h - d as f64 * a.ln(), std_error: se, error_bound: 3.0 * se })
        }
        SyntheticFamily::DiscreteGaussMix { k: 1, .. } => Ok(OracleValue { value: 0.0, std_error: 0.0, error_bound: 0.0 }),
        SyntheticFamily::DiscreteGaussMix { k, .. } => {
            // Only the first coordinate depends on X; the rest cancel.
            let h = mixture_entropy(k);
            Ok(OracleValue { value: h - 0.5 * (2.0 * PI * E).ln(), std_error: 0.0, error_bound: QUAD_TOL * 10.0 })
        }
    }
}

/// Upper tail `P(Z > x)` of the standard normal.
fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Density of `Z + a U` in one dimension: `(Phi(z) - Phi(z - a)) / a`.
pub fn noisy_gaussian_density(z: f64, a: f64) -> f64 {
    // Pick the tail that avoids cancellation.
    let mass = if z <= 0.5 * a { normal_sf(-z) - normal_sf(a - z) } else { normal_sf(z - a) - normal_sf(z) };
    mass / a
}

fn noisy_gaussian_entropy_mc(d: usize, a: f64, samples: usize, seed: u64) -> (f64, f64) {
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let m = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ ORACLE_STREAM, c as u64));
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let mut v = 0.0;
                for _ in 0..d {
                    let x: f64 = rng.sample(StandardNormal);
                    let u: f64 = rng.random();
                    v -= noisy_gaussian_density(x + a * u, a).ln();
                }
                s += v;
                s2 += v * v;
            }
            (s, s2, m)
        })
        .collect();
    let (s, s2, m) = partial.iter().fold((0.0, 0.0, 0usize), |acc, p| (acc.0 + p.0, acc.1 + p.1, acc.2 + p.2));
    let m = m as f64;
    let mean = s / m;
    let var = (s2 / m - mean * mean).max(0.0) * m / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Differential entropy of `Z + a U` (one dimension) by quadrature.
pub fn noisy_gaussian_entropy_quadrature(a: f64) -> f64 {
    let f = |z: f64| {
        let p = noisy_gaussian_density(z, a);
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    };
    let knots = [-14.0, -4.0, 0.0, 0.5 * a, a, a + 4.0, a + 14.0];
    knots.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], QUAD_TOL)).sum()
}

const QUAD_TOL: f64 = 1e-11;

/// Entropy of the equal-weight mixture of `N(x/2, 1)`, `x = 1..k`.
fn mixture_entropy(k: usize) -> f64 {
    let norm = 1.0 / (k as f64 * (2.0 * PI).sqrt());
    let density = |y: f64| norm * (1..=k).map(|x| (-0.5 * (y - x as f64 / 2.0).powi(2)).exp()).sum::<f64>();
    let f = |y: f64| {
        let p = density(y);
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    };
    let (lo, hi) = (0.5 - 14.0, k as f64 / 2.0 + 14.0);
    let pieces = 16;
    let h = (hi - lo) / pieces as f64;
    (0..pieces).map(|i| adaptive_simpson(&f, lo + i as f64 * h, lo + (i + 1) as f64 * h, QUAD_TOL / pieces as f64)).sum()
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}
