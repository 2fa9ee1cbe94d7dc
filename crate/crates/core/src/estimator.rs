//! Generator functions and the base dependence-graph estimate.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_graph, DependenceGraph};
use crate::hashing::{HashConfig, HashOptions};
use crate::numeric::CompensatedSum;
use crate::samples::SampleBatch;

/// Default clipping bound `U`.
pub const DEFAULT_CLIP_BOUND: f64 = 1e6;

type CustomFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum GeneratorKind {
    /// `x ln x`; Shannon mutual information.
    Shannon,
    /// `(x^a - 1) / (a - 1)` for `a > 0`, `a != 1`.
    Alpha(f64),
    /// `|x - 1| / 2`.
    TotalVariation,
    /// `(x - 1)^2`.
    ChiSquare,
    Custom { name: String, f: CustomFn },
}

impl fmt::Debug for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::Shannon => write!(f, "Shannon"),
            GeneratorKind::Alpha(a) => write!(f, "Alpha({a})"),
            GeneratorKind::TotalVariation => write!(f, "TotalVariation"),
            GeneratorKind::ChiSquare => write!(f, "ChiSquare"),
            GeneratorKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A convex generator `g` with `g(1) = 0`, clipped from above at `U`.
#[derive(Debug, Clone)]
pub struct Generator {
    kind: GeneratorKind,
    clip_bound: f64,
}

impl Generator {
    pub fn shannon() -> Self {
        Self { kind: GeneratorKind::Shannon, clip_bound: DEFAULT_CLIP_BOUND }
    }

    pub fn alpha(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) || alpha == 1.0 {
            return Err(Error::invalid(format!("alpha must be positive, finite and != 1, got {alpha}")));
        }
        Ok(Self { kind: GeneratorKind::Alpha(alpha), clip_bound: DEFAULT_CLIP_BOUND })
    }

    pub fn total_variation() -> Self {
        Self { kind: GeneratorKind::TotalVariation, clip_bound: DEFAULT_CLIP_BOUND }
    }

    pub fn chi_square() -> Self {
        Self { kind: GeneratorKind::ChiSquare, clip_bound: DEFAULT_CLIP_BOUND }
    }

    /// User-supplied generator; rejected unless `|g(1)| <= 1e-12`.
    pub fn custom<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let at_one = f(1.0);
        if !(at_one.abs() <= 1e-12) {
            return Err(Error::invalid(format!("generator must satisfy g(1) = 0, got g(1) = {at_one}")));
        }
        Ok(Self { kind: GeneratorKind::Custom { name: name.into(), f: Arc::new(f) }, clip_bound: DEFAULT_CLIP_BOUND })
    }

    /// Sets `U`; `f64::INFINITY` disables clipping.
    pub fn with_clip_bound(mut self, u: f64) -> Result<Self> {
        if u.is_nan() || u <= 0.0 {
            return Err(Error::invalid(format!("clip bound U must be positive, got {u}")));
        }
        self.clip_bound = u;
        Ok(self)
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GeneratorKind::Shannon => "shannon".into(),
            GeneratorKind::Alpha(a) => format!("alpha({a})"),
            GeneratorKind::TotalVariation => "tv".into(),
            GeneratorKind::ChiSquare => "chi2".into(),
            GeneratorKind::Custom { name, .. } => name.clone(),
        }
    }

    /// Unclipped `g(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            // Stored edges always have x > 0, so no 0 ln 0 case.
            GeneratorKind::Shannon => x * x.ln(),
            GeneratorKind::Alpha(a) => (x.powf(*a) - 1.0) / (a - 1.0),
            GeneratorKind::TotalVariation => 0.5 * (x - 1.0).abs(),
            GeneratorKind::ChiSquare => (x - 1.0) * (x - 1.0),
            GeneratorKind::Custom { f, .. } => f(x),
        }
    }

    /// `min(g(x), U)`.
    pub fn clipped(&self, x: f64) -> f64 {
        let v = self.eval(x);
        // f64::min would swallow NaN.
        if v.is_nan() {
            v
        } else {
            v.min(self.clip_bound)
        }
    }
}

/// An estimate with the context it was produced in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate {
    /// Nats.
    pub value: f64,
    pub n_samples: u64,
    pub epsilon: f64,
    pub generator: String,
}

impl MiEstimate {
    pub fn bits(&self) -> f64 {
        self.value / std::f64::consts::LN_2
    }
}

/// `sum over edges of omega_i * omega'_j * min(g(omega_ij), U)`.
pub fn base_estimate(graph: &DependenceGraph, g: &Generator) -> Result<MiEstimate> {
    if graph.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut acc = CompensatedSum::default();
    for e in graph.edges() {
        let w = e.weight;
        debug_assert!(w.omega_ij > 0.0);
        let gx = g.clipped(w.omega_ij);
        if !gx.is_finite() {
            return Err(Error::NonFiniteGenerator { omega: w.omega_ij, value: gx });
        }
        acc.add(w.omega_i * w.omega_j_prime * gx);
    }
    Ok(MiEstimate { value: acc.value(), n_samples: graph.n_samples(), epsilon: graph.epsilon(), generator: g.name() })
}

/// Hashes `samples` at bin width `epsilon` and returns the base estimate.
pub fn mi_from_samples(
    samples: &SampleBatch,
    epsilon: f64,
    g: &Generator,
    seed: u64,
    opts: &HashOptions,
) -> Result<MiEstimate> {
    let (cx, cy) = HashConfig::pair_for_batch(epsilon, samples.len(), seed, opts)?;
    let graph = build_graph(samples, &cx, &cy)?;
    base_estimate(&graph, g)
}
