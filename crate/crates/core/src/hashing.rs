//! Locality-sensitive hashing of sample vectors into buckets.
//!
//! The quantizer `H1(x) = floor((x + b) / eps)` is applied per coordinate
//! with one shared random shift `b` drawn from `[0, eps]`. In [`HashMode::Floor`]
//! the resulting integer vector is folded into `{1..F}` by a seeded 64-bit
//! mixer `H2`; [`HashMode::ExactBucket`] keys buckets on the raw integer
//! vector; [`HashMode::PStable`] quantizes a random `d x r` projection of
//! the point instead of the point itself.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::numeric::{derive_seed, mix64, unit_f64};

/// Default multiplier for the bucket count `F = c_H * N`.
pub const DEFAULT_C_H: u64 = 4;

const SHIFT_STREAM: u64 = 0x53_4849_4654;
const X_SIDE_STREAM: u64 = 1;
const Y_SIDE_STREAM: u64 = 2;
const PROJECTION_STREAM: u64 = 0x5053_5441_424c;

/// Inline storage covers typical joint dimensions without allocating.
pub type Cell = SmallVec<[i64; 4]>;

/// Stable law used to draw random projection entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StableLaw {
    /// 2-stable.
    Gaussian,
    /// 1-stable.
    Cauchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashMode {
    /// `H2(H1(x))` into `F` buckets.
    Floor,
    /// `H1(x W)` for a random `d x r` matrix `W`; `r = None` means `min(d, 8)`.
    PStable { r: Option<usize>, law: StableLaw },
    /// Raw `H1(x)` used as the bucket key; no `H2` collisions.
    ExactBucket,
}

impl HashMode {
    pub fn name(&self) -> &'static str {
        match self {
            HashMode::Floor => "floor",
            HashMode::PStable { .. } => "pstable",
            HashMode::ExactBucket => "exact",
        }
    }
}

/// Bucket identifier produced by [`hash_point`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BucketId {
    /// Post-`H2` id in `{1..F}`.
    Bucket(u64),
    /// Raw quantizer output.
    Cell(Cell),
}

/// Parameters for one side (`X` or `Y`) of the hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashConfig {
    epsilon: f64,
    shift: f64,
    f_buckets: u64,
    seed: u64,
    mode: HashMode,
}

impl HashConfig {
    pub fn new(epsilon: f64, shift: f64, f_buckets: u64, seed: u64, mode: HashMode) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(0.0..=epsilon).contains(&shift) {
            return Err(Error::invalid(format!("shift {shift} outside [0, {epsilon}]")));
        }
        if f_buckets == 0 {
            return Err(Error::invalid("bucket count F must be at least 1"));
        }
        if let HashMode::PStable { r: Some(0), .. } = mode {
            return Err(Error::invalid("projection rank r must be at least 1"));
        }
        Ok(Self { epsilon, shift, f_buckets, seed, mode })
    }

    /// X- and Y-side configurations for a batch of `n` samples.
    ///
    /// Both sides share `eps` and the shift `b`; the `H2` and projection
    /// seeds of the two sides are derived independently from `seed`.
    pub fn pair_for_batch(
        epsilon: f64,
        n: usize,
        seed: u64,
        opts: &HashOptions,
    ) -> Result<(HashConfig, HashConfig)> {
        if opts.c_h == 0 {
            return Err(Error::invalid("c_H must be at least 1"));
        }
        let shift = match opts.shift {
            Some(b) => b,
            None => random_shift(epsilon, seed),
        };
        let f = opts.c_h.saturating_mul(n.max(1) as u64);
        let cx = HashConfig::new(epsilon, shift, f, derive_seed(seed, X_SIDE_STREAM), opts.mode)?;
        let cy = HashConfig::new(epsilon, shift, f, derive_seed(seed, Y_SIDE_STREAM), opts.mode)?;
        Ok((cx, cy))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn f_buckets(&self) -> u64 {
        self.f_buckets
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mode(&self) -> HashMode {
        self.mode
    }

    /// Fixes the input dimension, drawing the projection matrix if needed.
    pub fn bind(&self, dim: usize) -> Result<PointHasher> {
        if dim == 0 {
            return Err(Error::invalid("cannot hash zero-dimensional points"));
        }
        let projection = match self.mode {
            HashMode::PStable { r, law } => {
                let r = r.unwrap_or_else(|| dim.min(8));
                Some(Projection::draw(dim, r, law, derive_seed(self.seed, PROJECTION_STREAM)))
            }
            _ => None,
        };
        Ok(PointHasher { config: self.clone(), dim, projection })
    }
}

/// Hashing mode, bucket multiplier, and shift policy shared by estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashOptions {
    pub mode: HashMode,
    pub c_h: u64,
    /// `None` draws `b` uniformly from `[0, eps]` using the seed.
    pub shift: Option<f64>,
}

impl Default for HashOptions {
    fn default() -> Self {
        Self { mode: HashMode::Floor, c_h: DEFAULT_C_H, shift: None }
    }
}

impl HashOptions {
    pub fn floor() -> Self {
        Self::default()
    }

    pub fn exact() -> Self {
        Self { mode: HashMode::ExactBucket, ..Self::default() }
    }

    pub fn pstable(r: Option<usize>, law: StableLaw) -> Self {
        Self { mode: HashMode::PStable { r, law }, ..Self::default() }
    }

    pub fn with_shift(mut self, b: f64) -> Self {
        self.shift = Some(b);
        self
    }

    pub fn with_c_h(mut self, c_h: u64) -> Self {
        self.c_h = c_h;
        self
    }
}

/// Fraction of `eps` used as the shift for a given seed.
pub fn shift_fraction(seed: u64) -> f64 {
    unit_f64(derive_seed(seed, SHIFT_STREAM))
}

fn random_shift(epsilon: f64, seed: u64) -> f64 {
    (shift_fraction(seed) * epsilon).min(epsilon)
}

#[derive(Debug, Clone)]
struct Projection {
    /// Row-major `dim x r`.
    w: Vec<f64>,
    r: usize,
}

impl Projection {
    fn draw(dim: usize, r: usize, law: StableLaw, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = match law {
            StableLaw::Gaussian => (0..dim * r).map(|_| StandardNormal.sample(&mut rng)).collect(),
            StableLaw::Cauchy => {
                let cauchy = Cauchy::new(0.0, 1.0).expect("unit Cauchy");
                (0..dim * r).map(|_| cauchy.sample(&mut rng)).collect()
            }
        };
        Self { w, r }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (xi, row) in x.iter().zip(self.w.chunks_exact(self.r)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
    }
}

/// A [`HashConfig`] bound to a fixed input dimension.
#[derive(Debug, Clone)]
pub struct PointHasher {
    config: HashConfig,
    dim: usize,
    projection: Option<Projection>,
}

impl PointHasher {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &HashConfig {
        &self.config
    }

    /// Dimension of the quantized key (`r` for projections, `d` otherwise).
    pub fn key_dim(&self) -> usize {
        self.projection.as_ref().map_or(self.dim, |p| p.r)
    }

    pub fn hash(&self, x: &[f64]) -> Result<BucketId> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "point has dimension {}, hasher was bound to {}",
                x.len(),
                self.dim
            )));
        }
        let cfg = &self.config;
        let cell: Cell = match &self.projection {
            Some(p) => {
                let mut z: SmallVec<[f64; 8]> = SmallVec::from_elem(0.0, p.r);
                p.apply(x, &mut z);
                z.iter().map(|&v| h1_scalar(v, cfg.epsilon, cfg.shift)).collect::<Result<_>>()?
            }
            None => x.iter().map(|&v| h1_scalar(v, cfg.epsilon, cfg.shift)).collect::<Result<_>>()?,
        };
        Ok(match cfg.mode {
            HashMode::Floor => BucketId::Bucket(h2_bucket(&cell, cfg.f_buckets, cfg.seed)?),
            HashMode::ExactBucket | HashMode::PStable { .. } => BucketId::Cell(cell),
        })
    }
}

/// `floor((x + b) / eps)`.
pub fn h1_scalar(x: f64, epsilon: f64, shift: f64) -> Result<i64> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("cannot hash non-finite value {x}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let q = ((x + shift) / epsilon).floor();
    // i64::MAX is not representable; 2^63 is the first out-of-range float.
    const LIMIT: f64 = 9_223_372_036_854_775_808.0;
    if !(-LIMIT..LIMIT).contains(&q) {
        return Err(Error::invalid(format!("quantized value of {x} overflows a 64-bit cell index")));
    }
    Ok(q as i64)
}

/// Componentwise [`h1_scalar`] with the config's `(eps, b)`.
pub fn h1_vector(x: &[f64], config: &HashConfig) -> Result<Vec<i64>> {
    if x.is_empty() {
        return Err(Error::invalid("cannot hash an empty vector"));
    }
    x.iter().map(|&v| h1_scalar(v, config.epsilon, config.shift)).collect()
}

/// Seeded bucket hash `Z^d -> {1..F}`.
pub fn h2_bucket(z: &[i64], f_buckets: u64, seed: u64) -> Result<u64> {
    if f_buckets == 0 {
        return Err(Error::invalid("bucket count F must be at least 1"));
    }
    let mut h = mix64(seed ^ (z.len() as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    for &c in z {
        h = mix64(h ^ mix64(c as u64));
    }
    Ok(h % f_buckets + 1)
}

/// Hashes one point; binds the config to `x.len()` on every call.
pub fn hash_point(x: &[f64], config: &HashConfig) -> Result<BucketId> {
    config.bind(x.len())?.hash(x)
}
