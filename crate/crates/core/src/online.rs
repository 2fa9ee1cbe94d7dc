//! Streaming estimation with amortized constant-time updates.
//!
//! A [`StreamState`] keeps every pushed pair, the dependence graph for the
//! current bin width, and running sums from which the estimate is read in
//! `O(1)`. The bin width follows an [`EpsilonSchedule`] and is refreshed,
//! with a full rebuild from the retained samples, whenever the sample count
//! reaches a power of two. Rebuild cost sums to at most `2N` over `N`
//! pushes.
//!
//! Every edge term `(N_i M_j / N^2) g(N_ij N / (N_i M_j))` depends on `N`,
//! so the running sums are kept in a form where `N` factors out:
//!
//! * Shannon with no reachable clipping uses the entropy decomposition
//!   `I = (S_ij - S_i - S_j) / N + ln N` with `S = sum c ln c`; a push
//!   changes one count per sum.
//! * Other presets, and Shannon once clipping can occur, split the range of
//!   `omega_ij` into pieces on which the term is `sum_k coef_k(N) psi_k(N_ij,
//!   N_i, M_j)`. A push refreshes `psi` for the edges incident to the two
//!   touched nodes; untouched edges whose `omega_ij` drifts across a piece
//!   boundary as `N` grows are moved by a threshold queue. Cost per push is
//!   the degree of the touched nodes.
//! * Custom generators re-sum every edge after each push.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::{Arc, RwLock};

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::estimator::{base_estimate, Generator, GeneratorKind};
use crate::ensemble::solve_weights;
use crate::graph::{build_graph, edge_ratio, DependenceGraph};
use crate::hashing::{HashConfig, HashMode, HashOptions, PointHasher, StableLaw};
use crate::numeric::{derive_seed, CompensatedSum};
use crate::samples::SampleBatch;

/// Bin width as a function of the sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSchedule {
    Constant(f64),
    /// `scale * n^(-exponent)`.
    Power { scale: f64, exponent: f64 },
}

impl EpsilonSchedule {
    /// `n^(-1/(1+d))`, the bias-optimal width for a single estimator.
    pub fn for_dim(d: usize) -> Self {
        EpsilonSchedule::Power { scale: 1.0, exponent: 1.0 / (1.0 + d as f64) }
    }

    pub fn at(&self, n: u64) -> f64 {
        match *self {
            EpsilonSchedule::Constant(eps) => eps,
            EpsilonSchedule::Power { scale, exponent } => scale * (n.max(1) as f64).powf(-exponent),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            EpsilonSchedule::Constant(eps) => eps.is_finite() && eps > 0.0,
            EpsilonSchedule::Power { scale, exponent } => scale.is_finite() && scale > 0.0 && exponent.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid epsilon schedule {self:?}")))
        }
    }
}

/// Estimate published after the last completed push.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Published {
    pub value: f64,
    pub n: u64,
}

/// Read handle for the latest published estimate; cheap to clone and share.
#[derive(Debug, Clone, Default)]
pub struct EstimateReader(Arc<RwLock<Option<Published>>>);

impl EstimateReader {
    pub fn latest(&self) -> Option<Published> {
        *self.0.read().expect("estimate lock poisoned")
    }

    fn publish(&self, p: Option<Published>) {
        *self.0.write().expect("estimate lock poisoned") = p;
    }
}

// ---------------------------------------------------------------------------
// Piecewise-separable generator forms.

#[derive(Debug, Clone, Copy, PartialEq)]
enum Basis {
    /// `N_ij ln(N_ij / (N_i M_j))`
    LogRatio,
    /// `N_ij`
    Count,
    /// `N_i M_j`
    Product,
    /// `N_ij^a (N_i M_j)^(1-a)`
    PowRatio(f64),
    /// `N_ij^2 / (N_i M_j)`
    SqOverProduct,
}

impl Basis {
    #[inline]
    fn eval(self, n_ij: u64, n_i: u64, m_j: u64) -> f64 {
        let (a, p) = (n_ij as f64, n_i as f64 * m_j as f64);
        match self {
            Basis::LogRatio => a * (a / p).ln(),
            Basis::Count => a,
            Basis::Product => p,
            Basis::PowRatio(alpha) => a.powf(alpha) * p.powf(1.0 - alpha),
            Basis::SqOverProduct => a * a / p,
        }
    }
}

/// `c * N^p * (ln N if log)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Coef {
    c: f64,
    p: f64,
    log: bool,
}

impl Coef {
    const fn new(c: f64, p: f64) -> Self {
        Self { c, p, log: false }
    }

    fn eval(self, n: f64) -> f64 {
        let v = self.c * n.powf(self.p);
        if self.log {
            v * n.ln()
        } else {
            v
        }
    }
}

type Terms = SmallVec<[(Basis, Coef); 3]>;

/// Pieces over `omega_ij`, ordered by `boundaries`: piece `r` covers
/// `[boundaries[r-1], boundaries[r])`.
#[derive(Debug, Clone)]
struct PieceTable {
    boundaries: Vec<f64>,
    pieces: Vec<Terms>,
}

impl PieceTable {
    fn piece_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&b| b <= x)
    }

    fn for_generator(g: &Generator) -> Option<Self> {
        let (own_bounds, own_pieces): (Vec<f64>, Vec<Terms>) = match *g.kind() {
            GeneratorKind::Shannon => (
                vec![],
                vec![smallvec::smallvec![
                    (Basis::LogRatio, Coef::new(1.0, -1.0)),
                    (Basis::Count, Coef { c: 1.0, p: -1.0, log: true }),
                ]],
            ),
            GeneratorKind::Alpha(a) => (
                vec![],
                vec![smallvec::smallvec![
                    (Basis::PowRatio(a), Coef::new(1.0 / (a - 1.0), a - 2.0)),
                    (Basis::Product, Coef::new(-1.0 / (a - 1.0), -2.0)),
                ]],
            ),
            GeneratorKind::TotalVariation => (
                vec![1.0],
                vec![
                    smallvec::smallvec![(Basis::Count, Coef::new(-0.5, -1.0)), (Basis::Product, Coef::new(0.5, -2.0))],
                    smallvec::smallvec![(Basis::Count, Coef::new(0.5, -1.0)), (Basis::Product, Coef::new(-0.5, -2.0))],
                ],
            ),
            GeneratorKind::ChiSquare => (
                vec![],
                vec![smallvec::smallvec![
                    (Basis::SqOverProduct, Coef::new(1.0, 0.0)),
                    (Basis::Count, Coef::new(-2.0, -1.0)),
                    (Basis::Product, Coef::new(1.0, -2.0)),
                ]],
            ),
            GeneratorKind::Custom { .. } => return None,
        };
        let u = g.clip_bound();
        let clipped: Terms = smallvec::smallvec![(Basis::Product, Coef::new(u, -2.0))];
        let (lo, hi) = unclipped_interval(g);

        let mut boundaries = Vec::new();
        let mut pieces = Vec::new();
        if lo > 0.0 {
            pieces.push(clipped.clone());
            boundaries.push(lo);
        }
        // Own pieces restricted to [lo, hi).
        let mut k = own_bounds.partition_point(|&b| b <= lo);
        pieces.push(own_pieces[k].clone());
        while k < own_bounds.len() && own_bounds[k] < hi {
            boundaries.push(own_bounds[k]);
            k += 1;
            pieces.push(own_pieces[k].clone());
        }
        if hi.is_finite() {
            boundaries.push(hi);
            pieces.push(clipped);
        }
        Some(Self { boundaries, pieces })
    }
}

/// `[lo, hi]` where `g <= U` (convex `g`, `g(1) = 0 < U`).
fn unclipped_interval(g: &Generator) -> (f64, f64) {
    let u = g.clip_bound();
    if u.is_infinite() {
        return (0.0, f64::INFINITY);
    }
    let over = |x: f64| g.eval(x) > u;
    let hi = {
        let mut b = 2.0;
        while !over(b) && b < 1e300 {
            b *= 2.0;
        }
        if !over(b) {
            f64::INFINITY
        } else {
            bisect(1.0, b, over)
        }
    };
    let lo = if over(f64::MIN_POSITIVE) { bisect(1.0, f64::MIN_POSITIVE, over) } else { 0.0 };
    (lo, hi)
}

/// Boundary between `ok` (`!over`) at `good` and `over` at `bad`.
fn bisect(mut good: f64, mut bad: f64, over: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (good + bad);
        if mid == good || mid == bad {
            break;
        }
        if over(mid) {
            bad = mid;
        } else {
            good = mid;
        }
    }
    bad
}

#[derive(Debug, Clone, Default)]
struct EdgeState {
    piece: usize,
    psi: SmallVec<[f64; 3]>,
    version: u32,
}

#[derive(Debug, Clone)]
struct PieceEngine {
    table: PieceTable,
    sums: Vec<SmallVec<[CompensatedSum; 3]>>,
    edges: Vec<EdgeState>,
    adj_x: Vec<Vec<usize>>,
    adj_y: Vec<Vec<usize>>,
    queue: BinaryHeap<Reverse<(u64, usize, u32)>>,
}

impl PieceEngine {
    fn new(table: PieceTable) -> Self {
        let sums = table.pieces.iter().map(|t| t.iter().map(|_| CompensatedSum::default()).collect()).collect();
        Self { table, sums, edges: Vec::new(), adj_x: Vec::new(), adj_y: Vec::new(), queue: BinaryHeap::new() }
    }

    fn from_graph(table: PieceTable, graph: &DependenceGraph) -> Self {
        let mut e = Self::new(table);
        let n = graph.n_samples();
        for idx in 0..graph.edge_count() {
            e.attach(graph, idx);
            e.refresh(graph, idx, n);
        }
        e
    }

    fn attach(&mut self, graph: &DependenceGraph, idx: usize) {
        let (i, j, _) = graph.edge_at(idx);
        if self.adj_x.len() <= i {
            self.adj_x.resize_with(i + 1, Vec::new);
        }
        if self.adj_y.len() <= j {
            self.adj_y.resize_with(j + 1, Vec::new);
        }
        self.adj_x[i].push(idx);
        self.adj_y[j].push(idx);
        debug_assert_eq!(self.edges.len(), idx);
        self.edges.push(EdgeState { piece: usize::MAX, ..EdgeState::default() });
    }

    /// Replaces the edge's contribution with one computed from current
    /// counts and reschedules its next boundary crossing.
    fn refresh(&mut self, graph: &DependenceGraph, idx: usize, n: u64) {
        let (i, j, n_ij) = graph.edge_at(idx);
        let (n_i, m_j) = (graph.x_count_at(i), graph.y_count_at(j));
        let state = &mut self.edges[idx];
        if state.piece != usize::MAX {
            for (s, v) in self.sums[state.piece].iter_mut().zip(&state.psi) {
                s.sub(*v);
            }
        }
        let x = edge_ratio(n_ij, n_i, m_j, n as f64);
        let piece = self.table.piece_of(x);
        state.piece = piece;
        state.psi = self.table.pieces[piece].iter().map(|(b, _)| b.eval(n_ij, n_i, m_j)).collect();
        for (s, v) in self.sums[piece].iter_mut().zip(&state.psi) {
            s.add(*v);
        }
        state.version = state.version.wrapping_add(1);
        // omega_ij grows linearly in N while the edge is untouched.
        if let Some(&b) = self.table.boundaries.get(piece) {
            let at = (b * (n_i as f64 * m_j as f64) / n_ij as f64).ceil();
            let at = if at.is_finite() && at < u64::MAX as f64 { at as u64 } else { u64::MAX };
            self.queue.push(Reverse((at.max(n + 1), idx, state.version)));
        }
    }

    fn on_insert(&mut self, graph: &DependenceGraph, touch: crate::graph::Touch) {
        let n = graph.n_samples();
        if touch.new_edge {
            self.attach(graph, touch.edge_index);
        }
        let row = std::mem::take(&mut self.adj_x[touch.x_index]);
        for &e in &row {
            self.refresh(graph, e, n);
        }
        self.adj_x[touch.x_index] = row;
        let col = std::mem::take(&mut self.adj_y[touch.y_index]);
        for &e in &col {
            if graph.edge_at(e).0 != touch.x_index {
                self.refresh(graph, e, n);
            }
        }
        self.adj_y[touch.y_index] = col;
        self.drain_crossings(graph);
    }

    fn drain_crossings(&mut self, graph: &DependenceGraph) {
        let n = graph.n_samples();
        while let Some(&Reverse((at, idx, version))) = self.queue.peek() {
            if at > n {
                break;
            }
            self.queue.pop();
            if self.edges[idx].version == version {
                self.refresh(graph, idx, n);
            }
        }
    }

    fn value(&self, n: u64) -> f64 {
        let n = n as f64;
        self.table
            .pieces
            .iter()
            .zip(&self.sums)
            .flat_map(|(terms, sums)| terms.iter().zip(sums).map(|((_, c), s)| c.eval(n) * s.value()))
            .sum()
    }

    fn sum_parts(&self) -> Vec<(f64, f64)> {
        self.sums.iter().flatten().map(CompensatedSum::parts).collect()
    }

    fn load_sum_parts(&mut self, parts: &[(f64, f64)]) -> Result<()> {
        let slots: Vec<&mut CompensatedSum> = self.sums.iter_mut().flatten().collect();
        if slots.len() != parts.len() {
            return Err(Error::Decode(format!("expected {} running sums, found {}", slots.len(), parts.len())));
        }
        for (s, &(a, b)) in slots.into_iter().zip(parts) {
            *s = CompensatedSum::from_parts(a, b);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct EntropyEngine {
    joint: CompensatedSum,
    x: CompensatedSum,
    y: CompensatedSum,
}

#[inline]
fn c_ln_c(c: u64) -> f64 {
    if c == 0 {
        return 0.0;
    }
    let c = c as f64;
    c * c.ln()
}

impl EntropyEngine {
    fn from_graph(graph: &DependenceGraph) -> Self {
        Self {
            joint: graph.edges().map(|e| c_ln_c(e.n_ij)).collect(),
            x: graph.x_nodes().map(|(_, c)| c_ln_c(c)).collect(),
            y: graph.y_nodes().map(|(_, c)| c_ln_c(c)).collect(),
        }
    }

    fn on_insert(&mut self, graph: &DependenceGraph, touch: crate::graph::Touch) {
        let step = |s: &mut CompensatedSum, c: u64| {
            s.add(c_ln_c(c));
            s.sub(c_ln_c(c - 1));
        };
        step(&mut self.joint, graph.edge_at(touch.edge_index).2);
        step(&mut self.x, graph.x_count_at(touch.x_index));
        step(&mut self.y, graph.y_count_at(touch.y_index));
    }

    fn value(&self, n: u64) -> f64 {
        let nf = n as f64;
        (self.joint.value() - self.x.value() - self.y.value()) / nf + nf.ln()
    }
}

#[derive(Debug, Clone)]
enum Engine {
    Entropy(EntropyEngine),
    Pieces(Box<PieceEngine>),
    Recompute,
}

impl Engine {
    const ENTROPY: u8 = 0;
    const PIECES: u8 = 1;
    const RECOMPUTE: u8 = 2;

    fn tag(&self) -> u8 {
        match self {
            Engine::Entropy(_) => Self::ENTROPY,
            Engine::Pieces(_) => Self::PIECES,
            Engine::Recompute => Self::RECOMPUTE,
        }
    }
}

/// Streaming estimator state.
#[derive(Debug, Clone)]
pub struct StreamState {
    schedule: EpsilonSchedule,
    generator: Generator,
    seed: u64,
    hash: HashOptions,
    dims: Option<(usize, usize)>,
    buf_x: Vec<f64>,
    buf_y: Vec<f64>,
    n: u64,
    rebuilds: u64,
    configs: Option<(HashConfig, HashConfig)>,
    hashers: Option<(PointHasher, PointHasher)>,
    graph: DependenceGraph,
    engine: Engine,
    reader: EstimateReader,
}

impl StreamState {
    /// Empty state; the first push triggers the first rebuild.
    pub fn new(schedule: EpsilonSchedule, generator: Generator, seed: u64, hash: HashOptions) -> Result<Self> {
        schedule.validate()?;
        if hash.c_h == 0 {
            return Err(Error::invalid("c_H must be at least 1"));
        }
        Ok(Self {
            schedule,
            generator,
            seed,
            hash,
            dims: None,
            buf_x: Vec::new(),
            buf_y: Vec::new(),
            n: 0,
            rebuilds: 0,
            configs: None,
            hashers: None,
            graph: DependenceGraph::default(),
            engine: Engine::Recompute,
            reader: EstimateReader::default(),
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of full rebuilds so far.
    pub fn rebuilds(&self) -> u64 {
        self.rebuilds
    }

    /// Count at which the next rebuild happens.
    pub fn next_rebuild_at(&self) -> u64 {
        if self.n == 0 {
            1
        } else {
            (self.n + 1).next_power_of_two()
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.configs.as_ref().map(|(c, _)| c.epsilon())
    }

    /// Hash configurations currently in force.
    pub fn hash_configs(&self) -> Option<(&HashConfig, &HashConfig)> {
        self.configs.as_ref().map(|(a, b)| (a, b))
    }

    pub fn graph(&self) -> &DependenceGraph {
        &self.graph
    }

    pub fn reader(&self) -> EstimateReader {
        self.reader.clone()
    }

    /// Retained samples as a batch.
    pub fn samples(&self) -> Result<SampleBatch> {
        let (dx, dy) = self.dims.ok_or(Error::EmptyInput)?;
        SampleBatch::new(self.buf_x.clone(), dx, self.buf_y.clone(), dy)
    }

    pub fn estimate(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::EmptyInput);
        }
        match &self.engine {
            Engine::Entropy(e) => Ok(e.value(self.n)),
            Engine::Pieces(p) => Ok(p.value(self.n)),
            Engine::Recompute => Ok(base_estimate(&self.graph, &self.generator)?.value),
        }
    }

    /// Adds one pair and returns the updated estimate.
    pub fn push(&mut self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.dims {
            Some((dx, dy)) if dx != x.len() || dy != y.len() => {
                return Err(Error::invalid(format!(
                    "pair has dimensions ({}, {}), stream expects ({dx}, {dy})",
                    x.len(),
                    y.len()
                )))
            }
            None if x.is_empty() || y.is_empty() => return Err(Error::invalid("empty sample vector")),
            _ => {}
        }
        if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample value {v}")));
        }
        let keys = if (self.n + 1).is_power_of_two() {
            None
        } else {
            let (hx, hy) = self.hashers.as_ref().expect("hashers exist after first rebuild");
            Some((hx.hash(x)?, hy.hash(y)?))
        };
        self.dims.get_or_insert((x.len(), y.len()));
        self.buf_x.extend_from_slice(x);
        self.buf_y.extend_from_slice(y);
        self.n += 1;
        match keys {
            None => self.rebuild()?,
            Some((kx, ky)) => {
                let touch = self.graph.insert(kx, ky);
                match &mut self.engine {
                    Engine::Entropy(e) => e.on_insert(&self.graph, touch),
                    Engine::Pieces(p) => p.on_insert(&self.graph, touch),
                    Engine::Recompute => {}
                }
            }
        }
        let value = self.estimate()?;
        self.reader.publish(Some(Published { value, n: self.n }));
        Ok(value)
    }

    /// Rehashes the buffer at the scheduled width for the current count.
    fn rebuild(&mut self) -> Result<()> {
        self.install_epoch()?;
        self.engine = self.select_engine();
        self.rebuilds += 1;
        Ok(())
    }

    /// Hash configs and graph for the epoch starting at the largest power of
    /// two `<= n`.
    fn install_epoch(&mut self) -> Result<()> {
        let epoch_start = 1u64 << (63 - self.n.leading_zeros());
        let eps = self.schedule.at(epoch_start);
        let (cx, cy) = HashConfig::pair_for_batch(eps, epoch_start as usize, self.seed, &self.hash)?;
        let batch = self.samples()?;
        self.graph = build_graph(&batch, &cx, &cy)?;
        self.hashers = Some((cx.bind(batch.dim_x())?, cy.bind(batch.dim_y())?));
        self.configs = Some((cx, cy));
        Ok(())
    }

    fn select_engine(&self) -> Engine {
        let epoch_end = 2 * (1u64 << (63 - self.n.leading_zeros())) - 1;
        let g = &self.generator;
        match g.kind() {
            // omega_ij <= N, so clipping is unreachable while g(N) <= U.
            GeneratorKind::Shannon if g.eval(epoch_end as f64) <= g.clip_bound() => {
                Engine::Entropy(EntropyEngine::from_graph(&self.graph))
            }
            _ => match PieceTable::for_generator(g) {
                Some(table) => Engine::Pieces(Box::new(PieceEngine::from_graph(table, &self.graph))),
                None => Engine::Recompute,
            },
        }
    }

    // -- snapshots ----------------------------------------------------------

    /// Serializes the state; see [`snapshot`] for the byte layout.
    pub fn snapshot(&self) -> Result<Vec<u8>> {
        snapshot::encode(self)
    }

    /// Restores a state produced by [`StreamState::snapshot`].
    pub fn restore(bytes: &[u8]) -> Result<Self> {
        snapshot::decode(bytes)
    }

    fn running_sums(&self) -> Vec<(f64, f64)> {
        match &self.engine {
            Engine::Entropy(e) => vec![e.joint.parts(), e.x.parts(), e.y.parts()],
            Engine::Pieces(p) => p.sum_parts(),
            Engine::Recompute => vec![],
        }
    }
}

/// Runs one [`StreamState`] per ensemble index and combines them with
/// minimum-norm bias-cancelling weights.
#[derive(Debug, Clone)]
pub struct OnlineEnsemble {
    t_values: Vec<f64>,
    weights: Vec<f64>,
    members: Vec<StreamState>,
}

impl OnlineEnsemble {
    /// Member `t` uses `eps_t(n) = t * n^(-1/(2d))` with `d = dim_x + dim_y`.
    pub fn new(t_values: Vec<f64>, dim_x: usize, dim_y: usize, generator: Generator, seed: u64, hash: HashOptions) -> Result<Self> {
        let d = dim_x + dim_y;
        if dim_x == 0 || dim_y == 0 {
            return Err(Error::invalid("dimensions must be at least 1"));
        }
        let weights = solve_weights(&t_values, d)?;
        let members = t_values
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let schedule = EpsilonSchedule::Power { scale: t, exponent: 1.0 / (2.0 * d as f64) };
                StreamState::new(schedule, generator.clone(), derive_seed(seed, k as u64), hash)
            })
            .collect::<Result<_>>()?;
        Ok(Self { t_values, weights, members })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn t_values(&self) -> &[f64] {
        &self.t_values
    }

    pub fn members(&self) -> &[StreamState] {
        &self.members
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) -> Result<f64> {
        let mut value = 0.0;
        for (m, w) in self.members.iter_mut().zip(&self.weights) {
            value += w * m.push(x, y)?;
        }
        Ok(value)
    }

    pub fn estimate(&self) -> Result<f64> {
        let mut value = 0.0;
        for (m, w) in self.members.iter().zip(&self.weights) {
            value += w * m.estimate()?;
        }
        Ok(value)
    }
}

pub mod snapshot {
    //! Versioned binary snapshot of a [`StreamState`](super::StreamState).
    //!
    //! All integers and floats are little-endian; floats are IEEE-754 bits.
    //!
    //! ```text
    //! offset  size  field
    //! 0       4     magic "EDGS"
    //! 4       2     format version (u16, currently 1)
    //! 6       8     payload length L (u64)
    //! 14      L     payload
    //! 14+L    8     checksum: SplitMix64 chain over the payload bytes (u64)
    //!
    //! payload:
    //!   seed                u64
    //!   schedule tag        u8   0 = constant, 1 = power
    //!   schedule params     f64 f64   (eps, 0) or (scale, exponent)
    //!   generator tag       u8   0 shannon, 1 alpha, 2 tv, 3 chi2
    //!   generator param     f64  alpha (0 otherwise)
    //!   clip bound U        f64
    //!   hash mode tag       u8   0 floor, 1 exact, 2 pstable
    //!   projection rank     u64  0 = default min(d, 8)
    //!   stable law          u8   0 gaussian, 1 cauchy
    //!   c_H                 u64
    //!   shift tag           u8   0 seeded, 1 fixed
    //!   shift value         f64
    //!   dim_x, dim_y        u32 u32  (0, 0 for an empty stream)
    //!   n                   u64
    //!   rebuilds            u64
    //!   x samples           n * dim_x f64
    //!   y samples           n * dim_y f64
    //!   engine tag          u8   0 entropy, 1 piecewise, 2 recompute
    //!   running sums        u32 count, then count * (sum f64, compensation f64)
    //! ```
    //!
    //! Graph counts are not stored: they are rebuilt from the samples with
    //! the hash configuration implied by `n`, which reproduces the original
    //! insertion order. Running sums are restored bit-for-bit.

    use super::*;
    use crate::numeric::mix64;

    pub const MAGIC: &[u8; 4] = b"EDGS";
    pub const VERSION: u16 = 1;

    fn checksum(payload: &[u8]) -> u64 {
        payload.chunks(8).fold(mix64(payload.len() as u64), |h, c| {
            let mut w = [0u8; 8];
            w[..c.len()].copy_from_slice(c);
            mix64(h ^ u64::from_le_bytes(w))
        })
    }

    struct Writer(Vec<u8>);

    impl Writer {
        fn u8(&mut self, v: u8) {
            self.0.push(v);
        }
        fn u32(&mut self, v: u32) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        fn u64(&mut self, v: u64) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        fn f64(&mut self, v: f64) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    struct Reader<'a> {
        buf: &'a [u8],
        pos: usize,
    }

    impl<'a> Reader<'a> {
        fn take(&mut self, k: usize) -> Result<&'a [u8]> {
            let end = self.pos.checked_add(k).filter(|&e| e <= self.buf.len());
            let end = end.ok_or_else(|| Error::Decode(format!("truncated at byte {} (wanted {k} more)", self.pos)))?;
            let s = &self.buf[self.pos..end];
            self.pos = end;
            Ok(s)
        }
        fn u8(&mut self) -> Result<u8> {
            Ok(self.take(1)?[0])
        }
        fn u16(&mut self) -> Result<u16> {
            Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
        }
        fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
        }
        fn u64(&mut self) -> Result<u64> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
        }
        fn f64(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
        }
        fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
            let bytes = self.take(k.checked_mul(8).ok_or_else(|| Error::Decode("length overflow".into()))?)?;
            Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        }
    }

    pub(super) fn encode(s: &StreamState) -> Result<Vec<u8>> {
        let mut p = Writer(Vec::new());
        p.u64(s.seed);
        match s.schedule {
            EpsilonSchedule::Constant(e) => {
                p.u8(0);
                p.f64(e);
                p.f64(0.0);
            }
            EpsilonSchedule::Power { scale, exponent } => {
                p.u8(1);
                p.f64(scale);
                p.f64(exponent);
            }
        }
        let (tag, param) = match *s.generator.kind() {
            GeneratorKind::Shannon => (0, 0.0),
            GeneratorKind::Alpha(a) => (1, a),
            GeneratorKind::TotalVariation => (2, 0.0),
            GeneratorKind::ChiSquare => (3, 0.0),
            GeneratorKind::Custom { ref name, .. } => {
                return Err(Error::Unsupported(format!("custom generator '{name}' cannot be serialized")))
            }
        };
        p.u8(tag);
        p.f64(param);
        p.f64(s.generator.clip_bound());
        let (mode, rank, law) = match s.hash.mode {
            HashMode::Floor => (0, 0, 0),
            HashMode::ExactBucket => (1, 0, 0),
            HashMode::PStable { r, law } => (2, r.unwrap_or(0) as u64, matches!(law, StableLaw::Cauchy) as u8),
        };
        p.u8(mode);
        p.u64(rank);
        p.u8(law);
        p.u64(s.hash.c_h);
        match s.hash.shift {
            None => {
                p.u8(0);
                p.f64(0.0);
            }
            Some(b) => {
                p.u8(1);
                p.f64(b);
            }
        }
        let (dx, dy) = s.dims.unwrap_or((0, 0));
        p.u32(dx as u32);
        p.u32(dy as u32);
        p.u64(s.n);
        p.u64(s.rebuilds);
        s.buf_x.iter().for_each(|&v| p.f64(v));
        s.buf_y.iter().for_each(|&v| p.f64(v));
        p.u8(s.engine.tag());
        let sums = s.running_sums();
        p.u32(sums.len() as u32);
        for (a, b) in sums {
            p.f64(a);
            p.f64(b);
        }

        let payload = p.0;
        let mut out = Writer(Vec::with_capacity(payload.len() + 22));
        out.0.extend_from_slice(MAGIC);
        out.0.extend_from_slice(&VERSION.to_le_bytes());
        out.u64(payload.len() as u64);
        out.0.extend_from_slice(&payload);
        out.u64(checksum(&payload));
        Ok(out.0)
    }

    pub(super) fn decode(bytes: &[u8]) -> Result<StreamState> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Decode("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Decode(format!("unsupported snapshot version {version}")));
        }
        let len = usize::try_from(r.u64()?).map_err(|_| Error::Decode("payload too large".into()))?;
        let payload = r.take(len)?;
        let stored = r.u64()?;
        if r.pos != bytes.len() {
            return Err(Error::Decode(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if checksum(payload) != stored {
            return Err(Error::Decode("checksum mismatch".into()));
        }

        let mut r = Reader { buf: payload, pos: 0 };
        let seed = r.u64()?;
        let schedule = match (r.u8()?, r.f64()?, r.f64()?) {
            (0, e, _) => EpsilonSchedule::Constant(e),
            (1, scale, exponent) => EpsilonSchedule::Power { scale, exponent },
            (t, _, _) => return Err(Error::Decode(format!("unknown schedule tag {t}"))),
        };
        let (tag, param, clip) = (r.u8()?, r.f64()?, r.f64()?);
        let generator = match tag {
            0 => Generator::shannon(),
            1 => Generator::alpha(param).map_err(|e| Error::Decode(e.to_string()))?,
            2 => Generator::total_variation(),
            3 => Generator::chi_square(),
            t => return Err(Error::Decode(format!("unknown generator tag {t}"))),
        }
        .with_clip_bound(clip)
        .map_err(|e| Error::Decode(e.to_string()))?;
        let (mode, rank, law) = (r.u8()?, r.u64()?, r.u8()?);
        let law = if law == 1 { StableLaw::Cauchy } else { StableLaw::Gaussian };
        let mode = match mode {
            0 => HashMode::Floor,
            1 => HashMode::ExactBucket,
            2 => HashMode::PStable { r: (rank != 0).then_some(rank as usize), law },
            t => return Err(Error::Decode(format!("unknown hash mode tag {t}"))),
        };
        let c_h = r.u64()?;
        let shift = match (r.u8()?, r.f64()?) {
            (0, _) => None,
            (1, b) => Some(b),
            (t, _) => return Err(Error::Decode(format!("unknown shift tag {t}"))),
        };
        let (dx, dy) = (r.u32()? as usize, r.u32()? as usize);
        let n = r.u64()?;
        let rebuilds = r.u64()?;
        let nn = usize::try_from(n).map_err(|_| Error::Decode("sample count too large".into()))?;
        let buf_x = r.f64s(nn.saturating_mul(dx))?;
        let buf_y = r.f64s(nn.saturating_mul(dy))?;
        let engine_tag = r.u8()?;
        let count = r.u32()? as usize;
        let sums: Vec<(f64, f64)> = (0..count).map(|_| Ok((r.f64()?, r.f64()?))).collect::<Result<_>>()?;
        if r.pos != payload.len() {
            return Err(Error::Decode("payload has unread bytes".into()));
        }

        let hash = HashOptions { mode, c_h, shift };
        let mut s = StreamState::new(schedule, generator, seed, hash).map_err(|e| Error::Decode(e.to_string()))?;
        if n == 0 {
            return Ok(s);
        }
        if dx == 0 || dy == 0 {
            return Err(Error::Decode("non-empty stream with zero dimension".into()));
        }
        s.dims = Some((dx, dy));
        s.buf_x = buf_x;
        s.buf_y = buf_y;
        s.n = n;
        s.rebuilds = rebuilds;
        s.install_epoch()?;
        s.engine = s.select_engine();
        if s.engine.tag() != engine_tag {
            return Err(Error::Decode(format!("engine tag {engine_tag} does not match restored configuration")));
        }
        match &mut s.engine {
            Engine::Entropy(e) => {
                let [a, b, c] = sums[..] else {
                    return Err(Error::Decode(format!("expected 3 running sums, found {}", sums.len())));
                };
                e.joint = CompensatedSum::from_parts(a.0, a.1);
                e.x = CompensatedSum::from_parts(b.0, b.1);
                e.y = CompensatedSum::from_parts(c.0, c.1);
            }
            Engine::Pieces(p) => p.load_sum_parts(&sums)?,
            Engine::Recompute => {}
        }
        let value = s.estimate()?;
        s.reader.publish(Some(Published { value, n }));
        Ok(s)
    }
}
