//! Bipartite dependence graph built from hash collisions.
//!
//! `X`-side buckets are the `v` nodes and `Y`-side buckets the `u` nodes.
//! Only occupied nodes and edges are stored; counts are exact integers and
//! weights are derived from them on demand.

use std::hash::BuildHasherDefault;

use indexmap::map::Entry;
use indexmap::IndexMap;
use rayon::prelude::*;
use rustc_hash::FxHasher;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hashing::{BucketId, HashConfig, PointHasher};
use crate::samples::SampleBatch;

type FxIndexMap<K, V> = IndexMap<K, V, BuildHasherDefault<FxHasher>>;

/// Weights of one edge `(v_i, u_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeWeight {
    /// `N_i / N`.
    pub omega_i: f64,
    /// `M_j / N`.
    pub omega_j_prime: f64,
    /// `N_ij N / (N_i M_j)`.
    pub omega_ij: f64,
}

impl EdgeWeight {
    pub fn from_counts(n_ij: u64, n_i: u64, m_j: u64, n: u64) -> Self {
        let n = n as f64;
        Self {
            omega_i: n_i as f64 / n,
            omega_j_prime: m_j as f64 / n,
            omega_ij: edge_ratio(n_ij, n_i, m_j, n),
        }
    }
}

/// `N_ij N / (N_i M_j)` evaluated the same way everywhere.
#[inline]
pub(crate) fn edge_ratio(n_ij: u64, n_i: u64, m_j: u64, n: f64) -> f64 {
    (n_ij as f64 * n) / (n_i as f64 * m_j as f64)
}

/// A stored edge with its endpoint keys and counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<'a> {
    pub x_bucket: &'a BucketId,
    pub y_bucket: &'a BucketId,
    pub n_ij: u64,
    pub n_i: u64,
    pub m_j: u64,
    pub weight: EdgeWeight,
}

/// Summary sizes of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStats {
    /// `|V|`, occupied X buckets.
    pub x_nodes: usize,
    /// `|U|`, occupied Y buckets.
    pub y_nodes: usize,
    pub edges: usize,
    pub max_x_occupancy: u64,
    pub max_y_occupancy: u64,
    pub max_edge_count: u64,
}

#[derive(Debug, Clone, Default)]
pub struct DependenceGraph {
    n: u64,
    epsilon: f64,
    x_counts: FxIndexMap<BucketId, u64>,
    y_counts: FxIndexMap<BucketId, u64>,
    joint_counts: FxIndexMap<(usize, usize), u64>,
}

/// Result of recording one pair: node and edge indices with updated counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Touch {
    pub x_index: usize,
    pub y_index: usize,
    pub edge_index: usize,
    pub new_edge: bool,
    pub new_x: bool,
    pub new_y: bool,
}

impl DependenceGraph {
    pub(crate) fn new(epsilon: f64) -> Self {
        Self { epsilon, ..Self::default() }
    }

    /// Bin width of the X-side hash the graph was built with.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Records one hashed pair.
    pub(crate) fn insert(&mut self, x: BucketId, y: BucketId) -> Touch {
        let (x_index, new_x) = bump(&mut self.x_counts, x, 1);
        let (y_index, new_y) = bump(&mut self.y_counts, y, 1);
        let (edge_index, new_edge) = bump(&mut self.joint_counts, (x_index, y_index), 1);
        self.n += 1;
        Touch { x_index, y_index, edge_index, new_edge, new_x, new_y }
    }

    pub fn n_samples(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `N_i` for an X bucket (0 when absent).
    pub fn x_count(&self, key: &BucketId) -> u64 {
        self.x_counts.get(key).copied().unwrap_or(0)
    }

    /// `M_j` for a Y bucket (0 when absent).
    pub fn y_count(&self, key: &BucketId) -> u64 {
        self.y_counts.get(key).copied().unwrap_or(0)
    }

    /// `N_ij` (0 when the edge is absent).
    pub fn joint_count(&self, x: &BucketId, y: &BucketId) -> u64 {
        match (self.x_counts.get_index_of(x), self.y_counts.get_index_of(y)) {
            (Some(i), Some(j)) => self.joint_counts.get(&(i, j)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn x_nodes(&self) -> impl Iterator<Item = (&BucketId, u64)> + '_ {
        self.x_counts.iter().map(|(k, &c)| (k, c))
    }

    pub fn y_nodes(&self) -> impl Iterator<Item = (&BucketId, u64)> + '_ {
        self.y_counts.iter().map(|(k, &c)| (k, c))
    }

    pub fn edge_count(&self) -> usize {
        self.joint_counts.len()
    }

    pub(crate) fn x_count_at(&self, i: usize) -> u64 {
        self.x_counts[i]
    }

    pub(crate) fn y_count_at(&self, j: usize) -> u64 {
        self.y_counts[j]
    }

    /// `(i, j, N_ij)` for the edge stored at `index`.
    pub(crate) fn edge_at(&self, index: usize) -> (usize, usize, u64) {
        let (&(i, j), &c) = self.joint_counts.get_index(index).expect("edge index in range");
        (i, j, c)
    }

    /// Every stored edge exactly once, in first-insertion order.
    pub fn edges(&self) -> impl Iterator<Item = Edge<'_>> + '_ {
        let n = self.n;
        self.joint_counts.iter().map(move |(&(i, j), &n_ij)| {
            let (x_bucket, &n_i) = self.x_counts.get_index(i).expect("x node");
            let (y_bucket, &m_j) = self.y_counts.get_index(j).expect("y node");
            Edge { x_bucket, y_bucket, n_ij, n_i, m_j, weight: EdgeWeight::from_counts(n_ij, n_i, m_j, n) }
        })
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            x_nodes: self.x_counts.len(),
            y_nodes: self.y_counts.len(),
            edges: self.joint_counts.len(),
            max_x_occupancy: self.x_counts.values().copied().max().unwrap_or(0),
            max_y_occupancy: self.y_counts.values().copied().max().unwrap_or(0),
            max_edge_count: self.joint_counts.values().copied().max().unwrap_or(0),
        }
    }

    /// Adds `other`'s counts key-wise; new keys keep `other`'s order.
    pub fn merge(&mut self, other: &DependenceGraph) {
        let x_map: Vec<usize> =
            other.x_counts.iter().map(|(k, &c)| bump(&mut self.x_counts, k.clone(), c).0).collect();
        let y_map: Vec<usize> =
            other.y_counts.iter().map(|(k, &c)| bump(&mut self.y_counts, k.clone(), c).0).collect();
        for (&(i, j), &c) in &other.joint_counts {
            bump(&mut self.joint_counts, (x_map[i], y_map[j]), c);
        }
        self.n += other.n;
    }
}

fn bump<K: std::hash::Hash + Eq>(map: &mut FxIndexMap<K, u64>, key: K, by: u64) -> (usize, bool) {
    match map.entry(key) {
        Entry::Occupied(mut o) => {
            *o.get_mut() += by;
            (o.index(), false)
        }
        Entry::Vacant(v) => {
            let idx = v.index();
            v.insert(by);
            (idx, true)
        }
    }
}

fn bind_pair(samples: &SampleBatch, cx: &HashConfig, cy: &HashConfig) -> Result<(PointHasher, PointHasher)> {
    Ok((cx.bind(samples.dim_x())?, cy.bind(samples.dim_y())?))
}

fn build_range(samples: &SampleBatch, hx: &PointHasher, hy: &PointHasher, start: usize, end: usize) -> Result<DependenceGraph> {
    let mut g = DependenceGraph::new(hx.config().epsilon());
    for k in start..end {
        g.insert(hx.hash(samples.x_row(k))?, hy.hash(samples.y_row(k))?);
    }
    Ok(g)
}

/// Hashes every pair once and accumulates `N_i`, `M_j`, and `N_ij`.
pub fn build_graph(samples: &SampleBatch, config_x: &HashConfig, config_y: &HashConfig) -> Result<DependenceGraph> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (hx, hy) = bind_pair(samples, config_x, config_y)?;
    build_range(samples, &hx, &hy, 0, samples.len())
}

/// Same as [`build_graph`], splitting rows into `shards` contiguous chunks
/// hashed in parallel and merged in chunk order. The result, including
/// edge order, is identical to the single-threaded build.
pub fn build_graph_sharded(
    samples: &SampleBatch,
    config_x: &HashConfig,
    config_y: &HashConfig,
    shards: usize,
) -> Result<DependenceGraph> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (hx, hy) = bind_pair(samples, config_x, config_y)?;
    let n = samples.len();
    let shards = shards.clamp(1, n);
    let chunk = n.div_ceil(shards);
    let parts: Vec<DependenceGraph> = (0..shards)
        .into_par_iter()
        .map(|s| build_range(samples, &hx, &hy, (s * chunk).min(n), ((s + 1) * chunk).min(n)))
        .collect::<Result<_>>()?;
    let mut merged = DependenceGraph::new(config_x.epsilon());
    for p in &parts {
        merged.merge(p);
    }
    Ok(merged)
}
