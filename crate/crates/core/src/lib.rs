//! Mutual information estimation with hashed dependence graphs.
//!
//! Samples are quantized with a randomly shifted floor hash, optionally
//! folded into `F = c_H * N` buckets by a seeded integer mixer. Collisions
//! between the hashed `X` and `Y` sides form a bipartite dependence graph
//! whose edge weights estimate the density ratio `dP_XY / dP_X P_Y`.
//! Summing `omega_i * omega'_j * g(omega_ij)` over the edges gives an
//! f-divergence estimate of the mutual information in `O(N)` time.
//!
//! The bias of the single-bandwidth estimate is reduced by a weighted
//! ensemble over bandwidths `eps(t) = t * N^(-1/(2d))`, with weights solving
//! a minimum-norm equality constrained least-squares problem
//! ([`ensemble::solve_weights`]). [`online::StreamState`] maintains the same
//! estimate under streaming updates.
//!
//! ```
//! use edge_mi::prelude::*;
//!
//! let x = [0.1, 0.1, 0.9, 0.9];
//! let batch = SampleBatch::from_columns(&x, &x).unwrap();
//! let opts = HashOptions::exact().with_shift(0.0);
//! let est = mi_from_samples(&batch, 0.5, &Generator::shannon(), 7, &opts).unwrap();
//! assert!((est.value - std::f64::consts::LN_2).abs() < 1e-12);
//! ```

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod graph;
pub mod hashing;
pub mod online;
pub mod samples;
pub mod synth;

mod numeric;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::ensemble::{edge_estimate, solve_weights, EnsembleConfig, EnsembleEstimate};
    pub use crate::error::{Error, Result};
    pub use crate::estimator::{base_estimate, mi_from_samples, Generator, MiEstimate};
    pub use crate::graph::{build_graph, DependenceGraph};
    pub use crate::hashing::{BucketId, HashConfig, HashMode, HashOptions, StableLaw};
    pub use crate::online::{EpsilonSchedule, StreamState};
    pub use crate::samples::SampleBatch;
    pub use crate::synth::{generate, oracle_mi, SyntheticFamily};
}
