//! Paired sample batches.

use crate::error::{Error, Result};

/// `N` paired observations `(X_k, Y_k)` stored row-major.
///
/// Discrete and continuous components are both stored as `f64`; all values
/// must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    x: Vec<f64>,
    y: Vec<f64>,
    dim_x: usize,
    dim_y: usize,
    n: usize,
}

impl SampleBatch {
    /// Builds a batch from row-major buffers.
    pub fn new(x: Vec<f64>, dim_x: usize, y: Vec<f64>, dim_y: usize) -> Result<Self> {
        if dim_x == 0 || dim_y == 0 {
            return Err(Error::invalid("sample dimensions must be at least 1"));
        }
        if !x.len().is_multiple_of(dim_x) || !y.len().is_multiple_of(dim_y) {
            return Err(Error::invalid("buffer length is not a multiple of the dimension"));
        }
        let n = x.len() / dim_x;
        if n != y.len() / dim_y {
            return Err(Error::Shape(format!("X has {} rows, Y has {}", n, y.len() / dim_y)));
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        check_finite(&x, dim_x)?;
        check_finite(&y, dim_y)?;
        Ok(Self { x, y, dim_x, dim_y, n })
    }

    /// One-dimensional `X` and `Y`.
    pub fn from_columns(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(x.to_vec(), 1, y.to_vec(), 1)
    }

    /// Builds a batch from row vectors.
    pub fn from_rows(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<Self> {
        let dim_x = x.first().map_or(0, Vec::len);
        let dim_y = y.first().map_or(0, Vec::len);
        if x.is_empty() || y.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.iter().any(|r| r.len() != dim_x) || y.iter().any(|r| r.len() != dim_y) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(x.concat(), dim_x, y.concat(), dim_y)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// Joint dimension `d = d_X + d_Y`.
    pub fn joint_dim(&self) -> usize {
        self.dim_x + self.dim_y
    }

    pub fn x_row(&self, k: usize) -> &[f64] {
        &self.x[k * self.dim_x..(k + 1) * self.dim_x]
    }

    pub fn y_row(&self, k: usize) -> &[f64] {
        &self.y[k * self.dim_y..(k + 1) * self.dim_y]
    }

    pub fn x_data(&self) -> &[f64] {
        &self.x
    }

    pub fn y_data(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        self.x.chunks_exact(self.dim_x).zip(self.y.chunks_exact(self.dim_y))
    }

    /// Rows `start..end` as a new batch.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n {
            return Err(Error::invalid(format!("bad row range {start}..{end} for {} rows", self.n)));
        }
        Ok(Self {
            x: self.x[start * self.dim_x..end * self.dim_x].to_vec(),
            y: self.y[start * self.dim_y..end * self.dim_y].to_vec(),
            dim_x: self.dim_x,
            dim_y: self.dim_y,
            n: end - start,
        })
    }

    /// Multiplies every coordinate of both sides by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| v * factor).collect(),
            y: self.y.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Reorders rows by `perm` (a permutation of `0..N`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::invalid("permutation length differs from row count"));
        }
        let mut x = Vec::with_capacity(self.x.len());
        let mut y = Vec::with_capacity(self.y.len());
        for &k in perm {
            if k >= self.n {
                return Err(Error::invalid("permutation index out of range"));
            }
            x.extend_from_slice(self.x_row(k));
            y.extend_from_slice(self.y_row(k));
        }
        Ok(Self { x, y, ..self.clone() })
    }
}

fn check_finite(data: &[f64], dim: usize) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite { row: i / dim, col: i % dim, value: data[i] }),
        None => Ok(()),
    }
}
