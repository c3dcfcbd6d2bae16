//! Node lattice over the rectangle `[0, L1] x [0, L2]` and scalar fields on it.
//!
//! Nodes are `(i, j)` with `0 <= i <= N1`, `0 <= j <= N2`. Fields cover the
//! closed grid, boundary included, so Neumann rows live in the same system as
//! the interior rows. The flat index is row-major with `i` fastest and stride
//! `N1 + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    l1: f64,
    l2: f64,
    n1: usize,
    n2: usize,
}

impl GridSpec {
    pub fn new(l1: f64, l2: f64, n1: usize, n2: usize) -> Result<Self> {
        if n1 < 2 || n2 < 2 {
            return Err(Error::Grid(format!(
                "need at least 2 cells per axis, got {n1}x{n2}"
            )));
        }
        if !(l1.is_finite() && l1 > 0.0 && l2.is_finite() && l2 > 0.0) {
            return Err(Error::Grid(format!("domain lengths must be positive, got {l1}x{l2}")));
        }
        Ok(Self { l1, l2, n1, n2 })
    }

    /// Unit square with `n` cells per axis.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(1.0, 1.0, n, n)
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn h1(&self) -> f64 {
        self.l1 / self.n1 as f64
    }

    pub fn h2(&self) -> f64 {
        self.l2 / self.n2 as f64
    }

    /// Area of one dual finite volume.
    pub fn cell_volume(&self) -> f64 {
        self.h1() * self.h2()
    }

    /// Number of nodes along `x1`.
    pub fn width(&self) -> usize {
        self.n1 + 1
    }

    /// Number of nodes along `x2`.
    pub fn height(&self) -> usize {
        self.n2 + 1
    }

    pub fn node_count(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i <= self.n1 && j <= self.n2
    }

    /// True for nodes of the open grid (not on the domain boundary).
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > 0 && i < self.n1 && j > 0 && j < self.n2
    }

    pub fn flatten(&self, i: usize, j: usize) -> Result<usize> {
        if !self.contains(i, j) {
            return Err(self.index_error(i, j));
        }
        Ok(self.idx(i, j))
    }

    pub fn unflatten(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.node_count() {
            return Err(Error::Shape(format!(
                "flat index {index} beyond {} nodes",
                self.node_count()
            )));
        }
        Ok((index % self.width(), index / self.width()))
    }

    pub fn node_position(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        if !self.contains(i, j) {
            return Err(self.index_error(i, j));
        }
        Ok(self.position(i, j))
    }

    #[inline]
    pub(crate) fn idx(&self, i: usize, j: usize) -> usize {
        j * (self.n1 + 1) + i
    }

    #[inline]
    pub(crate) fn position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h1(), j as f64 * self.h2())
    }

    fn index_error(&self, i: usize, j: usize) -> Error {
        Error::Index { i, j, n1: self.n1, n2: self.n2 }
    }
}

/// Scalar values on every node of the closed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.node_count() {
            return Err(Error::Shape(format!(
                "expected {} values for {}x{} grid, got {}",
                spec.node_count(),
                spec.n1(),
                spec.n2(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(Self { spec, values })
    }

    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self { spec, values: vec![value; spec.node_count()] }
    }

    /// Evaluates `f(x1, x2)` at every node position.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.node_count());
        for j in 0..=spec.n2() {
            for i in 0..=spec.n1() {
                let (x1, x2) = spec.position(i, j);
                values.push(f(x1, x2));
            }
        }
        Self::new(spec, values)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.values[self.spec.flatten(i, j)?])
    }

    #[inline]
    pub(crate) fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.idx(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Infinity norm of `self - other`.
    pub fn max_abs_diff(&self, other: &GridField) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}
