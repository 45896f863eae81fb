//! Uniform tensor grids on the truncated box [-L, L]^N.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vec2;

/// Uniform grid with an odd number of nodes per axis, so the origin is a node.
///
/// Nodes are numbered lexicographically with axis 0 varying fastest:
/// `index = i0 + n * i1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    halfwidth: f64,
    n_per_dim: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, halfwidth: f64, n_per_dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(halfwidth > 0.0) || !halfwidth.is_finite() {
            return Err(Error::InvalidGrid(format!("halfwidth must be positive, got {halfwidth}")));
        }
        if n_per_dim < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes per axis, got {n_per_dim}")));
        }
        if n_per_dim % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "nodes per axis must be odd so the origin is a node, got {n_per_dim}"
            )));
        }
        let spacing = 2.0 * halfwidth / (n_per_dim - 1) as f64;
        Ok(Self { dim, halfwidth, n_per_dim, spacing })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn n_per_dim(&self) -> usize {
        self.n_per_dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of nodes from the centre to the boundary along one axis.
    pub fn half_count(&self) -> usize {
        (self.n_per_dim - 1) / 2
    }

    pub fn node_count(&self) -> usize {
        self.n_per_dim.pow(self.dim as u32)
    }

    pub fn multi_index(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            [index % self.n_per_dim, index / self.n_per_dim]
        }
    }

    pub fn index_of(&self, multi: [usize; 2]) -> usize {
        if self.dim == 1 {
            multi[0]
        } else {
            multi[0] + self.n_per_dim * multi[1]
        }
    }

    /// Coordinate along one axis; symmetric about the centre so that
    /// `axis_coordinate(m - k) == -axis_coordinate(m + k)` exactly.
    pub fn axis_coordinate(&self, i: usize) -> f64 {
        let m = self.half_count() as f64;
        self.halfwidth * (i as f64 - m) / m
    }

    pub fn coordinate(&self, index: usize) -> Vec2 {
        let mi = self.multi_index(index);
        let mut x = [0.0; 2];
        for k in 0..self.dim {
            x[k] = self.axis_coordinate(mi[k]);
        }
        x
    }

    /// Nearest node to `x` (coordinates clamped to the box).
    pub fn nearest_node(&self, x: &Vec2) -> usize {
        let m = self.half_count() as f64;
        let mut mi = [0usize; 2];
        for k in 0..self.dim {
            let t = (x[k] / self.halfwidth * m + m).round();
            mi[k] = t.clamp(0.0, (self.n_per_dim - 1) as f64) as usize;
        }
        self.index_of(mi)
    }

    pub fn origin(&self) -> usize {
        let m = self.half_count();
        self.index_of([m, m])
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let mi = self.multi_index(index);
        (0..self.dim).any(|k| mi[k] == 0 || mi[k] == self.n_per_dim - 1)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|i| self.is_boundary(i)).collect()
    }

    pub fn interior_count(&self) -> usize {
        (self.n_per_dim - 2).pow(self.dim as u32)
    }

    /// Neighbour of an interior node along `axis`, `forward` meaning +h.
    pub fn neighbour(&self, index: usize, axis: usize, forward: bool) -> usize {
        let stride = if axis == 0 { 1 } else { self.n_per_dim };
        if forward {
            index + stride
        } else {
            index - stride
        }
    }

    /// Distance in layers from the boundary (0 on the boundary).
    pub fn layer(&self, index: usize) -> usize {
        let mi = self.multi_index(index);
        (0..self.dim)
            .map(|k| mi[k].min(self.n_per_dim - 1 - mi[k]))
            .min()
            .unwrap_or(0)
    }
}
