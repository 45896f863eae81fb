//! Small dense objects for N ∈ {1, 2}.
//!
//! Points and vectors are `[f64; 2]`; in one dimension the second component
//! is always zero, so closures written for the 2D case evaluate correctly in
//! 1D as well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

/// Absolute tolerance used when accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn dot(dim: usize, a: &Vec2, b: &Vec2) -> f64 {
    (0..dim).map(|k| a[k] * b[k]).sum()
}

pub fn norm(dim: usize, a: &Vec2) -> f64 {
    dot(dim, a, a).sqrt()
}

/// Symmetric matrix of order 1 or 2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    pub dim: usize,
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat {
    pub fn zero(dim: usize) -> Self {
        Self { dim, xx: 0.0, xy: 0.0, yy: 0.0 }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(dim, 1.0, if dim == 2 { 1.0 } else { 0.0 })
    }

    pub fn scalar(value: f64) -> Self {
        Self { dim: 1, xx: value, xy: 0.0, yy: 0.0 }
    }

    pub fn diagonal(dim: usize, d1: f64, d2: f64) -> Self {
        let yy = if dim == 2 { d2 } else { 0.0 };
        Self { dim, xx: d1, xy: 0.0, yy }
    }

    pub fn new2(xx: f64, xy: f64, yy: f64) -> Self {
        Self { dim: 2, xx, xy, yy }
    }

    /// Builds from a full row-major matrix, rejecting asymmetric input.
    pub fn from_rows(dim: usize, rows: [[f64; 2]; 2]) -> Result<Self> {
        match dim {
            1 => Ok(Self::scalar(rows[0][0])),
            2 => {
                let gap = (rows[0][1] - rows[1][0]).abs();
                let scale = 1.0 + rows[0][1].abs().max(rows[1][0].abs());
                if gap > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric(gap));
                }
                Ok(Self::new2(rows[0][0], 0.5 * (rows[0][1] + rows[1][0]), rows[1][1]))
            }
            d => Err(Error::InvalidParameter(format!("matrix order {d} not in {{1, 2}}"))),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    pub fn trace(&self) -> f64 {
        if self.dim == 1 {
            self.xx
        } else {
            self.xx + self.yy
        }
    }

    /// tr(self · other).
    pub fn trace_product(&self, other: &SymMat) -> f64 {
        if self.dim == 1 {
            self.xx * other.xx
        } else {
            self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
        }
    }

    pub fn scale(&self, t: f64) -> Self {
        Self { dim: self.dim, xx: t * self.xx, xy: t * self.xy, yy: t * self.yy }
    }

    pub fn add(&self, other: &SymMat) -> Self {
        Self {
            dim: self.dim,
            xx: self.xx + other.xx,
            xy: self.xy + other.xy,
            yy: self.yy + other.yy,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.dim == 1 || self.xy == 0.0
    }

    /// Eigenvalues in ascending order; only the first `dim` entries are meaningful.
    ///
    /// Closed form from trace and discriminant.
    pub fn eigenvalues(&self) -> Vec2 {
        if self.dim == 1 {
            return [self.xx, 0.0];
        }
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let radius = half_diff.hypot(self.xy);
        [mean - radius, mean + radius]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Max-entry norm.
    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    /// Outer product v vᵀ.
    pub fn outer(dim: usize, v: &Vec2) -> Self {
        if dim == 1 {
            Self::scalar(v[0] * v[0])
        } else {
            Self::new2(v[0] * v[0], v[0] * v[1], v[1] * v[1])
        }
    }
}

/// Dense N×m factor with a = σσᵀ (N, m ≤ 2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigma {
    pub rows: usize,
    pub cols: usize,
    pub entries: [[f64; 2]; 2],
}

impl Sigma {
    pub fn new(rows: usize, cols: usize, entries: [[f64; 2]; 2]) -> Self {
        Self { rows, cols, entries }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(1, 1, [[value, 0.0], [0.0, 0.0]])
    }

    pub fn gram(&self) -> SymMat {
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate().take(self.rows) {
            for (j, cell) in row.iter_mut().enumerate().take(self.rows) {
                *cell = (0..self.cols).map(|k| self.entries[i][k] * self.entries[j][k]).sum();
            }
        }
        if self.rows == 1 {
            SymMat::scalar(out[0][0])
        } else {
            SymMat::new2(out[0][0], out[0][1], out[1][1])
        }
    }

    /// Squared Frobenius norm |σ|², which equals tr(σσᵀ).
    pub fn frobenius_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            for k in 0..self.cols {
                s += self.entries[i][k] * self.entries[i][k];
            }
        }
        s
    }

    /// σ applied to a noise vector of length `cols`.
    pub fn apply(&self, noise: &Vec2) -> Vec2 {
        let mut out = [0.0; 2];
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = (0..self.cols).map(|k| self.entries[i][k] * noise[k]).sum();
        }
        out
    }
}
