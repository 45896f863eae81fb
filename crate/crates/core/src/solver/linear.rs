//! Linear solves for a frozen policy: `(δI + A_π) u = l_π` on interior rows,
//! closure rows on the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheme::DiscreteOperator;

/// Inner solver for the frozen-policy system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Banded LU without pivoting plus one refinement step.
    Direct,
    /// Lexicographic point Gauss–Seidel (SOR when `omega != 1`), stopped on
    /// the frozen-system residual.
    GaussSeidel { omega: f64, max_sweeps: usize },
}

impl Default for InnerSolver {
    fn default() -> Self {
        InnerSolver::Direct
    }
}

/// The frozen-policy system; `policy[i]` is the effective control at node `i`
/// (ignored on boundary nodes).
pub struct PolicySystem<'a> {
    op: &'a DiscreteOperator,
    delta: f64,
    policy: &'a [usize],
}

impl<'a> PolicySystem<'a> {
    pub fn new(op: &'a DiscreteOperator, delta: f64, policy: &'a [usize]) -> Self {
        Self { op, delta, policy }
    }

    pub fn len(&self) -> usize {
        self.op.grid().node_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.len()];
        for &i in self.op.interior() {
            r[i] = self.op.stencil(i, self.policy[i]).cost;
        }
        for &b in self.op.boundary() {
            r[b] = self.op.boundary_offset(b);
        }
        r
    }

    /// Full system matrix applied to `u` (centre coupling included).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for &i in self.op.interior() {
            let s = self.op.stencil(i, self.policy[i]);
            let mut v = (self.delta + s.diag) * u[i];
            for (k, nb) in self.op.neighbours(i).enumerate() {
                v += s.off[k] * u[nb];
            }
            out[i] = v;
        }
        let c = self.op.centre();
        for &b in self.op.boundary() {
            out[b] = u[b] - if self.op.centre_anchored() { u[c] } else { 0.0 };
        }
        out
    }

    pub fn residual_inf(&self, u: &[f64], rhs: &[f64]) -> f64 {
        self.apply(u).iter().zip(rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Dense copy of the full matrix, for cross-checks on small problems.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for &i in self.op.interior() {
            let s = self.op.stencil(i, self.policy[i]);
            m[i][i] += self.delta + s.diag;
            for (k, nb) in self.op.neighbours(i).enumerate() {
                m[i][nb] += s.off[k];
            }
        }
        for &b in self.op.boundary() {
            m[b][b] = 1.0;
            if self.op.centre_anchored() {
                m[b][self.op.centre()] -= 1.0;
            }
        }
        m
    }

    fn band_with_dirichlet_boundary(&self) -> BandLu {
        let grid = self.op.grid();
        let width = if grid.dim() == 1 { 1 } else { grid.n_per_dim() };
        let mut band = BandLu::zeros(self.len(), width);
        for &i in self.op.interior() {
            let s = self.op.stencil(i, self.policy[i]);
            band.add(i, i, self.delta + s.diag);
            for (k, nb) in self.op.neighbours(i).enumerate() {
                band.add(i, nb, s.off[k]);
            }
        }
        for &b in self.op.boundary() {
            band.add(b, b, 1.0);
        }
        band
    }

    pub fn solve(&self, solver: InnerSolver, initial: &[f64], tol: f64) -> Result<Vec<f64>> {
        match solver {
            InnerSolver::Direct => self.solve_direct(),
            InnerSolver::GaussSeidel { omega, max_sweeps } => self.solve_gauss_seidel(initial, omega, max_sweeps, tol),
        }
    }

    pub fn solve_direct(&self) -> Result<Vec<f64>> {
        let mut lu = self.band_with_dirichlet_boundary();
        lu.factor()?;
        let centre = self.op.centre();
        // Response to a unit shift of every boundary value.
        let unit = if self.op.centre_anchored() {
            let mut w = vec![0.0; self.len()];
            for &b in self.op.boundary() {
                w[b] = 1.0;
            }
            lu.solve(&mut w);
            if !(w[centre] < 1.0 - 1e-14) {
                return Err(Error::Singular);
            }
            Some(w)
        } else {
            None
        };
        let solve_full = |r: &mut Vec<f64>| {
            lu.solve(r);
            if let Some(w) = &unit {
                let s = r[centre] / (1.0 - w[centre]);
                for (x, wi) in r.iter_mut().zip(w) {
                    *x += s * wi;
                }
            }
        };
        let rhs = self.rhs();
        let mut u = rhs.clone();
        solve_full(&mut u);
        let mut corr: Vec<f64> = self.apply(&u).iter().zip(&rhs).map(|(a, b)| b - a).collect();
        solve_full(&mut corr);
        for (x, d) in u.iter_mut().zip(&corr) {
            *x += d;
        }
        if let Some(i) = u.iter().position(|x| !x.is_finite()) {
            return Err(Error::Internal(format!("direct solve produced a non-finite value at node {i}")));
        }
        Ok(u)
    }

    pub fn solve_gauss_seidel(&self, initial: &[f64], omega: f64, max_sweeps: usize, tol: f64) -> Result<Vec<f64>> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::InvalidParameter(format!("relaxation factor must lie in (0, 2), got {omega}")));
        }
        let rhs = self.rhs();
        let mut u = initial.to_vec();
        let n = self.len();
        let centre = self.op.centre();
        let boundary = self.op.grid().boundary_mask();
        let mut last = f64::INFINITY;
        for _ in 0..max_sweeps {
            for i in 0..n {
                if boundary[i] {
                    continue;
                }
                let s = self.op.stencil(i, self.policy[i]);
                let mut acc = rhs[i];
                for (k, nb) in self.op.neighbours(i).enumerate() {
                    acc -= s.off[k] * u[nb];
                }
                let gs = acc / (self.delta + s.diag);
                u[i] += omega * (gs - u[i]);
            }
            for &b in self.op.boundary() {
                u[b] = rhs[b] + if self.op.centre_anchored() { u[centre] } else { 0.0 };
            }
            let r = self.residual_inf(&u, &rhs);
            if !r.is_finite() {
                return Err(Error::Internal("Gauss-Seidel sweep diverged".into()));
            }
            last = r;
            if r <= tol {
                return Ok(u);
            }
        }
        Err(Error::NonConvergence { iterations: max_sweeps, residual: last })
    }
}

/// Square band matrix with half-bandwidth `width`, factored in place.
struct BandLu {
    n: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandLu {
    fn zeros(n: usize, width: usize) -> Self {
        Self { n, width, data: vec![0.0; n * (2 * width + 1)] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (2 * self.width + 1) + (j + self.width - i)
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    fn factor(&mut self) -> Result<()> {
        let (n, w) = (self.n, self.width);
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !(pivot.abs() > 1e-300) {
                return Err(Error::Singular);
            }
            let end = (k + w + 1).min(n);
            for i in k + 1..end {
                let ik = self.idx(i, k);
                let factor = self.data[ik] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[ik] = factor;
                for j in k + 1..end {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= factor * self.data[kj];
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, w) = (self.n, self.width);
        for i in 0..n {
            let mut acc = b[i];
            for j in i.saturating_sub(w)..i {
                acc -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..(i + w + 1).min(n) {
                acc -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[self.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ClosureModel, ControlSet};
    use crate::grid::Grid;
    use crate::linalg::SymMat;
    use crate::oracle::dense_solve;
    use crate::problem::{OperatorMode, ProblemSpec};
    use crate::scheme::{discretize, BoundaryClosure};

    fn op(dim: usize, n: usize, closure: BoundaryClosure) -> DiscreteOperator {
        let g = Grid::new(dim, 2.0, n).unwrap();
        let m = ClosureModel::new(dim)
            .with_diffusion(move |_, _| SymMat::identity(dim))
            .with_drift(|x, _| [-x[0] * x[0] * x[0], -x[1]])
            .with_running_cost(|x, _| (x[0] + 0.3 * x[1]).sin());
        let p = ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap();
        discretize(&p, &closure).unwrap()
    }

    #[test]
    fn gauss_seidel_matches_dense_solve_on_21_nodes() {
        for closure in [BoundaryClosure::frozen(0.5), BoundaryClosure::default()] {
            let op = op(1, 21, closure);
            let policy = vec![0; 21];
            let sys = PolicySystem::new(&op, 0.3, &policy);
            let reference = dense_solve(&sys.dense(), &sys.rhs()).unwrap();
            let gs = sys.solve_gauss_seidel(&vec![0.0; 21], 1.0, 100_000, 1e-13).unwrap();
            let direct = sys.solve_direct().unwrap();
            for i in 0..21 {
                assert!((gs[i] - reference[i]).abs() <= 1e-8);
                assert!((direct[i] - reference[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn banded_solve_in_two_dimensions() {
        for closure in [BoundaryClosure::frozen(-1.0), BoundaryClosure::default()] {
            let op = op(2, 9, closure);
            let policy = vec![0; 81];
            let sys = PolicySystem::new(&op, 0.05, &policy);
            let reference = dense_solve(&sys.dense(), &sys.rhs()).unwrap();
            let direct = sys.solve_direct().unwrap();
            for i in 0..81 {
                assert!((direct[i] - reference[i]).abs() <= 1e-9 * (1.0 + reference[i].abs()));
            }
        }
    }

    #[test]
    fn sor_rejects_bad_relaxation() {
        let op = op(1, 5, BoundaryClosure::frozen(0.0));
        let policy = vec![0; 5];
        let sys = PolicySystem::new(&op, 1.0, &policy);
        assert!(sys.solve_gauss_seidel(&[0.0; 5], 2.0, 10, 1e-10).is_err());
    }

    #[test]
    fn diagonal_dominance_margin_is_delta() {
        let delta = 0.37;
        let op = op(2, 7, BoundaryClosure::frozen(0.0));
        let policy = vec![0; 49];
        let m = PolicySystem::new(&op, delta, &policy).dense();
        for &i in op.interior() {
            let off: f64 = (0..49).filter(|&j| j != i).map(|j| m[i][j].abs()).sum();
            assert!(m[i][i] - off >= delta - 1e-12);
        }
    }
}
