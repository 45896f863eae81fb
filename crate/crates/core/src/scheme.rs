//! Monotone finite-difference discretization of the HJB/Pucci operator on
//! the grid, with a Dirichlet-type boundary closure.
//!
//! For every interior node and every effective control the operator is an
//! affine row `diag·u_i + Σ off_k·u_{nbr(k)} − l` with `off_k ≤ 0` and
//! `diag + Σ off_k = c0 ≥ 0`. The nonlinear operator is the min (inf modes)
//! or max (sup modes) of these rows.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::linalg::Vec2;
use crate::problem::{OperatorMode, ProblemSpec};

/// Reference level of a boundary closure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// A fixed constant.
    Value(f64),
    /// The current solution value at the grid centre (the origin node).
    Centre,
}

/// Boundary closure of the truncated box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryClosure {
    /// u = anchor + h_bar·|x|²/2 on the boundary.
    QuadraticBarrier { h_bar: f64, anchor: Anchor },
    /// u = anchor on the boundary.
    Frozen { anchor: Anchor },
}

impl Default for BoundaryClosure {
    fn default() -> Self {
        BoundaryClosure::QuadraticBarrier { h_bar: 0.05, anchor: Anchor::Centre }
    }
}

impl BoundaryClosure {
    pub fn frozen(value: f64) -> Self {
        BoundaryClosure::Frozen { anchor: Anchor::Value(value) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryClosure::QuadraticBarrier { h_bar, .. } if !(*h_bar > 0.0) => Err(
                Error::InvalidParameter(format!("barrier slope must be positive, got {h_bar}")),
            ),
            _ => Ok(()),
        }
    }

    fn anchor(&self) -> Anchor {
        match self {
            BoundaryClosure::QuadraticBarrier { anchor, .. } | BoundaryClosure::Frozen { anchor } => *anchor,
        }
    }

    /// Boundary value minus the centre value when centre-anchored.
    fn offset(&self, dim: usize, x: &Vec2) -> f64 {
        let base = match self.anchor() {
            Anchor::Value(v) => v,
            Anchor::Centre => 0.0,
        };
        match self {
            BoundaryClosure::QuadraticBarrier { h_bar, .. } => {
                base + 0.5 * h_bar * crate::linalg::dot(dim, x, x)
            }
            BoundaryClosure::Frozen { .. } => base,
        }
    }
}

/// How first derivatives are differenced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftDifferencing {
    /// One-sided differences keyed to the sign of each drift component.
    Upwind,
    /// Central differences wherever the cell Péclet number |b|h/(2a) ≤ 1,
    /// upwind elsewhere. Monotone for every spacing.
    #[default]
    Hybrid,
}

/// Effective control: a control index together with the diffusion level
/// chosen in Pucci modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveControl {
    pub alpha: usize,
    pub pucci_level: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil<'a> {
    pub diag: f64,
    /// Weights on neighbours ordered (axis 0 −, axis 0 +, axis 1 −, axis 1 +).
    pub off: &'a [f64],
    pub cost: f64,
}

/// Per-node, per-control affine stencils plus the boundary rows.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Grid,
    mode: OperatorMode,
    controls: Vec<EffectiveControl>,
    n_nbr: usize,
    diag: Vec<f64>,
    off: Vec<f64>,
    cost: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    boundary_offset: Vec<f64>,
    centre_anchored: bool,
    closure: BoundaryClosure,
    differencing: DriftDifferencing,
}

/// Discretizes with the default (hybrid) drift differencing.
pub fn discretize(problem: &ProblemSpec, closure: &BoundaryClosure) -> Result<DiscreteOperator> {
    discretize_with(problem, closure, DriftDifferencing::default())
}

pub fn discretize_with(
    problem: &ProblemSpec,
    closure: &BoundaryClosure,
    differencing: DriftDifferencing,
) -> Result<DiscreteOperator> {
    closure.validate()?;
    let grid = *problem.grid();
    let dim = grid.dim();
    let coeffs = &problem.coefficients;
    if problem.mode.is_pucci() && dim != 1 {
        return Err(Error::Unsupported(format!("mode {} requires dim = 1", problem.mode)));
    }
    let mut controls = Vec::new();
    for alpha in 0..coeffs.n_controls() {
        match (problem.mode.is_pucci(), problem.pucci) {
            (true, Some(p)) => {
                controls.push(EffectiveControl { alpha, pucci_level: Some(p.lambda) });
                if p.big_lambda != p.lambda {
                    controls.push(EffectiveControl { alpha, pucci_level: Some(p.big_lambda) });
                }
            }
            (true, None) => {
                return Err(Error::MissingParameter {
                    name: "lambda/Lambda",
                    context: format!("mode {}", problem.mode),
                })
            }
            _ => controls.push(EffectiveControl { alpha, pucci_level: None }),
        }
    }
    if dim == 2 {
        for node in 0..grid.node_count() {
            for alpha in 0..coeffs.n_controls() {
                if !coeffs.at(node, alpha).a.is_diagonal() {
                    return Err(Error::Unsupported(format!(
                        "off-diagonal diffusion at node {node}, control {alpha}; mixed derivatives are not discretized"
                    )));
                }
            }
        }
    }

    let n_eff = controls.len();
    let n_nbr = 2 * dim;
    let n = grid.node_count();
    let h = grid.spacing();
    let mut diag = vec![0.0; n * n_eff];
    let mut off = vec![0.0; n * n_eff * n_nbr];
    let mut cost = vec![0.0; n * n_eff];
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut boundary_offset = vec![0.0; n];

    for node in 0..n {
        if grid.is_boundary(node) {
            boundary.push(node);
            boundary_offset[node] = closure.offset(dim, &grid.coordinate(node));
            continue;
        }
        interior.push(node);
        for (e, ctl) in controls.iter().enumerate() {
            let c = coeffs.at(node, ctl.alpha);
            let row = node * n_eff + e;
            let w = &mut off[row * n_nbr..(row + 1) * n_nbr];
            let mut d = c.c0;
            for axis in 0..dim {
                let a = ctl.pucci_level.unwrap_or(if axis == 0 { c.a.xx } else { c.a.yy });
                let b = c.b[axis];
                let diff = a / (h * h);
                w[2 * axis] -= diff;
                w[2 * axis + 1] -= diff;
                d += 2.0 * diff;
                if b == 0.0 {
                    continue;
                }
                let central = differencing == DriftDifferencing::Hybrid && b.abs() * h <= 2.0 * a;
                if central {
                    w[2 * axis + 1] -= b / (2.0 * h);
                    w[2 * axis] += b / (2.0 * h);
                } else if b > 0.0 {
                    w[2 * axis + 1] -= b / h;
                    d += b / h;
                } else {
                    w[2 * axis] += b / h;
                    d -= b / h;
                }
            }
            diag[row] = d;
            cost[row] = c.l;
        }
    }

    Ok(DiscreteOperator {
        grid,
        mode: problem.mode,
        controls,
        n_nbr,
        diag,
        off,
        cost,
        interior,
        boundary,
        boundary_offset,
        centre_anchored: closure.anchor() == Anchor::Centre,
        closure: *closure,
        differencing,
    })
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> OperatorMode {
        self.mode
    }

    pub fn closure(&self) -> &BoundaryClosure {
        &self.closure
    }

    pub fn differencing(&self) -> DriftDifferencing {
        self.differencing
    }

    pub fn effective_controls(&self) -> &[EffectiveControl] {
        &self.controls
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn centre_anchored(&self) -> bool {
        self.centre_anchored
    }

    pub fn centre(&self) -> usize {
        self.grid.origin()
    }

    /// Closure value at a boundary node without the centre contribution.
    pub fn boundary_offset(&self, node: usize) -> f64 {
        self.boundary_offset[node]
    }

    /// Closure value at a boundary node for the current field `u`.
    pub fn boundary_value(&self, node: usize, u: &[f64]) -> f64 {
        let base = if self.centre_anchored { u[self.centre()] } else { 0.0 };
        base + self.boundary_offset[node]
    }

    /// Replaces the closure by fixed per-node boundary values taken from `values`.
    pub fn with_fixed_boundary(mut self, values: &ScalarField) -> Result<Self> {
        values.ensure_grid(&self.grid)?;
        for &b in &self.boundary {
            self.boundary_offset[b] = values.get(b);
        }
        self.centre_anchored = false;
        Ok(self)
    }

    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nbr).map(move |k| self.grid.neighbour(node, k / 2, k % 2 == 1))
    }

    pub fn stencil(&self, node: usize, control: usize) -> Stencil<'_> {
        let row = node * self.controls.len() + control;
        Stencil {
            diag: self.diag[row],
            off: &self.off[row * self.n_nbr..(row + 1) * self.n_nbr],
            cost: self.cost[row],
        }
    }

    /// Value of the affine row `control` at interior `node`.
    #[inline]
    pub fn row_value(&self, node: usize, control: usize, u: &[f64]) -> f64 {
        let s = self.stencil(node, control);
        let mut v = s.diag * u[node] - s.cost;
        for (k, w) in s.off.iter().enumerate() {
            v += w * u[self.grid.neighbour(node, k / 2, k % 2 == 1)];
        }
        v
    }

    /// Optimal row value at an interior node and the first optimizing control.
    pub fn optimal_row(&self, node: usize, u: &[f64]) -> (f64, usize) {
        let minimize = self.mode.minimizes();
        let mut best = self.row_value(node, 0, u);
        let mut arg = 0;
        for e in 1..self.controls.len() {
            let v = self.row_value(node, e, u);
            if (minimize && v < best) || (!minimize && v > best) {
                best = v;
                arg = e;
            }
        }
        (best, arg)
    }

    /// δu + F_h(u) at interior nodes, u − closure at boundary nodes.
    pub fn apply(&self, u: &ScalarField, delta: f64) -> Result<ScalarField> {
        u.ensure_grid(&self.grid)?;
        let vals = u.values();
        let mut r = vec![0.0; vals.len()];
        for &i in &self.interior {
            r[i] = delta * vals[i] + self.optimal_row(i, vals).0;
        }
        for &b in &self.boundary {
            r[b] = vals[b] - self.boundary_value(b, vals);
        }
        ScalarField::new(self.grid, r)
    }

    pub fn residual_inf(&self, u: &[f64], delta: f64) -> f64 {
        let mut m: f64 = 0.0;
        for &i in &self.interior {
            m = m.max((delta * u[i] + self.optimal_row(i, u).0).abs());
        }
        for &b in &self.boundary {
            m = m.max((u[b] - self.boundary_value(b, u)).abs());
        }
        m
    }

    /// Largest diagonal weight (c0 included) over interior nodes and controls.
    pub fn max_diagonal(&self) -> f64 {
        let n_eff = self.controls.len();
        self.interior
            .iter()
            .flat_map(|&i| (0..n_eff).map(move |e| i * n_eff + e))
            .map(|row| self.diag[row])
            .fold(0.0, f64::max)
    }

    /// max |l| over interior rows.
    pub fn cost_sup_norm(&self) -> f64 {
        let n_eff = self.controls.len();
        self.interior
            .iter()
            .flat_map(|&i| (0..n_eff).map(move |e| i * n_eff + e))
            .map(|row| self.cost[row].abs())
            .fold(0.0, f64::max)
    }

    /// Writes `control,row,col,weight` triplets; boundary rows use control `b`.
    pub fn write_triplets<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["control", "row", "col", "weight"])?;
        for e in 0..self.controls.len() {
            for &i in &self.interior {
                let s = self.stencil(i, e);
                w.write_record([e.to_string(), i.to_string(), i.to_string(), s.diag.to_string()])?;
                for (k, nb) in self.neighbours(i).enumerate() {
                    w.write_record([e.to_string(), i.to_string(), nb.to_string(), s.off[k].to_string()])?;
                }
            }
        }
        for &b in &self.boundary {
            w.write_record(["b".to_string(), b.to_string(), b.to_string(), "1".to_string()])?;
            if self.centre_anchored {
                w.write_record(["b".to_string(), b.to_string(), self.centre().to_string(), "-1".to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ClosureModel, ControlSet};
    use crate::linalg::SymMat;
    use crate::problem::PucciParams;

    fn problem_1d(
        l: f64,
        n: usize,
        a: f64,
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cost: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> ProblemSpec {
        let g = Grid::new(1, l, n).unwrap();
        let m = ClosureModel::new(1)
            .with_diffusion(move |_, _| SymMat::scalar(a))
            .with_drift(move |x, _| [b(x[0]), 0.0])
            .with_running_cost(move |x, _| cost(x[0]));
        ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap()
    }

    #[test]
    fn laplacian_row() {
        let p = problem_1d(2.0, 5, 1.0, |_| 0.0, |_| 0.0);
        let op = discretize(&p, &BoundaryClosure::frozen(0.0)).unwrap();
        let s = op.stencil(2, 0);
        assert_eq!((s.diag, s.off), (2.0, &[-1.0, -1.0][..]));
    }

    #[test]
    fn upwind_forward_for_positive_drift() {
        let p = problem_1d(2.0, 5, 0.0, |_| 1.0, |_| 0.0);
        for diff in [DriftDifferencing::Upwind, DriftDifferencing::Hybrid] {
            let op = discretize_with(&p, &BoundaryClosure::frozen(0.0), diff).unwrap();
            let s = op.stencil(2, 0);
            assert_eq!((s.diag, s.off), (1.0, &[0.0, -1.0][..]));
        }
    }

    #[test]
    fn upwind_backward_for_inward_drift() {
        // b = -x at x = 2 with spacing 0.5: backward difference, weight 4.
        let p = problem_1d(3.0, 13, 0.0, |x| -x, |_| 0.0);
        let op = discretize_with(&p, &BoundaryClosure::frozen(0.0), DriftDifferencing::Upwind).unwrap();
        let node = p.grid().nearest_node(&[2.0, 0.0]);
        let s = op.stencil(node, 0);
        assert_eq!((s.diag, s.off), (4.0, &[-4.0, 0.0][..]));
    }

    #[test]
    fn sign_pattern_for_any_spacing() {
        for &n in &[5usize, 11, 41] {
            for diff in [DriftDifferencing::Upwind, DriftDifferencing::Hybrid] {
                let p = problem_1d(5.0, n, 0.3, |x| -x * x * x + 2.0, |_| 0.0);
                let op = discretize_with(&p, &BoundaryClosure::default(), diff).unwrap();
                for &i in op.interior() {
                    let s = op.stencil(i, 0);
                    assert!(s.off.iter().all(|w| *w <= 0.0));
                    let sum: f64 = s.off.iter().sum();
                    assert!((s.diag + sum).abs() < 1e-9 * s.diag.max(1.0));
                }
            }
        }
    }

    #[test]
    fn two_dimensional_rejects_mixed_diffusion() {
        let g = Grid::new(2, 1.0, 5).unwrap();
        let m = ClosureModel::new(2).with_diffusion(|_, _| SymMat::new2(1.0, 0.2, 1.0));
        let p = ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap();
        assert!(matches!(discretize(&p, &BoundaryClosure::frozen(0.0)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn barrier_requires_positive_slope() {
        let p = problem_1d(1.0, 5, 1.0, |_| 0.0, |_| 0.0);
        let c = BoundaryClosure::QuadraticBarrier { h_bar: 0.0, anchor: Anchor::Value(0.0) };
        assert!(discretize(&p, &c).is_err());
    }

    #[test]
    fn constants_solve_without_cost() {
        let p = problem_1d(3.0, 31, 1.0, |x| -x, |_| 0.0);
        let op = discretize(&p, &BoundaryClosure::frozen(2.5)).unwrap();
        let u = ScalarField::constant(*p.grid(), 2.5);
        assert!(op.apply(&u, 0.0).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn constant_with_cost_and_discount() {
        let (k, m, delta) = (1.5, 0.7, 0.3);
        let p = problem_1d(3.0, 31, 1.0, |x| -x, move |_| m);
        let op = discretize(&p, &BoundaryClosure::frozen(k)).unwrap();
        let r = op.apply(&ScalarField::constant(*p.grid(), k), delta).unwrap();
        for &i in op.interior() {
            assert!((r.get(i) - (delta * k - m)).abs() < 1e-12);
        }
    }

    #[test]
    fn centre_anchored_boundary_rows() {
        let p = problem_1d(2.0, 5, 1.0, |_| 0.0, |_| 0.0);
        let op = discretize(&p, &BoundaryClosure::default()).unwrap();
        let u = ScalarField::new(*p.grid(), vec![3.1, 0.0, 3.0, 0.0, 3.1]).unwrap();
        let r = op.apply(&u, 0.0).unwrap();
        assert!(r.get(0).abs() < 1e-15 && r.get(4).abs() < 1e-15);
    }

    #[test]
    fn quadratic_consistency_is_exact() {
        // u = q2 x² + q1 x + q0 with constant a, c0 and b = 0; affine u with constant-sign b.
        let (a, c0, l) = (1.3, 0.4, 0.9);
        let g = Grid::new(1, 2.0, 21).unwrap();
        let (q2, q1, q0) = (0.7, -1.1, 0.2);
        let m = ClosureModel::new(1)
            .with_diffusion(move |_, _| SymMat::scalar(a))
            .with_zeroth_order(move |_, _| c0)
            .with_running_cost(move |_, _| l);
        let p = ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap();
        let u = ScalarField::from_fn(g, |x| q2 * x[0] * x[0] + q1 * x[0] + q0).unwrap();
        for diff in [DriftDifferencing::Upwind, DriftDifferencing::Hybrid] {
            let op = discretize_with(&p, &BoundaryClosure::frozen(0.0), diff).unwrap();
            let r = op.apply(&u, 0.0).unwrap();
            for &i in op.interior() {
                let x = g.coordinate(i)[0];
                let exact = -a * 2.0 * q2 + c0 * u.get(i) - l;
                assert!((r.get(i) - exact).abs() < 1e-10, "{diff:?} x {x}");
            }
        }
        for &b in &[2.0, -3.0] {
            let m = ClosureModel::new(1).with_diffusion(move |_, _| SymMat::scalar(a)).with_drift(move |_, _| [b, 0.0]);
            let p = ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap();
            let u = ScalarField::from_fn(g, |x| q1 * x[0] + q0).unwrap();
            for diff in [DriftDifferencing::Upwind, DriftDifferencing::Hybrid] {
                let op = discretize_with(&p, &BoundaryClosure::frozen(0.0), diff).unwrap();
                let r = op.apply(&u, 0.0).unwrap();
                for &i in op.interior() {
                    assert!((r.get(i) - (-b * q1)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pucci_rows_realize_eigenvalue_formula() {
        let g = Grid::new(1, 1.0, 11).unwrap();
        let m = ClosureModel::new(1);
        let pp = PucciParams::new(1.0, 2.0).unwrap();
        let p = ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::PucciMinus, Some(pp)).unwrap();
        let op = discretize(&p, &BoundaryClosure::frozen(0.0)).unwrap();
        assert_eq!(op.effective_controls().len(), 2);
        for sign in [1.0, -1.0] {
            let u = ScalarField::from_fn(g, |x| sign * x[0] * x[0]).unwrap();
            let r = op.apply(&u, 0.0).unwrap();
            // u'' = 2 sign: M⁻ = -Λ·2 if positive, -λ·(-2) if negative.
            let want = if sign > 0.0 { -4.0 } else { 2.0 };
            for &i in op.interior() {
                assert!((r.get(i) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn triplets_dump() {
        let p = problem_1d(1.0, 3, 1.0, |_| 0.0, |_| 0.0);
        let op = discretize(&p, &BoundaryClosure::frozen(0.0)).unwrap();
        let mut buf = Vec::new();
        op.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "control,row,col,weight\n0,1,1,2\n0,1,0,-1\n0,1,2,-1\nb,0,0,1\nb,2,2,1\n");
    }
}
