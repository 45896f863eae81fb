//! Discounted stationary solves (Howard policy iteration) and explicit
//! parabolic marching.

mod linear;
mod parabolic;

pub use linear::{InnerSolver, PolicySystem};
pub use parabolic::{march_operator, march_parabolic, ParabolicBoundary, ParabolicConfig, ParabolicRun, TailStatistics};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::problem::ProblemSpec;
use crate::scheme::{discretize, BoundaryClosure, DiscreteOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner: InnerSolver,
    /// Sweep budget of the value-iteration fallback.
    pub max_value_sweeps: usize,
    /// Damping θ ∈ (0, 1] of the value-iteration fallback.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200, inner: InnerSolver::Direct, max_value_sweeps: 2_000_000, damping: 1.0 }
    }
}

/// Post hoc check of δ·max|u| ≤ max|l| + closure slack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountBound {
    pub delta_sup_u: f64,
    pub l_sup: f64,
    /// max(0, δ·max over boundary |u| − max|l|).
    pub closure_slack: f64,
    pub holds: bool,
}

impl DiscountBound {
    pub fn evaluate(op: &DiscreteOperator, delta: f64, u: &[f64]) -> Self {
        let l_sup = op.cost_sup_norm();
        let delta_sup_u = delta * u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let boundary_sup = op.boundary().iter().fold(0.0f64, |m, &b| m.max(u[b].abs()));
        let closure_slack = (delta * boundary_sup - l_sup).max(0.0);
        Self { delta_sup_u, l_sup, closure_slack, holds: delta_sup_u <= l_sup + 1e-8 + closure_slack }
    }
}

#[derive(Clone, Debug)]
pub struct DiscountedSolve {
    pub delta: f64,
    pub u: ScalarField,
    pub residual_inf: f64,
    pub iterations: usize,
    /// Control index per node; `None` on boundary nodes.
    pub policy: Vec<Option<usize>>,
    /// Effective-control index per node (distinguishes Pucci diffusion levels).
    pub effective_policy: Vec<usize>,
    pub used_value_iteration: bool,
    pub bound: DiscountBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscountedSummary {
    pub delta: f64,
    pub residual: f64,
    pub iterations: usize,
    pub u0: f64,
    pub sup_u: f64,
    pub inf_u: f64,
}

impl DiscountedSolve {
    pub fn summary(&self) -> DiscountedSummary {
        DiscountedSummary {
            delta: self.delta,
            residual: self.residual_inf,
            iterations: self.iterations,
            u0: self.u.get(self.u.grid().origin()),
            sup_u: self.u.max(),
            inf_u: self.u.min(),
        }
    }
}

/// Discretizes `problem` and solves δu + F_h(u) = 0 with default options.
pub fn solve_discounted(
    problem: &ProblemSpec,
    closure: &BoundaryClosure,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DiscountedSolve> {
    let op = discretize(problem, closure)?;
    let opts = SolveOptions { tol, max_iter, ..SolveOptions::default() };
    solve_discounted_with(&op, delta, &opts, None)
}

fn greedy_policy(op: &DiscreteOperator, u: &[f64]) -> Vec<usize> {
    let mut p = vec![0; u.len()];
    for &i in op.interior() {
        p[i] = op.optimal_row(i, u).1;
    }
    p
}

/// Greedy policy that keeps the current control unless another row is better
/// by more than round-off, so ties cannot make the iteration cycle.
fn improve_policy(op: &DiscreteOperator, u: &[f64], current: &[usize]) -> Vec<usize> {
    let minimize = op.mode().minimizes();
    let scale = 64.0 * f64::EPSILON;
    let mut p = current.to_vec();
    for &i in op.interior() {
        let (best, arg) = op.optimal_row(i, u);
        let now = op.row_value(i, current[i], u);
        let gap = if minimize { now - best } else { best - now };
        if gap > scale * (now.abs() + best.abs() + 1.0) {
            p[i] = arg;
        }
    }
    p
}

fn closure_consistent_start(op: &DiscreteOperator, delta: f64) -> Vec<f64> {
    let n = op.grid().node_count();
    // Start from the constant solving the equation for the cost at the centre.
    let guess = if op.interior().is_empty() { 0.0 } else { op.stencil(op.centre(), 0).cost / delta };
    let mut u = vec![guess; n];
    for &b in op.boundary() {
        u[b] = op.boundary_value(b, &u);
    }
    u
}

/// Howard policy iteration on a prepared operator, optionally warm-started.
pub fn solve_discounted_with(
    op: &DiscreteOperator,
    delta: f64,
    opts: &SolveOptions,
    warm_start: Option<&ScalarField>,
) -> Result<DiscountedSolve> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("discount must be positive, got {delta}")));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter("tolerance must be positive and max_iter at least 1".into()));
    }
    let mut u = match warm_start {
        Some(w) => {
            w.ensure_grid(op.grid())?;
            w.values().to_vec()
        }
        None => closure_consistent_start(op, delta),
    };
    let mut policy = greedy_policy(op, &u);
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let sys = PolicySystem::new(op, delta, &policy);
        let inner_tol = 0.25 * opts.tol;
        u = sys.solve(opts.inner, &u, inner_tol)?;
        residual = op.residual_inf(&u, delta);
        let tol_eff = opts.tol.max(roundoff_floor(op, delta, &u));
        let next = improve_policy(op, &u, &policy);
        if residual <= tol_eff || next == policy {
            if residual > tol_eff {
                return Err(Error::NonConvergence { iterations: it, residual });
            }
            return finish(op, delta, u, residual, it, next, false);
        }
        seen.push(std::mem::replace(&mut policy, next));
        if seen.contains(&policy) {
            let (u, residual, sweeps) = value_iteration(op, delta, opts, u)?;
            let pol = greedy_policy(op, &u);
            return finish(op, delta, u, residual, it + sweeps, pol, true);
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

fn roundoff_floor(op: &DiscreteOperator, delta: f64, u: &[f64]) -> f64 {
    let scale = (delta + op.max_diagonal()) * u.iter().fold(0.0f64, |m, v| m.max(v.abs())) + op.cost_sup_norm();
    256.0 * f64::EPSILON * scale
}

fn finish(
    op: &DiscreteOperator,
    delta: f64,
    u: Vec<f64>,
    residual: f64,
    iterations: usize,
    effective_policy: Vec<usize>,
    used_value_iteration: bool,
) -> Result<DiscountedSolve> {
    let bound = DiscountBound::evaluate(op, delta, &u);
    let controls = op.effective_controls();
    let mask = op.grid().boundary_mask();
    let policy = effective_policy
        .iter()
        .zip(&mask)
        .map(|(&e, &b)| if b { None } else { Some(controls[e].alpha) })
        .collect();
    Ok(DiscountedSolve {
        delta,
        u: ScalarField::new(*op.grid(), u)?,
        residual_inf: residual,
        iterations,
        policy,
        effective_policy,
        used_value_iteration,
        bound,
    })
}

/// One damped explicit step u ← u − θτ(δu + F_h(u)) with τ = 1/(δ + max diag);
/// boundary rows are then reset from the closure.
pub fn value_iteration_step(op: &DiscreteOperator, delta: f64, theta: f64, u: &[f64]) -> Vec<f64> {
    let tau = 1.0 / (delta + op.max_diagonal());
    let mut next = u.to_vec();
    for &i in op.interior() {
        next[i] = u[i] - theta * tau * (delta * u[i] + op.optimal_row(i, u).0);
    }
    for &b in op.boundary() {
        next[b] = op.boundary_value(b, &next);
    }
    next
}

fn value_iteration(op: &DiscreteOperator, delta: f64, opts: &SolveOptions, mut u: Vec<f64>) -> Result<(Vec<f64>, f64, usize)> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let mut residual = f64::INFINITY;
    for sweep in 1..=opts.max_value_sweeps {
        u = value_iteration_step(op, delta, opts.damping, &u);
        if sweep % 64 == 0 || sweep == opts.max_value_sweeps {
            residual = op.residual_inf(&u, delta);
            if !residual.is_finite() {
                return Err(Error::Internal("value iteration diverged".into()));
            }
            if residual <= opts.tol.max(roundoff_floor(op, delta, &u)) {
                return Ok((u, residual, sweep));
            }
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_value_sweeps, residual })
}
