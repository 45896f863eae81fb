//! Vanishing-discount driver: a decreasing ladder of discounts, the critical
//! value estimates c_k = −δ_k·u_δk(x_ref), the corrector χ and its growth.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::problem::ProblemSpec;
use crate::scheme::{discretize_with, BoundaryClosure, DiscreteOperator, DriftDifferencing};
use crate::solver::{solve_discounted_with, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderParams {
    pub delta0: f64,
    pub factor: f64,
    pub len: usize,
}

impl Default for LadderParams {
    fn default() -> Self {
        Self { delta0: 0.2, factor: 0.5, len: 7 }
    }
}

impl LadderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0) || !self.delta0.is_finite() {
            return Err(Error::InvalidParameter(format!("delta0 must be positive, got {}", self.delta0)));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidParameter(format!("ladder factor must lie in (0, 1), got {}", self.factor)));
        }
        if self.len == 0 {
            return Err(Error::InvalidParameter("ladder length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn deltas(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.delta0 * self.factor.powi(k as i32)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicOptions {
    pub ladder: LadderParams,
    pub solve: SolveOptions,
    /// Reference node; the origin when `None`.
    pub x_ref: Option<usize>,
    pub beta_list: Vec<f64>,
    pub differencing: DriftDifferencing,
    /// Increments of c_k smaller than this never count as oscillation.
    pub oscillation_tol: f64,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            ladder: LadderParams::default(),
            solve: SolveOptions::default(),
            x_ref: None,
            beta_list: vec![0.5, 1.0, 1.5],
            differencing: DriftDifferencing::default(),
            oscillation_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderEntry {
    pub delta: f64,
    pub c: f64,
    pub residual: f64,
    pub iterations: usize,
    pub u_ref: f64,
    pub closure_slack: f64,
    pub bound_holds: bool,
}

#[derive(Clone, Debug)]
pub struct ErgodicResult {
    pub ladder: Vec<LadderEntry>,
    /// Last ladder value.
    pub c: f64,
    /// Aitken Δ² extrapolation of the last three c_k (advisory only).
    pub c_aitken: Option<f64>,
    pub x_ref: usize,
    pub chi: ScalarField,
    /// |c_k − c_{k−1}| for k ≥ 1.
    pub convergence: Vec<f64>,
    pub oscillation_flag: bool,
    pub l_sup: f64,
    /// Largest closure slack over the ladder.
    pub closure_slack: f64,
    /// `None` when the grid is too small for three annuli.
    pub growth: Option<GrowthReport>,
}

impl ErgodicResult {
    pub fn delta_ladder(&self) -> Vec<f64> {
        self.ladder.iter().map(|e| e.delta).collect()
    }

    pub fn c_estimates(&self) -> Vec<f64> {
        self.ladder.iter().map(|e| e.c).collect()
    }

    pub fn to_json(&self, chi_csv_path: Option<&Path>) -> serde_json::Value {
        let grid = self.chi.grid();
        serde_json::json!({
            "ladder": self.ladder.iter().map(|e| [e.delta, e.c, e.residual]).collect::<Vec<_>>(),
            "c": self.c,
            "c_aitken": self.c_aitken,
            "chi_csv_path": chi_csv_path.map(|p| p.display().to_string()),
            "growth": self.growth,
            "x_ref": grid.coordinate(self.x_ref)[..grid.dim()].to_vec(),
            "convergence": self.convergence,
            "oscillation_flag": self.oscillation_flag,
            "l_sup": self.l_sup,
            "closure_slack": self.closure_slack,
            "iterations": self.ladder.iter().map(|e| e.iterations).collect::<Vec<_>>(),
        })
    }
}

/// Runs the default ladder machinery with the given ladder parameters.
pub fn vanishing_discount(
    problem: &ProblemSpec,
    closure: &BoundaryClosure,
    delta0: f64,
    ladder_factor: f64,
    ladder_len: usize,
    tol: f64,
) -> Result<ErgodicResult> {
    let mut opts = ErgodicOptions::default();
    opts.ladder = LadderParams { delta0, factor: ladder_factor, len: ladder_len };
    opts.solve.tol = tol;
    vanishing_discount_with(problem, closure, &opts)
}

pub fn vanishing_discount_with(
    problem: &ProblemSpec,
    closure: &BoundaryClosure,
    opts: &ErgodicOptions,
) -> Result<ErgodicResult> {
    let op = discretize_with(problem, closure, opts.differencing)?;
    vanishing_discount_operator(&op, opts)
}

fn aitken(c: &[f64]) -> Option<f64> {
    if c.len() < 3 {
        return None;
    }
    let (c0, c1, c2) = (c[c.len() - 3], c[c.len() - 2], c[c.len() - 1]);
    let denom = (c2 - c1) - (c1 - c0);
    if denom.abs() <= 1e-14 * (c0.abs() + c1.abs() + c2.abs() + 1.0) {
        return None;
    }
    Some(c2 - (c2 - c1).powi(2) / denom)
}

pub fn vanishing_discount_operator(op: &DiscreteOperator, opts: &ErgodicOptions) -> Result<ErgodicResult> {
    opts.ladder.validate()?;
    let grid = *op.grid();
    let x_ref = opts.x_ref.unwrap_or_else(|| grid.origin());
    if x_ref >= grid.node_count() {
        return Err(Error::InvalidParameter(format!("reference node {x_ref} outside the grid")));
    }
    let mut ladder: Vec<LadderEntry> = Vec::with_capacity(opts.ladder.len);
    let mut warm: Option<ScalarField> = None;
    let mut last_u: Option<ScalarField> = None;
    for (step, delta) in opts.ladder.deltas().into_iter().enumerate() {
        let solve = solve_discounted_with(op, delta, &opts.solve, warm.as_ref())
            .map_err(|e| Error::LadderAborted { step, completed: ladder.clone(), source: Box::new(e) })?;
        let u_ref = solve.u.get(x_ref);
        let c = -delta * u_ref;
        ladder.push(LadderEntry {
            delta,
            c,
            residual: solve.residual_inf,
            iterations: solve.iterations,
            u_ref,
            closure_slack: solve.bound.closure_slack,
            bound_holds: solve.bound.holds,
        });
        let next_delta = delta * opts.ladder.factor;
        let shift = -c * (1.0 / next_delta - 1.0 / delta);
        warm = Some(ScalarField::new(grid, solve.u.values().iter().map(|v| v + shift).collect())?);
        last_u = Some(solve.u);
    }
    let u = last_u.expect("ladder has at least one entry");
    let u_ref = u.get(x_ref);
    let chi = ScalarField::new(grid, u.values().iter().map(|v| v - u_ref).collect())?;

    let cs: Vec<f64> = ladder.iter().map(|e| e.c).collect();
    let increments: Vec<f64> = cs.windows(2).map(|w| w[1] - w[0]).collect();
    let oscillation_flag = increments
        .windows(2)
        .any(|w| w[0] * w[1] < 0.0 && w[0].abs().min(w[1].abs()) > opts.oscillation_tol);
    let growth = match growth_diagnostics(&chi, &grid, &opts.beta_list) {
        Ok(g) => Some(g),
        Err(Error::InvalidGrid(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ErgodicResult {
        c: *cs.last().expect("nonempty ladder"),
        c_aitken: aitken(&cs),
        x_ref,
        chi,
        convergence: increments.iter().map(|d| d.abs()).collect(),
        oscillation_flag,
        l_sup: op.cost_sup_norm(),
        closure_slack: ladder.iter().map(|e| e.closure_slack).fold(0.0, f64::max),
        growth,
        ladder,
    })
}

/// Ratio table for one reference growth w_ref(r) = r^exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub reference: String,
    pub exponent: f64,
    pub ratios: Vec<f64>,
    /// Ratios over the outer half of annuli non-increasing within 10% and
    /// strictly lower at the end (or identically zero).
    pub decays: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    /// max |χ| per annulus.
    pub annulus_sup: Vec<f64>,
    pub rows: Vec<GrowthRow>,
    pub inner_sup: f64,
    pub outer_sup: f64,
    /// outer_sup ≤ 1.05·inner_sup.
    pub bounded: bool,
    /// The quadratic ratio decays.
    pub sub_quadratic: bool,
}

impl GrowthReport {
    pub fn row(&self, exponent: f64) -> Option<&GrowthRow> {
        self.rows.iter().find(|r| r.exponent == exponent)
    }
}

fn decays(ratios: &[f64]) -> bool {
    let outer = &ratios[ratios.len() / 2..];
    let peak = outer.iter().copied().fold(0.0, f64::max);
    if peak <= 1e-12 {
        return true;
    }
    let steady = outer.windows(2).all(|w| w[1] <= 1.10 * w[0]);
    steady && outer[outer.len() - 1] < outer[0]
}

/// Annulus-wise growth ratios of χ against r², r^β (β in `beta_list`) and 1.
/// Annuli sit at radii j·h for j = 1..m−2, which leaves out the two outermost
/// grid layers.
pub fn growth_diagnostics(chi: &ScalarField, grid: &Grid, beta_list: &[f64]) -> Result<GrowthReport> {
    chi.ensure_grid(grid)?;
    let m = grid.half_count();
    if m < 4 {
        return Err(Error::InvalidGrid(format!("need at least 3 annuli, grid has half-count {m}")));
    }
    if let Some(b) = beta_list.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::InvalidParameter(format!("growth exponents must be positive, got {b}")));
    }
    let h = grid.spacing();
    let n_ann = m - 2;
    let mut annulus_sup = vec![0.0f64; n_ann];
    for i in 0..grid.node_count() {
        let r = crate::linalg::norm(grid.dim(), &grid.coordinate(i)) / h;
        let j = r.round() as usize;
        if j >= 1 && j <= n_ann && (r - j as f64).abs() <= 0.5 {
            annulus_sup[j - 1] = annulus_sup[j - 1].max(chi.get(i).abs());
        }
    }
    let radii: Vec<f64> = (1..=n_ann).map(|j| j as f64 * h).collect();
    let mut exponents = vec![2.0];
    for &b in beta_list {
        if !exponents.contains(&b) {
            exponents.push(b);
        }
    }
    let rows = exponents
        .iter()
        .map(|&p| {
            let ratios: Vec<f64> = radii.iter().zip(&annulus_sup).map(|(r, s)| s / r.powf(p)).collect();
            GrowthRow { reference: format!("r^{p}"), exponent: p, decays: decays(&ratios), ratios }
        })
        .collect::<Vec<_>>();
    let half = n_ann / 2;
    let inner_sup = annulus_sup[..half].iter().copied().fold(chi.get(grid.origin()).abs(), f64::max);
    let outer_sup = annulus_sup[half..].iter().copied().fold(0.0, f64::max);
    let bounded = outer_sup <= 1.05 * inner_sup + 1e-12;
    let sub_quadratic = rows[0].decays;
    Ok(GrowthReport { radii, annulus_sup, rows, inner_sup, outer_sup, bounded, sub_quadratic })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub c_a: f64,
    pub c_b: f64,
    pub delta_c: f64,
    pub delta_c_aitken: Option<f64>,
    pub max_dev_from_constant: f64,
}

/// Runs the pipeline with two reference nodes in parallel and compares
/// the critical values and the correctors up to a constant.
pub fn uniqueness_probe(
    problem: &ProblemSpec,
    closure: &BoundaryClosure,
    opts: &ErgodicOptions,
    x_ref_a: usize,
    x_ref_b: usize,
) -> Result<ProbeResult> {
    if x_ref_a == x_ref_b {
        return Err(Error::InvalidParameter("uniqueness probe needs two distinct reference nodes".into()));
    }
    let op = discretize_with(problem, closure, opts.differencing)?;
    let run = |x_ref: usize| {
        let o = ErgodicOptions { x_ref: Some(x_ref), ..opts.clone() };
        vanishing_discount_operator(&op, &o)
    };
    let (a, b) = rayon::join(|| run(x_ref_a), || run(x_ref_b));
    let (a, b) = (a?, b?);
    let interior = op.interior();
    let diff: Vec<f64> = interior.iter().map(|&i| a.chi.get(i) - b.chi.get(i)).collect();
    let mean = diff.iter().sum::<f64>() / diff.len().max(1) as f64;
    let dev = diff.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max);
    Ok(ProbeResult {
        c_a: a.c,
        c_b: b.c,
        delta_c: (a.c - b.c).abs(),
        delta_c_aitken: a.c_aitken.zip(b.c_aitken).map(|(x, y)| (x - y).abs()),
        max_dev_from_constant: dev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ClosureModel, ControlSet};
    use crate::linalg::SymMat;
    use crate::problem::OperatorMode;
    use crate::scheme::Anchor;

    fn ou_problem(l: f64, n: usize, cost: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ProblemSpec {
        let g = Grid::new(1, l, n).unwrap();
        let m = ClosureModel::new(1)
            .with_diffusion(|_, _| SymMat::scalar(1.0))
            .with_drift(|x, _| [-x[0], 0.0])
            .with_running_cost(move |x, _| cost(x[0]));
        ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap()
    }

    #[test]
    fn constant_cost_gives_minus_cost() {
        let p = ou_problem(4.0, 81, |_| 2.0);
        let r = vanishing_discount(&p, &BoundaryClosure::Frozen { anchor: Anchor::Centre }, 0.2, 0.5, 5, 1e-10).unwrap();
        assert!((r.c + 2.0).abs() < 1e-9);
        assert!(r.chi.max_abs() < 1e-8);
        assert_eq!(r.chi.get(r.x_ref), 0.0);
    }

    #[test]
    fn sign_flip_duality() {
        let p = ou_problem(4.0, 81, |x| (x).sin() + 0.3 * x.cos());
        let closure = BoundaryClosure::Frozen { anchor: Anchor::Centre };
        let a = vanishing_discount(&p, &closure, 0.2, 0.5, 4, 1e-11).unwrap();
        let b = vanishing_discount(&p.dual(), &closure, 0.2, 0.5, 4, 1e-11).unwrap();
        assert!((a.c + b.c).abs() < 1e-9);
        for (x, y) in a.chi.values().iter().zip(b.chi.values()) {
            assert!((x + y).abs() < 1e-8);
        }
    }

    #[test]
    fn aborted_ladder_keeps_completed_entries() {
        let p = ou_problem(4.0, 81, |x| x.sin());
        let mut opts = ErgodicOptions::default();
        opts.ladder = LadderParams { delta0: 0.2, factor: 0.5, len: 3 };
        opts.solve.inner = crate::solver::InnerSolver::GaussSeidel { omega: 1.0, max_sweeps: 3 };
        match vanishing_discount_with(&p, &BoundaryClosure::frozen(0.0), &opts) {
            Err(Error::LadderAborted { step, completed, .. }) => assert_eq!(completed.len(), step),
            other => panic!("expected an aborted ladder, got {other:?}"),
        }
    }

    #[test]
    fn ladder_validation() {
        assert!(LadderParams { delta0: 0.2, factor: 1.0, len: 3 }.validate().is_err());
        assert!(LadderParams { delta0: -1.0, factor: 0.5, len: 3 }.validate().is_err());
        assert_eq!(LadderParams::default().deltas().len(), 7);
    }

    #[test]
    fn aitken_recovers_geometric_limit() {
        let c: Vec<f64> = (0..3).map(|k| 1.0 + 0.5f64.powi(k)).collect();
        assert!((aitken(&c).unwrap() - 1.0).abs() < 1e-14);
        assert!(aitken(&[1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn growth_of_log_profile() {
        let g = Grid::new(1, 40.0, 401).unwrap();
        let chi = ScalarField::from_fn(g, |x| (1.0 + x[0] * x[0]).ln()).unwrap();
        let r = growth_diagnostics(&chi, &g, &[0.5, 1.0, 1.5]).unwrap();
        assert!(r.rows.iter().all(|row| row.decays), "{:?}", r.rows.iter().map(|r| r.decays).collect::<Vec<_>>());
        assert!(r.sub_quadratic);
        assert!(!r.bounded);
    }

    #[test]
    fn growth_of_constant_and_quadratic() {
        let g = Grid::new(2, 3.0, 31).unwrap();
        let five = ScalarField::constant(g, 5.0);
        let r = growth_diagnostics(&five, &g, &[0.5, 1.0]).unwrap();
        assert!(r.bounded && r.rows.iter().all(|row| row.decays));
        let g1 = Grid::new(1, 3.0, 31).unwrap();
        let quad = ScalarField::from_fn(g1, |x| x[0] * x[0]).unwrap();
        let r = growth_diagnostics(&quad, &g1, &[1.0]).unwrap();
        assert!(r.row(2.0).unwrap().ratios.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(!r.sub_quadratic && !r.bounded);
    }

    #[test]
    fn growth_needs_three_annuli() {
        let g = Grid::new(1, 1.0, 7).unwrap();
        assert!(growth_diagnostics(&ScalarField::constant(g, 0.0), &g, &[1.0]).is_err());
    }

    #[test]
    fn probe_is_exact_for_constant_cost() {
        let p = ou_problem(4.0, 41, |_| 1.0);
        let mut opts = ErgodicOptions::default();
        opts.ladder.len = 3;
        let closure = BoundaryClosure::Frozen { anchor: Anchor::Centre };
        let g = p.grid();
        let r = uniqueness_probe(&p, &closure, &opts, g.origin(), g.nearest_node(&[1.0, 0.0])).unwrap();
        assert!(r.delta_c < 1e-10 && r.max_dev_from_constant < 1e-8);
    }
}
