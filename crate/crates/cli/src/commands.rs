//! The subcommands. Each one validates its own flags, then computes and
//! writes its artifacts into the output directory.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use hjb_core::conditions::{check_condition, ConditionId, ConditionParams, ConditionReport, Decomposition};
use hjb_core::ergodic::{vanishing_discount_operator, ErgodicOptions, LadderEntry, LadderParams};
use hjb_core::oracle::{gaussian_average, mc_discounted_value};
use hjb_core::presets::{initial_datum, initial_datum_1d};
use hjb_core::scheme::discretize_with;
use hjb_core::solver::{march_operator, solve_discounted_with, ParabolicBoundary, ParabolicConfig};
use hjb_core::{BoundaryClosure, CoefficientModel, Error, Sigma, SymMat, Vec2};
use serde_json::json;

use crate::args::{BoundaryKind, CheckArgs, DiscountedArgs, ErgodicArgs, OracleArgs, ParabolicArgs};
use crate::output::{field_plot, margins_plot, snapshots_plot, OutDir};
use crate::setup::{solve_options, Setup};
use crate::Failure;

fn require_preset(s: &Setup, what: &str) -> Result<(), Failure> {
    if s.from_preset {
        Ok(())
    } else {
        Err(Failure::Config(format!("{what} needs closure coefficients; drop --coefficients and use a preset")))
    }
}

fn coords(values: &[f64], dim: usize, flag: &str) -> Result<Vec2, Failure> {
    if values.len() != dim || values.iter().any(|v| !v.is_finite()) {
        return Err(Failure::Config(format!("--{flag} needs {dim} finite coordinate(s)")));
    }
    let mut x = [0.0; 2];
    x[..dim].copy_from_slice(values);
    Ok(x)
}

/// Smallest and largest eigenvalue of the tabulated diffusion.
fn ellipticity_range(s: &Setup) -> (f64, f64) {
    let c = &s.problem.coefficients;
    let dim = s.grid.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for node in 0..s.grid.node_count() {
        for alpha in 0..c.n_controls() {
            let e = c.at(node, alpha).a.eigenvalues();
            lo = lo.min(e[0]);
            hi = hi.max(e[dim - 1]);
        }
    }
    (lo, hi)
}

fn trivial_decomposition(model: Arc<dyn CoefficientModel>) -> Decomposition {
    let (b1, b2, c0) = (model.clone(), model.clone(), model);
    Decomposition::default()
        .with_growth_split(move |x| b1.drift(x, 0), |_| 0.0, move |x| c0.zeroth_order(x, 0))
        .with_pair(move |x| b2.drift(x, 0), |_| 0.0)
}

pub fn check(a: &CheckArgs, s: &Setup, out: &OutDir) -> Result<(), Failure> {
    require_preset(s, "condition checking")?;
    let ids = a
        .conditions
        .iter()
        .map(|c| c.trim().parse::<ConditionId>().map_err(Failure::config))
        .collect::<Result<Vec<_>, _>>()?;
    if ids.is_empty() {
        return Err(Failure::Config("--conditions is empty".into()));
    }
    let dim = s.grid.dim();
    let (lambda, big_lambda) = match s.problem.pucci {
        Some(p) => (p.lambda, p.big_lambda),
        None => ellipticity_range(s),
    };
    let l_inf = a.l_inf.unwrap_or_else(|| s.problem.coefficients.cost_sup_norm());
    let model: Arc<dyn CoefficientModel> = Arc::new(s.preset.model.clone());
    let decomposition = if s.preset.controls.len() == 1 {
        trivial_decomposition(model.clone())
    } else {
        Decomposition::default()
    };
    let params = ConditionParams {
        lambda: (lambda > 0.0).then_some(lambda),
        big_lambda: (big_lambda > 0.0).then_some(big_lambda),
        m: a.m,
        beta: a.beta,
        rho: a.rho,
        gamma: a.gamma,
        mean: a.mean.as_deref().map(|m| coords(m, dim, "mean")).transpose()?,
        c_abs: Some(a.c_abs.unwrap_or(l_inf)),
        l_inf: Some(l_inf),
        tol: a.cond_tol,
        directions: a.directions,
        decomposition,
        ..ConditionParams::default()
    };
    let count = a.radii.unwrap_or_else(|| s.grid.half_count());
    if count == 0 {
        return Err(Failure::Config("--radii must be at least 1".into()));
    }
    let big_l = s.grid.halfwidth();
    let radii: Vec<f64> = (1..=count).map(|j| big_l * j as f64 / count as f64).collect();

    let reports = ids
        .iter()
        .map(|&id| check_condition(id, model.as_ref(), &s.preset.controls, &params, &radii).map_err(Failure::config))
        .collect::<Result<Vec<ConditionReport>, _>>()?;

    let mut w = out.writer("margins.csv")?;
    let io = |e: std::io::Error| Failure::Numerical(format!("cannot write margins.csv: {e}"));
    writeln!(w, "condition,radius,slack").map_err(io)?;
    for r in &reports {
        for m in &r.margins {
            writeln!(w, "{},{},{}", r.id, m[0], m[1]).map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    let all_hold = reports.iter().all(|r| r.holds);
    out.json("check.json", &json!({ "all_hold": all_hold, "radii": count, "reports": reports }))?;
    if a.common.gnuplot {
        let names: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        out.text("plot.gp", &margins_plot(&names))?;
    }
    for r in &reports {
        match r.r0 {
            Some(r0) => println!("{}: holds for r >= {r0}", r.id),
            None => println!("{}: fails (no sampled radius suffices)", r.id),
        }
    }
    if all_hold {
        Ok(())
    } else {
        let failed: Vec<String> = reports.iter().filter(|r| !r.holds).map(|r| r.id.to_string()).collect();
        Err(Failure::Numerical(format!("condition(s) not satisfied: {}", failed.join(", "))))
    }
}

pub fn discounted(a: &DiscountedArgs, s: &Setup, out: &OutDir) -> Result<(), Failure> {
    let opts = solve_options(&a.solver)?;
    if !(a.delta > 0.0) || !a.delta.is_finite() {
        return Err(Failure::Config(format!("--delta must be positive, got {}", a.delta)));
    }
    let op = s.operator()?;
    let sol = solve_discounted_with(&op, a.delta, &opts, None).map_err(Failure::numerical)?;
    sol.u.write_csv(out.writer("u.csv")?).map_err(Failure::numerical)?;
    out.json(
        "discounted.json",
        &json!({
            "summary": sol.summary(),
            "bound": sol.bound,
            "used_value_iteration": sol.used_value_iteration,
        }),
    )?;
    if a.common.gnuplot {
        out.text("plot.gp", &field_plot("u.csv", s.grid.dim(), "u_delta"))?;
    }
    let sm = sol.summary();
    println!(
        "delta = {}: u(0) = {}, residual = {:e}, iterations = {}, bound holds: {}",
        sm.delta, sm.u0, sm.residual, sm.iterations, sol.bound.holds
    );
    Ok(())
}

fn write_ladder(out: &OutDir, ladder: &[LadderEntry]) -> Result<(), Failure> {
    let mut w = out.writer("ladder.csv")?;
    let io = |e: std::io::Error| Failure::Numerical(format!("cannot write ladder.csv: {e}"));
    writeln!(w, "delta,c,residual,iterations,u_ref,closure_slack,bound_holds").map_err(io)?;
    for e in ladder {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.delta, e.c, e.residual, e.iterations, e.u_ref, e.closure_slack, e.bound_holds
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn ergodic(a: &ErgodicArgs, s: &Setup, out: &OutDir) -> Result<(), Failure> {
    let opts = ErgodicOptions {
        ladder: LadderParams { delta0: a.delta0, factor: a.ladder_factor, len: a.ladder_len },
        solve: solve_options(&a.solver)?,
        x_ref: a.x_ref.as_deref().map(|x| s.node_at(x, "x-ref")).transpose()?,
        beta_list: a.beta_list.clone(),
        differencing: s.differencing,
        ..ErgodicOptions::default()
    };
    opts.ladder.validate().map_err(Failure::config)?;
    if let Some(b) = opts.beta_list.iter().find(|b| !(**b > 0.0)) {
        return Err(Failure::Config(format!("--beta-list entries must be positive, got {b}")));
    }
    let op = s.operator()?;
    let result = match vanishing_discount_operator(&op, &opts) {
        Ok(r) => r,
        Err(Error::LadderAborted { step, completed, source }) => {
            write_ladder(out, &completed)?;
            out.json(
                "ergodic.json",
                &json!({ "error": source.to_string(), "aborted_at_step": step, "ladder": completed }),
            )?;
            return Err(Failure::Numerical(format!("discount ladder aborted at step {step}: {source}")));
        }
        Err(e) => return Err(Failure::numerical(e)),
    };
    write_ladder(out, &result.ladder)?;
    result.chi.write_csv(out.writer("chi.csv")?).map_err(Failure::numerical)?;
    out.json("ergodic.json", &result.to_json(Some(Path::new("chi.csv"))))?;
    if a.common.gnuplot {
        out.text("plot.gp", &field_plot("chi.csv", s.grid.dim(), "chi"))?;
    }
    println!("c = {}", result.c);
    if let Some(ca) = result.c_aitken {
        println!("c (Aitken, advisory) = {ca}");
    }
    if result.oscillation_flag {
        println!("warning: ladder values oscillate");
    }
    if let Some(g) = &result.growth {
        println!("growth: bounded = {}, sub-quadratic = {}", g.bounded, g.sub_quadratic);
    }
    Ok(())
}

pub fn parabolic(a: &ParabolicArgs, s: &Setup, out: &OutDir) -> Result<(), Failure> {
    let h0_name = a.h0.clone().unwrap_or_else(|| s.preset.h0.to_string());
    let h0 = initial_datum(&h0_name, &s.grid).map_err(Failure::config)?;
    let kind = a.boundary.unwrap_or(match s.preset.parabolic_boundary {
        ParabolicBoundary::InitialDatum => BoundaryKind::Initial,
        ParabolicBoundary::Closure { .. } => BoundaryKind::Closure,
    });
    let (boundary, op) = match kind {
        BoundaryKind::Initial => (
            ParabolicBoundary::InitialDatum,
            discretize_with(&s.problem, &BoundaryClosure::frozen(0.0), s.differencing)
                .and_then(|op| op.with_fixed_boundary(&h0))
                .map_err(Failure::config)?,
        ),
        BoundaryKind::Closure => (ParabolicBoundary::Closure { closure: s.closure }, s.operator()?),
    };
    if !(a.t_final > 0.0) || !a.t_final.is_finite() {
        return Err(Failure::Config(format!("--t-final must be positive, got {}", a.t_final)));
    }
    if let Some(w) = a.tail_window {
        if !(w > 0.0 && w <= a.t_final) {
            return Err(Failure::Config(format!("--tail-window must lie in (0, t-final], got {w}")));
        }
    }
    if let Some(dt) = a.dt {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Failure::Config(format!("--dt must be positive, got {dt}")));
        }
    }
    if a.snapshots == 0 {
        return Err(Failure::Config("--snapshots must be at least 1".into()));
    }
    let cfg = ParabolicConfig {
        dt: a.dt.unwrap_or(0.9 / op.max_diagonal()),
        t_final: a.t_final,
        tail_window: a.tail_window,
        probes: None,
        n_snapshots: a.snapshots,
        differencing: s.differencing,
    };
    let run = match march_operator(&op, &h0, &cfg) {
        Ok(r) => r,
        Err(Error::BlowUp { time, last_valid }) => {
            last_valid.1.write_csv(out.writer("last_valid.csv")?).map_err(Failure::numerical)?;
            out.json("tail.json", &json!({ "error": "blow-up", "time": time, "last_valid_time": last_valid.0 }))?;
            return Err(Failure::Numerical(format!("non-finite solution at t = {time}")));
        }
        Err(e) => return Err(Failure::numerical(e)),
    };
    let stats = run.tail_statistics();

    let gaussian = match s.preset.ou {
        Some(ou) if s.from_preset && s.grid.dim() == 1 && !s.problem.mode.is_pucci() => {
            let h = initial_datum_1d(&h0_name).map_err(Failure::config)?;
            let variance = ou.invariant_variance();
            let avg = gaussian_average(h, ou.mean, variance, 64).map_err(Failure::numerical)?;
            Some(json!({
                "mean": ou.mean,
                "variance": variance,
                "average": avg,
                "ubar_minus_average": stats.ubar - avg,
                "ulow_minus_average": stats.ulow - avg,
            }))
        }
        _ => None,
    };

    run.write_snapshots_csv(out.writer("snapshots.csv")?).map_err(Failure::numerical)?;
    out.json(
        "tail.json",
        &json!({ "h0": h0_name, "boundary": boundary, "statistics": stats, "gaussian_comparison": gaussian }),
    )?;
    if a.common.gnuplot {
        let times: Vec<f64> = run.snapshots.iter().map(|(t, _)| *t).collect();
        out.text("plot.gp", &snapshots_plot(&times, s.grid.dim()))?;
    }
    println!(
        "ubar = {}, ulow = {}, spread = {:e} / {:e}",
        stats.ubar, stats.ulow, stats.spread_upper, stats.spread_lower
    );
    if let Some(g) = &gaussian {
        println!("gaussian average = {}", g["average"]);
    }
    Ok(())
}

/// Symmetric square root of a PSD matrix: √A = (A + √det·I)/√(tr + 2√det) in 2D.
fn sqrt_psd(a: &SymMat, dim: usize) -> Sigma {
    if dim == 1 {
        return Sigma::scalar(a.get(0, 0).max(0.0).sqrt());
    }
    let det = (a.get(0, 0) * a.get(1, 1) - a.get(0, 1) * a.get(0, 1)).max(0.0);
    let s = det.sqrt();
    let t = (a.trace() + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return Sigma::new(2, 2, [[0.0; 2]; 2]);
    }
    Sigma::new(2, 2, [[(a.get(0, 0) + s) / t, a.get(0, 1) / t], [a.get(0, 1) / t, (a.get(1, 1) + s) / t]])
}

/// Supplies σ = √a for models specified through their diffusion only.
struct WithSigma<'a>(&'a dyn CoefficientModel);

impl CoefficientModel for WithSigma<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn diffusion(&self, x: &Vec2, alpha: usize) -> SymMat {
        self.0.diffusion(x, alpha)
    }
    fn drift(&self, x: &Vec2, alpha: usize) -> Vec2 {
        self.0.drift(x, alpha)
    }
    fn zeroth_order(&self, x: &Vec2, alpha: usize) -> f64 {
        self.0.zeroth_order(x, alpha)
    }
    fn running_cost(&self, x: &Vec2, alpha: usize) -> f64 {
        self.0.running_cost(x, alpha)
    }
    fn sigma(&self, x: &Vec2, alpha: usize) -> Option<Sigma> {
        self.0.sigma(x, alpha).or_else(|| Some(sqrt_psd(&self.0.diffusion(x, alpha), self.0.dim())))
    }
}

pub fn oracle(a: &OracleArgs, s: &Setup, out: &OutDir) -> Result<(), Failure> {
    require_preset(s, "the Monte Carlo oracle")?;
    if s.problem.mode.is_pucci() {
        return Err(Failure::Config("the Monte Carlo oracle follows the control-0 diffusion and has no Pucci mode".into()));
    }
    let dim = s.grid.dim();
    let x0 = match &a.x {
        Some(x) => coords(x, dim, "x")?,
        None => [0.0; 2],
    };
    let model = WithSigma(&s.preset.model);
    let est = mc_discounted_value(&model, &x0, a.delta, a.paths, a.mc_dt, a.common.seed).map_err(|e| match e {
        Error::InvalidParameter(_) | Error::MissingParameter { .. } => Failure::config(e),
        e => Failure::numerical(e),
    })?;
    out.json("oracle.json", &est)?;
    println!("estimate = {} +/- {} ({} paths, seed {})", est.estimate, est.stderr, est.n, est.seed);
    for w in &est.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_root_reproduces_matrix() {
        let a = SymMat::new2(2.0, 0.5, 1.0);
        let g = sqrt_psd(&a, 2).gram();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            assert!((g.get(i, j) - a.get(i, j)).abs() < 1e-14);
        }
        assert_eq!(sqrt_psd(&SymMat::scalar(4.0), 1).entries[0][0], 2.0);
        assert_eq!(sqrt_psd(&SymMat::zero(2), 2).gram(), SymMat::zero(2));
    }
}
