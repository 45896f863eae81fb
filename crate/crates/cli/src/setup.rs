//! Resolution of the shared flags into a validated problem.
//!
//! Everything here runs before any compute; every error is a configuration
//! error (exit code 2).

use std::fs::File;

use hjb_core::presets::Preset;
use hjb_core::scheme::{discretize_with, DiscreteOperator};
use hjb_core::solver::{InnerSolver, SolveOptions};
use hjb_core::{Anchor, BoundaryClosure, Coefficients, ControlSet, DriftDifferencing, Grid, ProblemSpec, PucciParams, Vec2};
use serde_json::json;

use crate::args::{ClosureKind, CommonArgs, Differencing, Inner, SolverArgs};
use crate::Failure;

pub struct Setup {
    pub preset: Preset,
    /// False when the coefficients came from a CSV table.
    pub from_preset: bool,
    pub grid: Grid,
    pub problem: ProblemSpec,
    pub closure: BoundaryClosure,
    pub differencing: DriftDifferencing,
}

impl Setup {
    pub fn operator(&self) -> Result<DiscreteOperator, Failure> {
        discretize_with(&self.problem, &self.closure, self.differencing).map_err(Failure::config)
    }

    /// Summary of the resolved problem for the manifest.
    pub fn describe(&self) -> serde_json::Value {
        json!({
            "preset": self.preset.name,
            "coefficients": if self.from_preset { "preset closures" } else { "csv table" },
            "dim": self.grid.dim(),
            "halfwidth": self.grid.halfwidth(),
            "n_per_dim": self.grid.n_per_dim(),
            "spacing": self.grid.spacing(),
            "controls": self.problem.coefficients.n_controls(),
            "mode": self.problem.mode.to_string(),
            "pucci": self.problem.pucci,
            "closure": self.closure,
            "differencing": self.differencing,
        })
    }

    /// Nearest grid node to a point given by its coordinates.
    pub fn node_at(&self, coords: &[f64], flag: &str) -> Result<usize, Failure> {
        let dim = self.grid.dim();
        if coords.len() != dim {
            return Err(Failure::Config(format!("--{flag} needs {dim} coordinate(s), got {}", coords.len())));
        }
        let mut x: Vec2 = [0.0; 2];
        for (k, &c) in coords.iter().enumerate() {
            if !c.is_finite() || c.abs() > self.grid.halfwidth() {
                return Err(Failure::Config(format!("--{flag} coordinate {c} lies outside the box")));
            }
            x[k] = c;
        }
        Ok(self.grid.nearest_node(&x))
    }
}

fn parse_anchor(s: &str) -> Result<Anchor, Failure> {
    match s.trim() {
        "centre" | "center" => Ok(Anchor::Centre),
        v => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .map(Anchor::Value)
            .ok_or_else(|| Failure::Config(format!("anchor must be `centre` or a number, got `{v}`"))),
    }
}

fn resolve_closure(args: &CommonArgs, preset: &BoundaryClosure) -> Result<BoundaryClosure, Failure> {
    let kind = args.closure.unwrap_or(match preset {
        BoundaryClosure::QuadraticBarrier { .. } => ClosureKind::Barrier,
        BoundaryClosure::Frozen { .. } => ClosureKind::Frozen,
    });
    let anchor = match &args.anchor {
        Some(s) => Some(parse_anchor(s)?),
        None => None,
    };
    let closure = match (kind, preset) {
        (ClosureKind::Barrier, BoundaryClosure::QuadraticBarrier { h_bar, anchor: a }) => {
            BoundaryClosure::QuadraticBarrier { h_bar: args.h_bar.unwrap_or(*h_bar), anchor: anchor.unwrap_or(*a) }
        }
        (ClosureKind::Barrier, _) => {
            BoundaryClosure::QuadraticBarrier { h_bar: args.h_bar.unwrap_or(0.05), anchor: anchor.unwrap_or(Anchor::Centre) }
        }
        (ClosureKind::Frozen, BoundaryClosure::Frozen { anchor: a }) => BoundaryClosure::Frozen { anchor: anchor.unwrap_or(*a) },
        (ClosureKind::Frozen, _) => BoundaryClosure::Frozen { anchor: anchor.unwrap_or(Anchor::Value(0.0)) },
    };
    if args.h_bar.is_some() && kind == ClosureKind::Frozen {
        return Err(Failure::Config("--h-bar only applies to the barrier closure".into()));
    }
    closure.validate().map_err(Failure::config)?;
    Ok(closure)
}

pub fn resolve(args: &CommonArgs) -> Result<Setup, Failure> {
    if args.threads == 0 {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    let preset = Preset::by_name(&args.preset, args.dim).map_err(Failure::config)?;
    let grid = Grid::new(
        args.dim,
        args.grid_l.unwrap_or(preset.halfwidth),
        args.grid_n.unwrap_or(preset.n_per_dim),
    )
    .map_err(Failure::config)?;
    let mode = args.mode.unwrap_or(preset.mode);
    let pucci = match (args.lambda, args.big_lambda, preset.pucci) {
        (None, None, p) => p,
        (l, big, p) => {
            let l = l.or(p.map(|p| p.lambda)).unwrap_or(1.0);
            let big = big.or(p.map(|p| p.big_lambda)).unwrap_or(l);
            Some(PucciParams::new(l, big).map_err(Failure::config)?)
        }
    };
    let problem = match &args.coefficients {
        None => ProblemSpec::from_model(&preset.model, &grid, &preset.controls, mode, pucci),
        Some(path) => {
            let controls = ControlSet::new(args.controls, format!("{} controls from {}", args.controls, path.display()))
                .map_err(Failure::config)?;
            let file = File::open(path)
                .map_err(|e| Failure::Config(format!("cannot open coefficient table {}: {e}", path.display())))?;
            Coefficients::from_csv(file, &grid, &controls).and_then(|c| ProblemSpec::new(c, mode, pucci))
        }
    }
    .map_err(Failure::config)?;
    let closure = resolve_closure(args, &preset.closure)?;
    let differencing = match args.differencing {
        Differencing::Hybrid => DriftDifferencing::Hybrid,
        Differencing::Upwind => DriftDifferencing::Upwind,
    };
    Ok(Setup { from_preset: args.coefficients.is_none(), preset, grid, problem, closure, differencing })
}

pub fn solve_options(args: &SolverArgs) -> Result<SolveOptions, Failure> {
    if !(args.tol > 0.0) || args.max_iter == 0 {
        return Err(Failure::Config(format!("need --tol > 0 and --max-iter >= 1, got {} and {}", args.tol, args.max_iter)));
    }
    let inner = match args.inner {
        Inner::Direct => InnerSolver::Direct,
        Inner::GaussSeidel => {
            if !(args.omega > 0.0 && args.omega < 2.0) {
                return Err(Failure::Config(format!("--omega must lie in (0, 2), got {}", args.omega)));
            }
            InnerSolver::GaussSeidel { omega: args.omega, max_sweeps: 1_000_000 }
        }
    };
    Ok(SolveOptions { tol: args.tol, max_iter: args.max_iter, inner, ..SolveOptions::default() })
}
