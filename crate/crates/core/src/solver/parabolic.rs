//! Explicit Euler marching of u_t + F_h(u) = 0 with tail statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::problem::ProblemSpec;
use crate::scheme::{discretize_with, BoundaryClosure, DiscreteOperator, DriftDifferencing};

/// Boundary treatment during the march.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParabolicBoundary {
    /// Boundary nodes keep the initial datum.
    InitialDatum,
    /// Boundary nodes follow a closure at every step.
    Closure { closure: BoundaryClosure },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Defaults to t_final / 4.
    pub tail_window: Option<f64>,
    /// Defaults to the origin and ±L/2 on each axis.
    pub probes: Option<Vec<usize>>,
    /// Number of stored snapshots besides t = 0.
    pub n_snapshots: usize,
    pub differencing: DriftDifferencing,
}

impl ParabolicConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self { dt, t_final, tail_window: None, probes: None, n_snapshots: 8, differencing: DriftDifferencing::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ParabolicRun {
    pub h0: ScalarField,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub tail_window: f64,
    pub snapshots: Vec<(f64, ScalarField)>,
    /// Per-node running sup/inf over the tail window.
    pub tail_max: ScalarField,
    pub tail_min: ScalarField,
    pub probes: Vec<usize>,
    pub ubar: f64,
    pub ulow: f64,
    /// Spread of the tail sup across probes.
    pub spread_upper: f64,
    /// Spread of the tail inf across probes.
    pub spread_lower: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailStatistics {
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub tail_window: f64,
    pub probes: Vec<Vec<f64>>,
    pub probe_upper: Vec<f64>,
    pub probe_lower: Vec<f64>,
    pub ubar: f64,
    pub ulow: f64,
    pub spread_upper: f64,
    pub spread_lower: f64,
}

impl ParabolicRun {
    pub fn tail_statistics(&self) -> TailStatistics {
        let grid = self.h0.grid();
        TailStatistics {
            dt: self.dt,
            t_final: self.t_final,
            steps: self.steps,
            tail_window: self.tail_window,
            probes: self.probes.iter().map(|&p| grid.coordinate(p)[..grid.dim()].to_vec()).collect(),
            probe_upper: self.probes.iter().map(|&p| self.tail_max.get(p)).collect(),
            probe_lower: self.probes.iter().map(|&p| self.tail_min.get(p)).collect(),
            ubar: self.ubar,
            ulow: self.ulow,
            spread_upper: self.spread_upper,
            spread_lower: self.spread_lower,
        }
    }

    /// Long-format CSV `t,x[,y],value` of every stored snapshot.
    pub fn write_snapshots_csv<W: Write>(&self, out: W) -> Result<()> {
        let grid = self.h0.grid();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t", "x"];
        if grid.dim() == 2 {
            header.push("y");
        }
        header.push("value");
        w.write_record(&header)?;
        for (t, field) in &self.snapshots {
            for i in 0..grid.node_count() {
                let x = grid.coordinate(i);
                let mut rec = vec![t.to_string(), x[0].to_string()];
                if grid.dim() == 2 {
                    rec.push(x[1].to_string());
                }
                rec.push(field.get(i).to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// The last stored snapshot (at t_final).
    pub fn final_field(&self) -> &ScalarField {
        &self.snapshots.last().expect("at least the initial snapshot").1
    }
}

fn default_probes(op: &DiscreteOperator) -> Vec<usize> {
    let g = op.grid();
    let half = 0.5 * g.halfwidth();
    let mut probes = vec![g.origin()];
    for axis in 0..g.dim() {
        for s in [-1.0, 1.0] {
            let mut x = [0.0; 2];
            x[axis] = s * half;
            let node = g.nearest_node(&x);
            if !probes.contains(&node) {
                probes.push(node);
            }
        }
    }
    probes
}

/// Marches `u_t + F_h(u) = 0` from `h0` to `t_final`.
pub fn march_parabolic(
    problem: &ProblemSpec,
    boundary: &ParabolicBoundary,
    h0: &ScalarField,
    config: &ParabolicConfig,
) -> Result<ParabolicRun> {
    h0.ensure_grid(problem.grid())?;
    let op = match boundary {
        ParabolicBoundary::InitialDatum => {
            discretize_with(problem, &BoundaryClosure::frozen(0.0), config.differencing)?.with_fixed_boundary(h0)?
        }
        ParabolicBoundary::Closure { closure } => discretize_with(problem, closure, config.differencing)?,
    };
    march_operator(&op, h0, config)
}

/// Marches with a prepared operator.
pub fn march_operator(op: &DiscreteOperator, h0: &ScalarField, config: &ParabolicConfig) -> Result<ParabolicRun> {
    let (dt, t_final) = (config.dt, config.t_final);
    if !(dt > 0.0) || !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("need dt > 0 and T_final > 0, got dt = {dt}, T = {t_final}")));
    }
    let bound = 1.0 / op.max_diagonal();
    if dt > bound {
        return Err(Error::CflViolation { dt, bound });
    }
    let tail_window = config.tail_window.unwrap_or(0.25 * t_final);
    if !(tail_window > 0.0) || tail_window > t_final {
        return Err(Error::InvalidParameter(format!("tail window must lie in (0, T_final], got {tail_window}")));
    }
    let probes = match &config.probes {
        Some(p) if p.is_empty() => return Err(Error::EmptySamples("probe nodes")),
        Some(p) => {
            if let Some(&bad) = p.iter().find(|&&i| i >= op.grid().node_count()) {
                return Err(Error::InvalidParameter(format!("probe node {bad} outside the grid")));
            }
            p.clone()
        }
        None => default_probes(op),
    };

    let grid = *op.grid();
    let steps = (t_final / dt).ceil() as usize;
    let dt = t_final / steps as f64;
    let tail_start = t_final - tail_window;
    let snapshot_every = (steps / config.n_snapshots.max(1)).max(1);

    let mut u = h0.values().to_vec();
    for &b in op.boundary() {
        u[b] = op.boundary_value(b, &u);
    }
    let mut snapshots = vec![(0.0, ScalarField::new(grid, u.clone())?)];
    let mut tail_max = vec![f64::NEG_INFINITY; u.len()];
    let mut tail_min = vec![f64::INFINITY; u.len()];
    let mut next = u.clone();
    let mut last_valid = (0.0, u.clone());

    let track = |u: &[f64], hi: &mut [f64], lo: &mut [f64]| {
        for ((v, a), b) in u.iter().zip(hi.iter_mut()).zip(lo.iter_mut()) {
            *a = a.max(*v);
            *b = b.min(*v);
        }
    };
    if tail_start <= 0.0 {
        track(&u, &mut tail_max, &mut tail_min);
    }

    for step in 1..=steps {
        let t = step as f64 * dt;
        for &i in op.interior() {
            next[i] = u[i] - dt * op.optimal_row(i, &u).0;
        }
        for &b in op.boundary() {
            next[b] = op.boundary_value(b, &next);
        }
        std::mem::swap(&mut u, &mut next);
        if u.iter().any(|v| !v.is_finite()) {
            let (t_valid, vals) = last_valid;
            return Err(Error::BlowUp { time: t, last_valid: Box::new((t_valid, ScalarField::new(grid, vals)?)) });
        }
        if t >= tail_start - 1e-12 * t_final {
            track(&u, &mut tail_max, &mut tail_min);
        }
        if step % snapshot_every == 0 || step == steps {
            last_valid = (t, u.clone());
            if step == steps || snapshots.len() < config.n_snapshots.max(1) {
                snapshots.push((t, ScalarField::new(grid, u.clone())?));
            }
        }
    }

    let upper: Vec<f64> = probes.iter().map(|&p| tail_max[p]).collect();
    let lower: Vec<f64> = probes.iter().map(|&p| tail_min[p]).collect();
    let max_of = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_of = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ParabolicRun {
        h0: h0.clone(),
        dt,
        t_final,
        steps,
        tail_window,
        snapshots,
        tail_max: ScalarField::new(grid, tail_max)?,
        tail_min: ScalarField::new(grid, tail_min)?,
        ubar: max_of(&upper),
        ulow: min_of(&lower),
        spread_upper: max_of(&upper) - min_of(&upper),
        spread_lower: max_of(&lower) - min_of(&lower),
        probes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ClosureModel, ControlSet};
    use crate::grid::Grid;
    use crate::linalg::SymMat;
    use crate::problem::OperatorMode;

    fn ou(n: usize) -> ProblemSpec {
        let g = Grid::new(1, 4.0, n).unwrap();
        let m = ClosureModel::new(1).with_diffusion(|_, _| SymMat::scalar(1.0)).with_drift(|x, _| [-x[0], 0.0]);
        ProblemSpec::from_model(&m, &g, &ControlSet::singleton(), OperatorMode::HjbInf, None).unwrap()
    }

    #[test]
    fn constants_are_steady() {
        let p = ou(41);
        let h0 = ScalarField::constant(*p.grid(), 3.0);
        let run = march_parabolic(&p, &ParabolicBoundary::InitialDatum, &h0, &ParabolicConfig::new(0.01, 2.0)).unwrap();
        assert_eq!(run.ubar, 3.0);
        assert_eq!(run.ulow, 3.0);
        assert!(run.final_field().values().iter().all(|v| *v == 3.0));
    }

    #[test]
    fn cfl_violation_rejected_up_front() {
        let p = ou(41);
        let h0 = ScalarField::constant(*p.grid(), 0.0);
        let r = march_parabolic(&p, &ParabolicBoundary::InitialDatum, &h0, &ParabolicConfig::new(0.1, 1.0));
        assert!(matches!(r, Err(Error::CflViolation { .. })));
    }

    #[test]
    fn sup_norm_does_not_grow() {
        let p = ou(41);
        let h0 = ScalarField::from_fn(*p.grid(), |x| (2.0 * x[0]).sin() * (-x[0] * x[0]).exp()).unwrap();
        let run = march_parabolic(&p, &ParabolicBoundary::InitialDatum, &h0, &ParabolicConfig::new(0.02, 3.0)).unwrap();
        for (_, s) in &run.snapshots {
            assert!(s.max_abs() <= h0.max_abs() + 1e-15);
        }
    }

    #[test]
    fn snapshot_csv_has_long_format() {
        let p = ou(5);
        let h0 = ScalarField::constant(*p.grid(), 1.0);
        let mut cfg = ParabolicConfig::new(0.1, 0.2);
        cfg.n_snapshots = 1;
        let run = march_parabolic(&p, &ParabolicBoundary::InitialDatum, &h0, &cfg).unwrap();
        let mut buf = Vec::new();
        run.write_snapshots_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,value\n0,-4,1\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 5);
    }
}
