//! Control sets, coefficient closures and their tabulation on a grid.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{Sigma, SymMat, Vec2};

/// Finite sample of the control set, labelled `0..len`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    len: usize,
    pub description: String,
}

impl ControlSet {
    pub fn new(len: usize, description: impl Into<String>) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptySamples("control set"));
        }
        Ok(Self { len, description: description.into() })
    }

    pub fn singleton() -> Self {
        Self { len: 1, description: "single control".into() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        0..self.len
    }
}

/// Coefficients of `−tr(a D²u) − b·Du + c0 u − l` as functions of (x, α).
///
/// Points always carry zeros in unused coordinates.
pub trait CoefficientModel: Send + Sync {
    fn dim(&self) -> usize;
    fn diffusion(&self, x: &Vec2, alpha: usize) -> SymMat;
    fn drift(&self, x: &Vec2, alpha: usize) -> Vec2;
    fn zeroth_order(&self, _x: &Vec2, _alpha: usize) -> f64 {
        0.0
    }
    fn running_cost(&self, _x: &Vec2, _alpha: usize) -> f64 {
        0.0
    }
    fn sigma(&self, _x: &Vec2, _alpha: usize) -> Option<Sigma> {
        None
    }
}

type MatFn = Arc<dyn Fn(&Vec2, usize) -> SymMat + Send + Sync>;
type VecFn = Arc<dyn Fn(&Vec2, usize) -> Vec2 + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&Vec2, usize) -> f64 + Send + Sync>;
type SigmaFn = Arc<dyn Fn(&Vec2, usize) -> Sigma + Send + Sync>;

/// [`CoefficientModel`] assembled from closures.
///
/// Defaults: a = I, b = 0, c0 = 0, l = 0, no σ. Supplying σ without a
/// diffusion closure sets a = σσᵀ.
#[derive(Clone)]
pub struct ClosureModel {
    dim: usize,
    diffusion: MatFn,
    drift: VecFn,
    zeroth: ScalarFn,
    cost: ScalarFn,
    sigma: Option<SigmaFn>,
}

impl std::fmt::Debug for ClosureModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureModel")
            .field("dim", &self.dim)
            .field("has_sigma", &self.sigma.is_some())
            .finish()
    }
}

impl ClosureModel {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            diffusion: Arc::new(move |_, _| SymMat::identity(dim)),
            drift: Arc::new(|_, _| [0.0, 0.0]),
            zeroth: Arc::new(|_, _| 0.0),
            cost: Arc::new(|_, _| 0.0),
            sigma: None,
        }
    }

    pub fn with_diffusion(mut self, f: impl Fn(&Vec2, usize) -> SymMat + Send + Sync + 'static) -> Self {
        self.diffusion = Arc::new(f);
        self
    }

    pub fn with_drift(mut self, f: impl Fn(&Vec2, usize) -> Vec2 + Send + Sync + 'static) -> Self {
        self.drift = Arc::new(f);
        self
    }

    pub fn with_zeroth_order(mut self, f: impl Fn(&Vec2, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.zeroth = Arc::new(f);
        self
    }

    pub fn with_running_cost(mut self, f: impl Fn(&Vec2, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.cost = Arc::new(f);
        self
    }

    /// Sets σ and replaces the diffusion with σσᵀ.
    pub fn with_sigma(mut self, f: impl Fn(&Vec2, usize) -> Sigma + Send + Sync + 'static) -> Self {
        let f: SigmaFn = Arc::new(f);
        let g = f.clone();
        self.diffusion = Arc::new(move |x, a| g(x, a).gram());
        self.sigma = Some(f);
        self
    }

    /// Adds `shift` to the running cost.
    pub fn shift_cost(mut self, shift: f64) -> Self {
        let cost = self.cost.clone();
        self.cost = Arc::new(move |x, a| cost(x, a) + shift);
        self
    }

    /// Negates the running cost.
    pub fn negate_cost(mut self) -> Self {
        let cost = self.cost.clone();
        self.cost = Arc::new(move |x, a| -cost(x, a));
        self
    }
}

impl CoefficientModel for ClosureModel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn diffusion(&self, x: &Vec2, alpha: usize) -> SymMat {
        (self.diffusion)(x, alpha)
    }
    fn drift(&self, x: &Vec2, alpha: usize) -> Vec2 {
        (self.drift)(x, alpha)
    }
    fn zeroth_order(&self, x: &Vec2, alpha: usize) -> f64 {
        (self.zeroth)(x, alpha)
    }
    fn running_cost(&self, x: &Vec2, alpha: usize) -> f64 {
        (self.cost)(x, alpha)
    }
    fn sigma(&self, x: &Vec2, alpha: usize) -> Option<Sigma> {
        self.sigma.as_ref().map(|s| s(x, alpha))
    }
}

/// Coefficients at one (node, α).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalCoefficients {
    pub a: SymMat,
    pub b: Vec2,
    pub c0: f64,
    pub l: f64,
}

/// Coefficient tables indexed by `node * n_controls + alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    grid: Grid,
    controls: ControlSet,
    a: Vec<SymMat>,
    b: Vec<Vec2>,
    c0: Vec<f64>,
    l: Vec<f64>,
    sigma: Option<Vec<Sigma>>,
}

fn psd_ok(a: &SymMat) -> bool {
    a.min_eigenvalue() >= -1e-12 * (1.0 + a.max_abs())
}

impl Coefficients {
    /// Tabulates `model` at every (node, α), validating PSD diffusion and c0 ≥ 0.
    pub fn sample(model: &dyn CoefficientModel, grid: &Grid, controls: &ControlSet) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "model dimension {} vs grid dimension {}",
                model.dim(),
                grid.dim()
            )));
        }
        let k = controls.len();
        let total = grid.node_count() * k;
        let mut a = Vec::with_capacity(total);
        let mut b = Vec::with_capacity(total);
        let mut c0 = Vec::with_capacity(total);
        let mut l = Vec::with_capacity(total);
        let mut sigma: Option<Vec<Sigma>> = None;
        for node in 0..grid.node_count() {
            let x = grid.coordinate(node);
            for alpha in controls.indices() {
                let mut am = model.diffusion(&x, alpha);
                am.dim = grid.dim();
                if let Some(s) = model.sigma(&x, alpha) {
                    let gap = {
                        let g = s.gram();
                        (g.xx - am.xx).abs().max((g.xy - am.xy).abs()).max((g.yy - am.yy).abs())
                    };
                    if gap > 1e-10 {
                        return Err(Error::SigmaMismatch { node, alpha, gap });
                    }
                    sigma.get_or_insert_with(|| Vec::with_capacity(total)).push(s);
                }
                a.push(am);
                b.push(model.drift(&x, alpha));
                c0.push(model.zeroth_order(&x, alpha));
                l.push(model.running_cost(&x, alpha));
            }
        }
        if sigma.as_ref().is_some_and(|s| s.len() != total) {
            return Err(Error::InvalidParameter("sigma defined on only part of the grid".into()));
        }
        let out = Self { grid: *grid, controls: controls.clone(), a, b, c0, l, sigma };
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let k = self.controls.len();
        for (i, am) in self.a.iter().enumerate() {
            if !psd_ok(am) {
                return Err(Error::NotPsd { node: i / k, alpha: i % k, min_eig: am.min_eigenvalue() });
            }
        }
        for (i, &c) in self.c0.iter().enumerate() {
            if c < 0.0 {
                return Err(Error::NegativeZerothOrder { node: i / k, alpha: i % k, value: c });
            }
        }
        let finite = self
            .a
            .iter()
            .all(|m| m.xx.is_finite() && m.xy.is_finite() && m.yy.is_finite())
            && self.b.iter().all(|v| v[0].is_finite() && v[1].is_finite())
            && self.c0.iter().chain(self.l.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn at(&self, node: usize, alpha: usize) -> LocalCoefficients {
        let i = node * self.controls.len() + alpha;
        LocalCoefficients { a: self.a[i], b: self.b[i], c0: self.c0[i], l: self.l[i] }
    }

    pub fn sigma_at(&self, node: usize, alpha: usize) -> Option<Sigma> {
        self.sigma.as_ref().map(|s| s[node * self.controls.len() + alpha])
    }

    /// max |l| over all tabulated entries.
    pub fn cost_sup_norm(&self) -> f64 {
        self.l.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same tables with l replaced by l + shift.
    pub fn with_cost_shift(&self, shift: f64) -> Self {
        let mut out = self.clone();
        out.l.iter_mut().for_each(|v| *v += shift);
        out
    }

    /// Same tables with l replaced by −l.
    pub fn with_negated_cost(&self) -> Self {
        let mut out = self.clone();
        out.l.iter_mut().for_each(|v| *v = -*v);
        out
    }

    fn header(dim: usize) -> Vec<&'static str> {
        if dim == 1 {
            vec!["node_index", "alpha_index", "a_11", "b_1", "c0", "l"]
        } else {
            vec!["node_index", "alpha_index", "a_11", "a_12", "a_22", "b_1", "b_2", "c0", "l"]
        }
    }

    /// Reads tables from CSV with columns
    /// `node_index, alpha_index, a_11[, a_12, a_22], b_1[, b_2], c0, l`.
    ///
    /// Every (node, α) pair must appear exactly once.
    pub fn from_csv<R: Read>(reader: R, grid: &Grid, controls: &ControlSet) -> Result<Self> {
        let dim = grid.dim();
        let expected = Self::header(dim);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
        if header != expected {
            return Err(Error::InvalidParameter(format!(
                "coefficient CSV header {header:?}, expected {expected:?}"
            )));
        }
        let k = controls.len();
        let total = grid.node_count() * k;
        let mut a = vec![SymMat::zero(dim); total];
        let mut b = vec![[0.0; 2]; total];
        let mut c0 = vec![0.0; total];
        let mut l = vec![0.0; total];
        let mut seen = vec![false; total];
        for record in rdr.records() {
            let record = record?;
            let parse = |j: usize| -> Result<f64> {
                record[j]
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("column {}: {e}", expected[j])))
            };
            let node = record[0]
                .parse::<usize>()
                .map_err(|e| Error::InvalidParameter(format!("node_index: {e}")))?;
            let alpha = record[1]
                .parse::<usize>()
                .map_err(|e| Error::InvalidParameter(format!("alpha_index: {e}")))?;
            if node >= grid.node_count() || alpha >= k {
                return Err(Error::InvalidParameter(format!("entry ({node}, {alpha}) out of range")));
            }
            let i = node * k + alpha;
            if seen[i] {
                return Err(Error::InvalidParameter(format!("duplicate entry ({node}, {alpha})")));
            }
            seen[i] = true;
            if dim == 1 {
                a[i] = SymMat::scalar(parse(2)?);
                b[i] = [parse(3)?, 0.0];
                c0[i] = parse(4)?;
                l[i] = parse(5)?;
            } else {
                a[i] = SymMat::new2(parse(2)?, parse(3)?, parse(4)?);
                b[i] = [parse(5)?, parse(6)?];
                c0[i] = parse(7)?;
                l[i] = parse(8)?;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "missing entry ({}, {})",
                missing / k,
                missing % k
            )));
        }
        let out = Self { grid: *grid, controls: controls.clone(), a, b, c0, l, sigma: None };
        out.validate()?;
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.grid.dim()))?;
        let k = self.controls.len();
        for node in 0..self.grid.node_count() {
            for alpha in 0..k {
                let c = self.at(node, alpha);
                let mut row = vec![node.to_string(), alpha.to_string(), c.a.xx.to_string()];
                if self.grid.dim() == 2 {
                    row.push(c.a.xy.to_string());
                    row.push(c.a.yy.to_string());
                }
                row.push(c.b[0].to_string());
                if self.grid.dim() == 2 {
                    row.push(c.b[1].to_string());
                }
                row.push(c.c0.to_string());
                row.push(c.l.to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_corrector_cost(x: f64) -> f64 {
        let x2 = x * x;
        2.0 * (x2 * x2 + 2.0 * x2 - 1.0) / ((x2 + 1.0) * (x2 + 1.0))
    }

    #[test]
    fn constant_and_linear_tables() {
        let g = Grid::new(1, 1.0, 5).unwrap();
        let m = ClosureModel::new(1).with_drift(|x, _| [-x[0], 0.0]);
        let c = Coefficients::sample(&m, &g, &ControlSet::singleton()).unwrap();
        for node in 0..5 {
            let e = c.at(node, 0);
            assert_eq!(e.a.xx, 1.0);
            assert_eq!(e.b[0], -g.coordinate(node)[0]);
            assert_eq!(e.c0, 0.0);
            assert_eq!(e.l, 0.0);
        }
    }

    #[test]
    fn explicit_example_cost_at_origin() {
        let g = Grid::new(1, 6.0, 481).unwrap();
        let m = ClosureModel::new(1)
            .with_drift(|x, _| [-x[0], 0.0])
            .with_running_cost(|x, _| log_corrector_cost(x[0]));
        let c = Coefficients::sample(&m, &g, &ControlSet::singleton()).unwrap();
        assert_eq!(c.at(g.origin(), 0).l, -2.0);
    }

    #[test]
    fn indefinite_diffusion_rejected() {
        let g = Grid::new(2, 1.0, 3).unwrap();
        let m = ClosureModel::new(2).with_diffusion(|_, _| SymMat::diagonal(2, -1.0, 1.0));
        match Coefficients::sample(&m, &g, &ControlSet::singleton()) {
            Err(Error::NotPsd { node, alpha, .. }) => assert_eq!((node, alpha), (0, 0)),
            other => panic!("expected NotPsd, got {other:?}"),
        }
    }

    #[test]
    fn negative_zeroth_order_rejected() {
        let g = Grid::new(1, 1.0, 3).unwrap();
        let m = ClosureModel::new(1).with_zeroth_order(|x, _| x[0]);
        assert!(matches!(
            Coefficients::sample(&m, &g, &ControlSet::singleton()),
            Err(Error::NegativeZerothOrder { node: 0, .. })
        ));
    }

    #[test]
    fn resampling_is_bitwise_idempotent() {
        let g = Grid::new(2, 1.5, 9).unwrap();
        let m = ClosureModel::new(2)
            .with_sigma(|x, a| Sigma::new(2, 2, [[1.0 + x[0].sin(), 0.3 * a as f64], [x[1], 0.5]]))
            .with_drift(|x, a| [-(x[0]).powi(3), -x[1] * (1.0 + a as f64)])
            .with_running_cost(|x, _| x[0].cos());
        let controls = ControlSet::new(3, "three").unwrap();
        let c1 = Coefficients::sample(&m, &g, &controls).unwrap();
        let c2 = Coefficients::sample(&m, &g, &controls).unwrap();
        assert_eq!(c1, c2);
    }

    #[test]
    fn csv_round_trip() {
        let g = Grid::new(2, 1.0, 5).unwrap();
        let m = ClosureModel::new(2)
            .with_diffusion(|x, _| SymMat::new2(1.0 + x[0] * x[0], 0.25, 2.0))
            .with_drift(|x, a| [-x[0] + a as f64, -x[1]])
            .with_zeroth_order(|_, a| a as f64)
            .with_running_cost(|x, _| x[0] - x[1]);
        let controls = ControlSet::new(2, "two").unwrap();
        let c = Coefficients::sample(&m, &g, &controls).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = Coefficients::from_csv(buf.as_slice(), &g, &controls).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn csv_missing_entry_rejected() {
        let g = Grid::new(1, 1.0, 3).unwrap();
        let text = "node_index,alpha_index,a_11,b_1,c0,l\n0,0,1,0,0,0\n1,0,1,0,0,0\n";
        assert!(Coefficients::from_csv(text.as_bytes(), &g, &ControlSet::singleton()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn gram_of_any_sigma_passes_psd(
            s in proptest::array::uniform4(-10.0f64..10.0),
            x0 in -2.0f64..2.0,
        ) {
            let g = Grid::new(2, 2.0, 3).unwrap();
            let m = ClosureModel::new(2)
                .with_sigma(move |x, _| Sigma::new(2, 2, [[s[0] * (1.0 + x[0] * x0), s[1]], [s[2], s[3] * x[1]]]));
            proptest::prop_assert!(Coefficients::sample(&m, &g, &ControlSet::singleton()).is_ok());
        }
    }
}
