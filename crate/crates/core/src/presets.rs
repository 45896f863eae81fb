//! Named problem presets and initial data used by the CLI and the tests.

use crate::coefficients::{ClosureModel, ControlSet};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::linalg::{Sigma, SymMat, Vec2};
use crate::problem::{OperatorMode, ProblemSpec, PucciParams};
use crate::scheme::{Anchor, BoundaryClosure};
use crate::solver::ParabolicBoundary;

pub const PRESET_NAMES: [&str; 6] = ["paper-example", "ou-1d", "ou-linear", "pucci-ou", "strong-drift", "constant-cost"];

pub const INITIAL_DATA: [&str; 5] = ["inverse-quadratic", "sin-gauss", "tanh", "cos-gauss", "constant:<k>"];

/// Linear OU parameters: drift γ(m − x), σ = sigma·I.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuParams {
    pub gamma: f64,
    pub mean: f64,
    pub sigma: f64,
}

impl OuParams {
    /// Variance of the invariant Gaussian, σ²/γ.
    pub fn invariant_variance(&self) -> f64 {
        self.sigma * self.sigma / self.gamma
    }
}

#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub dim: usize,
    pub model: ClosureModel,
    pub controls: ControlSet,
    pub mode: OperatorMode,
    pub pucci: Option<PucciParams>,
    pub halfwidth: f64,
    pub n_per_dim: usize,
    pub closure: BoundaryClosure,
    pub parabolic_boundary: ParabolicBoundary,
    pub h0: &'static str,
    pub ou: Option<OuParams>,
}

/// The explicit example cost 2(x⁴ + 2x² − 1)/(x² + 1)², as a function of |x|².
pub fn log_corrector_cost(r2: f64) -> f64 {
    2.0 * (r2 * r2 + 2.0 * r2 - 1.0) / ((r2 + 1.0) * (r2 + 1.0))
}

fn r2(dim: usize, x: &Vec2) -> f64 {
    crate::linalg::dot(dim, x, x)
}

fn barrier() -> BoundaryClosure {
    BoundaryClosure::QuadraticBarrier { h_bar: 0.05, anchor: Anchor::Centre }
}

impl Preset {
    pub fn by_name(name: &str, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        let linear_drift = move |x: &Vec2, _a: usize| [-x[0], if dim == 2 { -x[1] } else { 0.0 }];
        let unit = move |_: &Vec2, _: usize| SymMat::identity(dim);
        let base = ClosureModel::new(dim).with_diffusion(unit).with_drift(linear_drift);
        let p = match name {
            "paper-example" => Preset {
                name: "paper-example",
                description: "a = 1, b = -x, l = 2(x^4 + 2x^2 - 1)/(x^2 + 1)^2; c = 0 and chi = log(1 + x^2)",
                dim,
                model: base.with_running_cost(move |x, _| log_corrector_cost(r2(dim, x))),
                controls: ControlSet::singleton(),
                mode: OperatorMode::HjbInf,
                pucci: None,
                halfwidth: 6.0,
                n_per_dim: 481,
                closure: barrier(),
                parabolic_boundary: ParabolicBoundary::Closure { closure: barrier() },
                h0: "inverse-quadratic",
                ou: None,
            },
            "ou-1d" => Preset {
                name: "ou-1d",
                description: "a = 1, b = -x, c0 = 0, l = 0",
                dim,
                model: base,
                controls: ControlSet::singleton(),
                mode: OperatorMode::HjbInf,
                pucci: None,
                halfwidth: 6.0,
                n_per_dim: 241,
                closure: BoundaryClosure::frozen(0.0),
                parabolic_boundary: ParabolicBoundary::InitialDatum,
                h0: "inverse-quadratic",
                ou: Some(OuParams { gamma: 1.0, mean: 0.0, sigma: 1.0 }),
            },
            "ou-linear" => {
                let ou = OuParams { gamma: 1.0, mean: 0.0, sigma: 1.0 };
                let m = ClosureModel::new(dim)
                    .with_sigma(move |_, _| {
                        let mut s = Sigma::scalar(ou.sigma);
                        if dim == 2 {
                            s = Sigma::new(2, 2, [[ou.sigma, 0.0], [0.0, ou.sigma]]);
                        }
                        s
                    })
                    .with_drift(move |x, _| {
                        [ou.gamma * (ou.mean - x[0]), if dim == 2 { ou.gamma * (ou.mean - x[1]) } else { 0.0 }]
                    });
                Preset {
                    name: "ou-linear",
                    description: "linear OU: sigma = 1, b = gamma (m - x) with gamma = 1, m = 0, l = 0",
                    dim,
                    model: m,
                    controls: ControlSet::singleton(),
                    mode: OperatorMode::HjbInf,
                    pucci: None,
                    halfwidth: 8.0,
                    n_per_dim: 321,
                    closure: BoundaryClosure::frozen(0.0),
                    parabolic_boundary: ParabolicBoundary::InitialDatum,
                    h0: "inverse-quadratic",
                    ou: Some(ou),
                }
            }
            "pucci-ou" => Preset {
                name: "pucci-ou",
                description: "M-(u'') with lambda = 1, Lambda = 2, drift -x, l = 0",
                dim,
                model: base,
                controls: ControlSet::singleton(),
                mode: OperatorMode::PucciMinus,
                pucci: Some(PucciParams::new(1.0, 2.0)?),
                halfwidth: 6.0,
                n_per_dim: 241,
                closure: BoundaryClosure::frozen(0.0),
                parabolic_boundary: ParabolicBoundary::InitialDatum,
                h0: "sin-gauss",
                ou: None,
            },
            "strong-drift" => Preset {
                name: "strong-drift",
                description: "a = 1, b = -x^3, bounded l = cos(2|x|)",
                dim,
                model: ClosureModel::new(dim)
                    .with_diffusion(unit)
                    .with_drift(move |x, _| {
                        let s = r2(dim, x);
                        [-s * x[0], if dim == 2 { -s * x[1] } else { 0.0 }]
                    })
                    .with_running_cost(move |x, _| (2.0 * r2(dim, x).sqrt()).cos()),
                controls: ControlSet::singleton(),
                mode: OperatorMode::HjbInf,
                pucci: None,
                halfwidth: 4.0,
                n_per_dim: 321,
                closure: barrier(),
                parabolic_boundary: ParabolicBoundary::Closure { closure: barrier() },
                h0: "cos-gauss",
                ou: None,
            },
            "constant-cost" => Preset {
                name: "constant-cost",
                description: "a = 1, b = -x, l = 2; c = -2 and chi = 0",
                dim,
                model: base.with_running_cost(|_, _| 2.0),
                controls: ControlSet::singleton(),
                mode: OperatorMode::HjbInf,
                pucci: None,
                halfwidth: 4.0,
                n_per_dim: 161,
                closure: BoundaryClosure::Frozen { anchor: Anchor::Centre },
                parabolic_boundary: ParabolicBoundary::Closure { closure: BoundaryClosure::Frozen { anchor: Anchor::Centre } },
                h0: "constant:3",
                ou: None,
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset `{other}`; available: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(p)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.halfwidth, self.n_per_dim)
    }

    pub fn problem(&self, grid: &Grid) -> Result<ProblemSpec> {
        ProblemSpec::from_model(&self.model, grid, &self.controls, self.mode, self.pucci)
    }

    /// Default problem on the preset grid.
    pub fn default_problem(&self) -> Result<ProblemSpec> {
        self.problem(&self.grid()?)
    }
}

/// Initial datum by name; `constant:<k>` gives the constant k.
pub fn initial_datum(name: &str, grid: &Grid) -> Result<ScalarField> {
    let dim = grid.dim();
    let f: Box<dyn Fn(&Vec2) -> f64> = match name {
        "inverse-quadratic" => Box::new(move |x| 1.0 / (1.0 + r2(dim, x))),
        "sin-gauss" => Box::new(move |x| (3.0 * x[0]).sin() * (-r2(dim, x)).exp()),
        "tanh" => Box::new(|x| x[0].tanh()),
        "cos-gauss" => Box::new(move |x| (2.0 * x[0]).cos() * (-0.5 * r2(dim, x)).exp()),
        other => match other.strip_prefix("constant:") {
            Some(k) => {
                let k: f64 = k
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("bad constant in initial datum `{other}`")))?;
                Box::new(move |_| k)
            }
            None => {
                return Err(Error::InvalidParameter(format!(
                    "unknown initial datum `{other}`; available: {}",
                    INITIAL_DATA.join(", ")
                )))
            }
        },
    };
    ScalarField::from_fn(*grid, f)
}

/// Scalar version of a named initial datum in 1D, for quadrature.
pub fn initial_datum_1d(name: &str) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    Ok(match name {
        "inverse-quadratic" => Box::new(|y| 1.0 / (1.0 + y * y)),
        "sin-gauss" => Box::new(|y| (3.0 * y).sin() * (-y * y).exp()),
        "tanh" => Box::new(|y: f64| y.tanh()),
        "cos-gauss" => Box::new(|y| (2.0 * y).cos() * (-0.5 * y * y).exp()),
        other => match other.strip_prefix("constant:").and_then(|k| k.trim().parse::<f64>().ok()) {
            Some(k) => Box::new(move |_| k),
            None => return Err(Error::InvalidParameter(format!("unknown initial datum `{other}`"))),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_build() {
        for name in PRESET_NAMES {
            let p = Preset::by_name(name, 1).unwrap();
            let g = Grid::new(1, p.halfwidth, 21).unwrap();
            p.problem(&g).unwrap();
            initial_datum(p.h0, &g).unwrap();
        }
        assert!(Preset::by_name("nope", 1).is_err());
        assert!(Preset::by_name("pucci-ou", 2).unwrap().problem(&Grid::new(2, 1.0, 5).unwrap()).is_err());
    }

    #[test]
    fn log_corrector_cost_at_origin() {
        assert_eq!(log_corrector_cost(0.0), -2.0);
        let p = Preset::by_name("paper-example", 1).unwrap().default_problem().unwrap();
        assert_eq!(p.coefficients.at(p.grid().origin(), 0).l, -2.0);
    }

    #[test]
    fn initial_data_parse() {
        let g = Grid::new(1, 1.0, 3).unwrap();
        assert_eq!(initial_datum("constant:3", &g).unwrap().values(), &[3.0, 3.0, 3.0]);
        assert!(initial_datum("constant:x", &g).is_err());
        assert!(initial_datum_1d("tanh").is_ok());
    }
}
