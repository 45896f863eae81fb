//! Pointwise Pucci extremal operators, HJB Hamiltonians and the radial
//! Hessian calculus used to build Lyapunov functions.

use std::fmt;
use std::sync::Arc;

use crate::coefficients::{CoefficientModel, Coefficients, ControlSet, LocalCoefficients};
use crate::error::{Error, Result};
use crate::linalg::{dot, SymMat, Vec2};
use crate::problem::{OperatorMode, PucciParams};

fn signed_eigen_sums(x: &SymMat) -> (f64, f64) {
    let e = x.eigenvalues();
    let mut pos = 0.0;
    let mut neg = 0.0;
    for &v in &e[..x.dim] {
        if v > 0.0 {
            pos += v;
        } else {
            neg += v;
        }
    }
    (pos, neg)
}

/// M⁻(X) = −Λ Σ_{e>0} e − λ Σ_{e<0} e.
pub fn pucci_minus(x: &SymMat, params: &PucciParams) -> f64 {
    let (pos, neg) = signed_eigen_sums(x);
    -params.big_lambda * pos - params.lambda * neg
}

/// M⁺(X) = −λ Σ_{e>0} e − Λ Σ_{e<0} e.
pub fn pucci_plus(x: &SymMat, params: &PucciParams) -> f64 {
    let (pos, neg) = signed_eigen_sums(x);
    -params.lambda * pos - params.big_lambda * neg
}

/// Row-major variant that rejects non-symmetric input.
pub fn pucci_minus_rows(dim: usize, rows: [[f64; 2]; 2], params: &PucciParams) -> Result<f64> {
    Ok(pucci_minus(&SymMat::from_rows(dim, rows)?, params))
}

pub fn pucci_plus_rows(dim: usize, rows: [[f64; 2]; 2], params: &PucciParams) -> Result<f64> {
    Ok(pucci_plus(&SymMat::from_rows(dim, rows)?, params))
}

/// Optimizes −tr(aX) − b·p + c0·t − l over the given controls.
///
/// In Pucci modes the second-order term is M∓(X) and `a` is ignored.
/// Ties go to the lowest control index.
pub fn optimize_controls(
    dim: usize,
    mode: OperatorMode,
    pucci: Option<&PucciParams>,
    t: f64,
    p: &Vec2,
    x: &SymMat,
    controls: impl IntoIterator<Item = LocalCoefficients>,
) -> Result<(f64, usize)> {
    let second_order = match mode {
        OperatorMode::PucciMinus | OperatorMode::PucciPlus => {
            let params = pucci.ok_or(Error::MissingParameter {
                name: "lambda/Lambda",
                context: format!("mode {mode}"),
            })?;
            Some(if mode == OperatorMode::PucciMinus {
                pucci_minus(x, params)
            } else {
                pucci_plus(x, params)
            })
        }
        _ => None,
    };
    let minimize = mode.minimizes();
    let mut best: Option<(f64, usize)> = None;
    for (alpha, c) in controls.into_iter().enumerate() {
        let diffusion = second_order.unwrap_or_else(|| -c.a.trace_product(x));
        let value = diffusion - dot(dim, &c.b, p) + c.c0 * t - c.l;
        let better = match best {
            None => true,
            Some((v, _)) => {
                if minimize {
                    value < v
                } else {
                    value > v
                }
            }
        };
        if better {
            best = Some((value, alpha));
        }
    }
    best.ok_or(Error::EmptySamples("control set"))
}

/// F(x, t, p, X) at a tabulated node, with the optimizing control.
pub fn hjb_hamiltonian(
    coefficients: &Coefficients,
    node: usize,
    t: f64,
    p: &Vec2,
    x: &SymMat,
    mode: OperatorMode,
    pucci: Option<&PucciParams>,
) -> Result<(f64, usize)> {
    let dim = coefficients.grid().dim();
    if x.dim != dim {
        return Err(Error::GridMismatch(format!("matrix order {} on a {dim}-D grid", x.dim)));
    }
    optimize_controls(
        dim,
        mode,
        pucci,
        t,
        p,
        x,
        (0..coefficients.n_controls()).map(|a| coefficients.at(node, a)),
    )
}

/// Same as [`hjb_hamiltonian`] but evaluating the closures at an arbitrary point.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_at(
    model: &dyn CoefficientModel,
    controls: &ControlSet,
    point: &Vec2,
    t: f64,
    p: &Vec2,
    x: &SymMat,
    mode: OperatorMode,
    pucci: Option<&PucciParams>,
) -> Result<(f64, usize)> {
    let dim = model.dim();
    optimize_controls(
        dim,
        mode,
        pucci,
        t,
        p,
        x,
        controls.indices().map(|a| LocalCoefficients {
            a: model.diffusion(point, a),
            b: model.drift(point, a),
            c0: model.zeroth_order(point, a),
            l: model.running_cost(point, a),
        }),
    )
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A radial profile Φ with analytic first and second derivatives,
/// generating w(x) = Φ(|x|).
#[derive(Clone)]
pub enum RadialProfile {
    /// Φ(r) = r²/2.
    Quadratic,
    /// Φ(r) = log r.
    Log,
    /// Φ(r) = r^β / β.
    Power { beta: f64 },
    /// Φ(r) = R^{−ρ} − r^{−ρ}.
    InversePower { rho: f64, radius: f64 },
    Custom { phi: RadialFn, dphi: RadialFn, d2phi: RadialFn },
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialProfile::Quadratic => write!(f, "Quadratic"),
            RadialProfile::Log => write!(f, "Log"),
            RadialProfile::Power { beta } => write!(f, "Power {{ beta: {beta} }}"),
            RadialProfile::InversePower { rho, radius } => {
                write!(f, "InversePower {{ rho: {rho}, radius: {radius} }}")
            }
            RadialProfile::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl RadialProfile {
    pub fn custom(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        RadialProfile::Custom { phi: Arc::new(phi), dphi: Arc::new(dphi), d2phi: Arc::new(d2phi) }
    }

    pub fn phi(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Quadratic => 0.5 * r * r,
            RadialProfile::Log => r.ln(),
            RadialProfile::Power { beta } => r.powf(*beta) / beta,
            RadialProfile::InversePower { rho, radius } => radius.powf(-rho) - r.powf(-rho),
            RadialProfile::Custom { phi, .. } => phi(r),
        }
    }

    pub fn dphi(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Quadratic => r,
            RadialProfile::Log => 1.0 / r,
            RadialProfile::Power { beta } => r.powf(beta - 1.0),
            RadialProfile::InversePower { rho, .. } => rho * r.powf(-rho - 1.0),
            RadialProfile::Custom { dphi, .. } => dphi(r),
        }
    }

    pub fn d2phi(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Quadratic => 1.0,
            RadialProfile::Log => -1.0 / (r * r),
            RadialProfile::Power { beta } => (beta - 1.0) * r.powf(beta - 2.0),
            RadialProfile::InversePower { rho, .. } => -rho * (rho + 1.0) * r.powf(-rho - 2.0),
            RadialProfile::Custom { d2phi, .. } => d2phi(r),
        }
    }

    /// Value, gradient and Hessian of w(x) = Φ(|x|) at x ≠ 0.
    pub fn jet(&self, dim: usize, x: &Vec2) -> Result<(f64, Vec2, SymMat)> {
        let r = crate::linalg::norm(dim, x);
        let eigs = radial_hessian_eigs(self, r, dim)?;
        let unit = [x[0] / r, if dim == 2 { x[1] / r } else { 0.0 }];
        let d1 = self.dphi(r);
        let grad = [d1 * unit[0], d1 * unit[1]];
        // Φ″ x̂x̂ᵀ + (Φ′/r)(I − x̂x̂ᵀ)
        let radial = SymMat::outer(dim, &unit);
        let hess = radial
            .scale(eigs.simple)
            .add(&SymMat::identity(dim).add(&radial.scale(-1.0)).scale(eigs.repeated));
        Ok((self.phi(r), grad, hess))
    }
}

/// Eigenvalues of D²Φ(|x|) at |x| = r: Φ″(r) (simple) and Φ′(r)/r with
/// multiplicity N − 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialEigenvalues {
    pub simple: f64,
    pub repeated: f64,
    pub multiplicity: usize,
}

pub fn radial_hessian_eigs(profile: &RadialProfile, r: f64, dim: usize) -> Result<RadialEigenvalues> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    let simple = profile.d2phi(r);
    let repeated = profile.dphi(r) / r;
    if !simple.is_finite() || !repeated.is_finite() {
        return Err(Error::InvalidParameter(format!("profile derivatives not finite at r = {r}")));
    }
    Ok(RadialEigenvalues { simple, repeated, multiplicity: dim.saturating_sub(1) })
}

/// Diagonal matrix carrying the radial eigenvalues, for feeding to the Pucci operators.
pub fn radial_eigen_matrix(eigs: &RadialEigenvalues, dim: usize) -> SymMat {
    SymMat::diagonal(dim, eigs.simple, eigs.repeated)
}
