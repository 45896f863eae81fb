//! Sampled verification of the structural Lyapunov conditions.
//!
//! Each condition has the form `LHS(x, α) ≤ RHS(|x|)`. At every sampled
//! radius the left side is maximized over the control sample and a fan of
//! directions, and the slack `RHS − max LHS` is recorded. Results are
//! sampled evidence on a finite ladder of radii, never a proof.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, ControlSet};
use crate::error::{Error, Result};
use crate::linalg::{dot, SymMat, Vec2};
use crate::operators::{optimize_controls, RadialProfile};
use crate::coefficients::LocalCoefficients;
use crate::problem::{OperatorMode, PucciParams};

pub const DEFAULT_DIRECTIONS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    #[serde(rename = "C4")]
    C4,
    #[serde(rename = "C4bis")]
    C4bis,
    #[serde(rename = "OU-form")]
    OuForm,
    #[serde(rename = "C5")]
    C5,
    #[serde(rename = "C6.5")]
    C6_5,
    #[serde(rename = "C4QL")]
    C4QL,
    #[serde(rename = "C10")]
    C10,
    #[serde(rename = "C10strong")]
    C10Strong,
    #[serde(rename = "C10ou")]
    C10Ou,
    #[serde(rename = "C10extrastrong")]
    C10ExtraStrong,
    #[serde(rename = "C10lessstrong")]
    C10LessStrong,
}

impl ConditionId {
    pub const ALL: [ConditionId; 11] = [
        ConditionId::C4,
        ConditionId::C4bis,
        ConditionId::OuForm,
        ConditionId::C5,
        ConditionId::C6_5,
        ConditionId::C4QL,
        ConditionId::C10,
        ConditionId::C10Strong,
        ConditionId::C10Ou,
        ConditionId::C10ExtraStrong,
        ConditionId::C10LessStrong,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionId::C4 => "C4",
            ConditionId::C4bis => "C4bis",
            ConditionId::OuForm => "OU-form",
            ConditionId::C5 => "C5",
            ConditionId::C6_5 => "C6.5",
            ConditionId::C4QL => "C4QL",
            ConditionId::C10 => "C10",
            ConditionId::C10Strong => "C10strong",
            ConditionId::C10Ou => "C10ou",
            ConditionId::C10ExtraStrong => "C10extrastrong",
            ConditionId::C10LessStrong => "C10lessstrong",
        }
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ConditionId::ALL
            .iter()
            .copied()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown condition `{s}`")))
    }
}

type DriftTerm = Arc<dyn Fn(&Vec2) -> Vec2 + Send + Sync>;
type ScalarTerm = Arc<dyn Fn(&Vec2) -> f64 + Send + Sync>;

/// User-supplied pieces for conditions stated on a decomposition of F
/// rather than on its coefficients.
#[derive(Clone, Default)]
pub struct Decomposition {
    /// (b̄, g, c̄) for C6.5.
    pub growth_split: Option<(DriftTerm, ScalarTerm, ScalarTerm)>,
    /// Pairs (b_i, g_i) for C10.
    pub pairs: Vec<(DriftTerm, ScalarTerm)>,
}

impl fmt::Debug for Decomposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Decomposition")
            .field("growth_split", &self.growth_split.is_some())
            .field("pairs", &self.pairs.len())
            .finish()
    }
}

impl Decomposition {
    pub fn with_growth_split(
        mut self,
        b_bar: impl Fn(&Vec2) -> Vec2 + Send + Sync + 'static,
        g: impl Fn(&Vec2) -> f64 + Send + Sync + 'static,
        c_bar: impl Fn(&Vec2) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.growth_split = Some((Arc::new(b_bar), Arc::new(g), Arc::new(c_bar)));
        self
    }

    pub fn with_pair(
        mut self,
        b: impl Fn(&Vec2) -> Vec2 + Send + Sync + 'static,
        g: impl Fn(&Vec2) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.pairs.push((Arc::new(b), Arc::new(g)));
        self
    }
}

/// Parameters referenced by the conditions. Unused fields are ignored.
#[derive(Clone, Debug)]
pub struct ConditionParams {
    pub lambda: Option<f64>,
    pub big_lambda: Option<f64>,
    /// M of C10strong and C10ou.
    pub m: Option<f64>,
    pub beta: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    /// Mean-reversion target of the OU form.
    pub mean: Option<Vec2>,
    /// |c| of C10extrastrong / C10lessstrong.
    pub c_abs: Option<f64>,
    /// ‖l‖∞ of C10extrastrong / C10lessstrong.
    pub l_inf: Option<f64>,
    /// Exponent k of the r^k/k profile paired with C10strong.
    pub k: Option<f64>,
    /// Radius R of the R^{−ρ} − r^{−ρ} profile.
    pub radius: Option<f64>,
    /// Tolerance for conditions stated as limits (C4bis, OU-form).
    pub tol: f64,
    pub directions: usize,
    pub decomposition: Decomposition,
}

impl Default for ConditionParams {
    fn default() -> Self {
        Self {
            lambda: None,
            big_lambda: None,
            m: None,
            beta: None,
            rho: None,
            gamma: None,
            mean: None,
            c_abs: None,
            l_inf: None,
            k: None,
            radius: None,
            tol: 1e-9,
            directions: DEFAULT_DIRECTIONS,
            decomposition: Decomposition::default(),
        }
    }
}

impl ConditionParams {
    pub fn with_pucci(mut self, p: PucciParams) -> Self {
        self.lambda = Some(p.lambda);
        self.big_lambda = Some(p.big_lambda);
        self
    }

    fn need(&self, value: Option<f64>, name: &'static str, id: ConditionId) -> Result<f64> {
        let v = value.ok_or_else(|| Error::MissingParameter { name, context: format!("condition {id}") })?;
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite for {id}")));
        }
        Ok(v)
    }

    fn ellipticity(&self, id: ConditionId) -> Result<PucciParams> {
        let l = self.need(self.lambda, "lambda", id)?;
        let big = self.need(self.big_lambda, "Lambda", id)?;
        PucciParams::new(l, big)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub holds: bool,
    #[serde(rename = "R0")]
    pub r0: Option<f64>,
    /// [radius, worst slack] pairs in increasing radius.
    pub margins: Vec<[f64; 2]>,
    pub params: BTreeMap<String, f64>,
    pub evidence: String,
}

/// The resolved inequality for one condition.
enum Inequality {
    /// Maximize over controls of an expression in the local coefficients.
    Coefficient {
        lhs: Box<dyn Fn(&Vec2, f64, &LocalCoefficients, Option<f64>) -> f64 + Send + Sync>,
        /// Use |σ|² in place of tr a when σ is available.
        wants_sigma: bool,
    },
    /// Maximize over user-supplied terms.
    User(Vec<Box<dyn Fn(&Vec2, f64) -> f64 + Send + Sync>>),
}

struct Resolved {
    lhs: Inequality,
    rhs: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    used: BTreeMap<String, f64>,
}

fn resolve(id: ConditionId, dim: usize, p: &ConditionParams) -> Result<Resolved> {
    let mut used = BTreeMap::new();
    let n = dim as f64;
    let tr_bx = move |x: &Vec2, _r: f64, c: &LocalCoefficients, _s: Option<f64>| c.a.trace() + dot(dim, &c.b, x);
    let coefficient = |f: Box<dyn Fn(&Vec2, f64, &LocalCoefficients, Option<f64>) -> f64 + Send + Sync>| {
        Inequality::Coefficient { lhs: f, wants_sigma: false }
    };
    let resolved = match id {
        ConditionId::C4 => Resolved {
            lhs: coefficient(Box::new(move |x, r, c, _| c.a.trace() + dot(dim, &c.b, x) - 0.5 * c.c0 * r * r)),
            rhs: Box::new(|_| 0.0),
            used,
        },
        ConditionId::C4bis => {
            let tol = p.tol;
            used.insert("tol".into(), tol);
            Resolved { lhs: coefficient(Box::new(tr_bx)), rhs: Box::new(move |_| -tol), used }
        }
        ConditionId::OuForm => {
            let gamma = p.need(p.gamma, "gamma", id)?;
            let mean = p.mean.unwrap_or([0.0, 0.0]);
            let tol = p.tol;
            used.insert("gamma".into(), gamma);
            used.insert("m_1".into(), mean[0]);
            if dim == 2 {
                used.insert("m_2".into(), mean[1]);
            }
            used.insert("tol".into(), tol);
            Resolved {
                lhs: coefficient(Box::new(move |x, r, c, _| {
                    let bt = [c.b[0] - gamma * (mean[0] - x[0]), c.b[1] - gamma * (mean[1] - x[1])];
                    dot(dim, &bt, x).abs() / (r * r)
                })),
                rhs: Box::new(move |_| tol),
                used,
            }
        }
        ConditionId::C5 => {
            let e = p.ellipticity(id)?;
            let k = e.lambda - (n - 1.0) * e.big_lambda;
            used.insert("lambda".into(), e.lambda);
            used.insert("Lambda".into(), e.big_lambda);
            Resolved {
                lhs: coefficient(Box::new(move |x, r, c, _| dot(dim, &c.b, x) - c.c0 * r * r * r.ln())),
                rhs: Box::new(move |_| k),
                used,
            }
        }
        ConditionId::C6_5 => {
            let e = p.ellipticity(id)?;
            let (b_bar, g, c_bar) = p.decomposition.growth_split.clone().ok_or(Error::MissingParameter {
                name: "decomposition (b_bar, g, c_bar)",
                context: "condition C6.5".into(),
            })?;
            used.insert("lambda".into(), e.lambda);
            used.insert("Lambda".into(), e.big_lambda);
            let k = e.lambda - (n - 1.0) * e.big_lambda;
            let term: Box<dyn Fn(&Vec2, f64) -> f64 + Send + Sync> =
                Box::new(move |x, r| dot(dim, &b_bar(x), x) + g(x) * r - c_bar(x) * r * r * r.ln());
            Resolved { lhs: Inequality::User(vec![term]), rhs: Box::new(move |_| k), used }
        }
        ConditionId::C10 => {
            let e = p.ellipticity(id)?;
            if p.decomposition.pairs.is_empty() {
                return Err(Error::MissingParameter { name: "decomposition pairs (b_i, g_i)", context: "condition C10".into() });
            }
            used.insert("lambda".into(), e.lambda);
            used.insert("Lambda".into(), e.big_lambda);
            let k = e.lambda - (n - 1.0) * e.big_lambda;
            let terms = p
                .decomposition
                .pairs
                .iter()
                .cloned()
                .map(|(b, g)| {
                    Box::new(move |x: &Vec2, r: f64| dot(dim, &b(x), x) + g(x) * r)
                        as Box<dyn Fn(&Vec2, f64) -> f64 + Send + Sync>
                })
                .collect();
            Resolved { lhs: Inequality::User(terms), rhs: Box::new(move |_| k), used }
        }
        ConditionId::C4QL => Resolved {
            lhs: Inequality::Coefficient {
                lhs: Box::new(move |x, r, c, sigma_sq| {
                    sigma_sq.unwrap_or_else(|| c.a.trace()) + dot(dim, &c.b, x) - 0.5 * c.c0 * r * r
                }),
                wants_sigma: true,
            },
            rhs: Box::new(|_| 0.0),
            used,
        },
        ConditionId::C10Strong => {
            let m = p.need(p.m, "M", id)?;
            used.insert("M".into(), m);
            Resolved { lhs: coefficient(Box::new(tr_bx)), rhs: Box::new(move |_| -m), used }
        }
        ConditionId::C10Ou => {
            let m = p.need(p.m, "M", id)?;
            let beta = p.need(p.beta, "beta", id)?;
            used.insert("M".into(), m);
            used.insert("beta".into(), beta);
            Resolved { lhs: coefficient(Box::new(tr_bx)), rhs: Box::new(move |r| -m * r.powf(2.0 - beta)), used }
        }
        ConditionId::C10ExtraStrong | ConditionId::C10LessStrong => {
            let rho = p.need(p.rho, "rho", id)?;
            if !(rho > 0.0) {
                return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
            }
            let c_abs = p.need(p.c_abs, "|c|", id)?;
            let l_inf = p.need(p.l_inf, "l_inf", id)?;
            used.insert("rho".into(), rho);
            used.insert("c_abs".into(), c_abs);
            used.insert("l_inf".into(), l_inf);
            let k = (2.0 * c_abs + l_inf) / rho;
            let shift = if id == ConditionId::C10LessStrong {
                let lambda = p.need(p.lambda, "lambda", id)?;
                used.insert("lambda".into(), lambda);
                lambda * (2.0 + rho)
            } else {
                0.0
            };
            Resolved {
                lhs: coefficient(Box::new(move |x, _r, c, _| c.a.trace() + dot(dim, &c.b, x) - shift)),
                rhs: Box::new(move |r| -k * r.powf(2.0 + rho)),
                used,
            }
        }
    };
    Ok(resolved)
}

/// Unit directions: ±1 in 1D, a uniform fan in 2D.
pub fn direction_fan(dim: usize, count: usize) -> Result<Vec<Vec2>> {
    if dim == 1 {
        return Ok(vec![[1.0, 0.0], [-1.0, 0.0]]);
    }
    if count == 0 {
        return Err(Error::EmptySamples("angular directions"));
    }
    Ok((0..count)
        .map(|k| {
            let (s, c) = (std::f64::consts::TAU * k as f64 / count as f64).sin_cos();
            [c, s]
        })
        .collect())
}

fn sorted_radii(radii: &[f64]) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(Error::EmptySamples("radial samples"));
    }
    if let Some(&r) = radii.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
        return Err(Error::NonPositiveRadius(r));
    }
    let mut r = radii.to_vec();
    r.sort_by(f64::total_cmp);
    r.dedup();
    Ok(r)
}

/// Smallest sampled radius from which every slack at larger radii is ≥ 0.
fn radius_of_validity(margins: &[[f64; 2]]) -> Option<f64> {
    let mut r0 = None;
    for m in margins.iter().rev() {
        if m[1] >= 0.0 {
            r0 = Some(m[0]);
        } else {
            break;
        }
    }
    r0
}

pub fn check_condition(
    id: ConditionId,
    model: &dyn CoefficientModel,
    controls: &ControlSet,
    params: &ConditionParams,
    radial_samples: &[f64],
) -> Result<ConditionReport> {
    let dim = model.dim();
    let radii = sorted_radii(radial_samples)?;
    if controls.is_empty() {
        return Err(Error::EmptySamples("control set"));
    }
    let dirs = direction_fan(dim, params.directions)?;
    let resolved = resolve(id, dim, params)?;
    let margins: Vec<[f64; 2]> = radii
        .par_iter()
        .map(|&r| {
            let mut worst = f64::NEG_INFINITY;
            for d in &dirs {
                let x = [r * d[0], r * d[1]];
                match &resolved.lhs {
                    Inequality::Coefficient { lhs, wants_sigma } => {
                        for alpha in controls.indices() {
                            let c = LocalCoefficients {
                                a: model.diffusion(&x, alpha),
                                b: model.drift(&x, alpha),
                                c0: model.zeroth_order(&x, alpha),
                                l: model.running_cost(&x, alpha),
                            };
                            let s = if *wants_sigma { model.sigma(&x, alpha).map(|s| s.frobenius_sq()) } else { None };
                            worst = worst.max(lhs(&x, r, &c, s));
                        }
                    }
                    Inequality::User(terms) => {
                        for t in terms {
                            worst = worst.max(t(&x, r));
                        }
                    }
                }
            }
            [r, (resolved.rhs)(r) - worst]
        })
        .collect();
    let r0 = radius_of_validity(&margins);
    let mut used = resolved.used;
    if dim == 2 {
        used.insert("directions".into(), dirs.len() as f64);
    }
    Ok(ConditionReport {
        id,
        holds: r0.is_some(),
        r0,
        margins,
        params: used,
        evidence: "sampled".into(),
    })
}

/// The radial Lyapunov profile conventionally paired with a condition.
pub fn suggest_lyapunov(id: ConditionId, params: &ConditionParams) -> Result<RadialProfile> {
    match id {
        ConditionId::C4 | ConditionId::C4bis | ConditionId::C4QL => Ok(RadialProfile::Quadratic),
        ConditionId::C10Strong => Ok(match params.k {
            Some(k) if k > 0.0 => RadialProfile::Power { beta: k },
            Some(k) => return Err(Error::InvalidParameter(format!("profile exponent k must be positive, got {k}"))),
            None => RadialProfile::Quadratic,
        }),
        ConditionId::C5 | ConditionId::C6_5 | ConditionId::C10 => Ok(RadialProfile::Log),
        ConditionId::C10Ou => {
            let beta = params.need(params.beta, "beta", id)?;
            if !(beta > 0.0) {
                return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
            }
            Ok(RadialProfile::Power { beta })
        }
        ConditionId::C10ExtraStrong | ConditionId::C10LessStrong => {
            let rho = params.need(params.rho, "rho", id)?;
            let radius = params.need(params.radius, "R", id)?;
            if !(rho > 0.0 && radius > 0.0) {
                return Err(Error::InvalidParameter("rho and R must be positive".into()));
            }
            Ok(RadialProfile::InversePower { rho, radius })
        }
        ConditionId::OuForm => Err(Error::Unsupported(
            "the OU form is a structural decomposition with no paired radial profile".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupersolutionReport {
    /// Minimum of G[w] over all samples.
    pub worst: f64,
    /// [radius, min over directions of G[w]].
    pub profile: Vec<[f64; 2]>,
}

/// Evaluates G[w] = opt_α{−tr(a D²w) − b·Dw + c0·w} (no running cost) for
/// w = Φ(|x|) at the sampled radii; the optimum is the mode's inf or sup and
/// Pucci modes use M∓(D²w).
pub fn verify_supersolution(
    profile: &RadialProfile,
    model: &dyn CoefficientModel,
    controls: &ControlSet,
    mode: OperatorMode,
    pucci: Option<&PucciParams>,
    radii: &[f64],
    directions: usize,
) -> Result<SupersolutionReport> {
    let dim = model.dim();
    let radii = sorted_radii(radii)?;
    let dirs = direction_fan(dim, directions)?;
    let mut out = Vec::with_capacity(radii.len());
    for &r in &radii {
        let mut worst = f64::INFINITY;
        for d in &dirs {
            let x = [r * d[0], r * d[1]];
            let (w, grad, hess): (f64, Vec2, SymMat) = profile.jet(dim, &x)?;
            let coeffs = controls.indices().map(|alpha| LocalCoefficients {
                a: model.diffusion(&x, alpha),
                b: model.drift(&x, alpha),
                c0: model.zeroth_order(&x, alpha),
                l: 0.0,
            });
            let (g, _) = optimize_controls(dim, mode, pucci, w, &grad, &hess, coeffs)?;
            worst = worst.min(g);
        }
        out.push([r, worst]);
    }
    Ok(SupersolutionReport { worst: out.iter().map(|m| m[1]).fold(f64::INFINITY, f64::min), profile: out })
}
