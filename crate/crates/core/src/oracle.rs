//! Independent brute-force references: sampled Pucci extrema, Monte Carlo
//! discounted values, Gaussian quadrature and a dense direct solver.
//!
//! Nothing here calls into the scheme or solver modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::linalg::{SymMat, Vec2};
use crate::problem::PucciParams;

/// Seed and sample-count settings shared by the randomized oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub dt: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { seed: 0, n_samples: 10_000, dt: 1e-2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PucciSample {
    pub min_val: f64,
    pub max_val: f64,
}

/// Extremes of −tr(MX) over random admissible M = Q diag(d) Qᵀ with Q a
/// uniformly random rotation; d is uniform on [λ, Λ]^N for even samples and
/// a uniformly chosen vertex of that box for odd samples.
pub fn pucci_sampling(x: &SymMat, params: &PucciParams, n_samples: usize, seed: u64) -> PucciSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_val = f64::INFINITY;
    let mut max_val = f64::NEG_INFINITY;
    let draw = |rng: &mut ChaCha8Rng, vertex: bool| {
        if vertex {
            if rng.random_bool(0.5) {
                params.big_lambda
            } else {
                params.lambda
            }
        } else {
            rng.random_range(params.lambda..=params.big_lambda)
        }
    };
    for k in 0..n_samples.max(1) {
        // Odd samples put the spectrum on a vertex of [λ, Λ]^N, where the
        // extremes are attained.
        let vertex = k % 2 == 1;
        let d1 = draw(&mut rng, vertex);
        let m = if x.dim == 1 {
            SymMat::scalar(d1)
        } else {
            let d2 = draw(&mut rng, vertex);
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            SymMat::outer(2, &[c, s]).scale(d1).add(&SymMat::outer(2, &[-s, c]).scale(d2))
        };
        let v = -m.trace_product(x);
        min_val = min_val.min(v);
        max_val = max_val.max(v);
    }
    PucciSample { min_val, max_val }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
    /// Upper bound on the bias from truncating the horizon at 8/δ.
    pub truncation_bound: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

const MC_BATCH: usize = 256;

/// Monte Carlo estimate of E ∫₀^{8/δ} e^{−δt} l(X_t) dt for the control-0
/// dynamics dX = b dt + √2 σ dW, X₀ = x0 (Euler–Maruyama).
///
/// Batch `k` draws from a generator seeded with `seed + k`; batch sums are
/// reduced in index order, so the result does not depend on thread count.
pub fn mc_discounted_value(
    model: &dyn CoefficientModel,
    x0: &Vec2,
    delta: f64,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<McEstimate> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("discount must be positive, got {delta}")));
    }
    if !(dt > 0.0) || n_paths == 0 {
        return Err(Error::InvalidParameter("need dt > 0 and at least one path".into()));
    }
    if model.sigma(x0, 0).is_none() {
        return Err(Error::MissingParameter { name: "sigma", context: "Monte Carlo oracle".into() });
    }
    let dim = model.dim();
    let mut warnings = Vec::new();
    let stiffness = drift_lipschitz_estimate(model, x0);
    if dt * stiffness > 0.5 {
        warnings.push(format!(
            "dt * max|b'| = {:.3} exceeds 0.5; Euler-Maruyama may be inaccurate",
            dt * stiffness
        ));
    }
    let horizon = 8.0 / delta;
    let n_steps = (horizon / dt).ceil() as usize;
    let step_weight = (1.0 - (-delta * dt).exp()) / delta;
    let decay = (-delta * dt).exp();
    let sqrt_2dt = (2.0 * dt).sqrt();
    let n_batches = n_paths.div_ceil(MC_BATCH);

    let sums: Vec<(f64, f64)> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(batch as u64));
            let count = MC_BATCH.min(n_paths - batch * MC_BATCH);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let mut x = *x0;
                let mut disc = 1.0;
                let mut acc = 0.0;
                for _ in 0..n_steps {
                    acc += disc * step_weight * model.running_cost(&x, 0);
                    let b = model.drift(&x, 0);
                    let sigma = model.sigma(&x, 0).expect("sigma checked above");
                    let noise: Vec2 = [
                        rng.sample::<f64, _>(StandardNormal),
                        if sigma.cols > 1 { rng.sample::<f64, _>(StandardNormal) } else { 0.0 },
                    ];
                    let kick = sigma.apply(&noise);
                    for k in 0..dim {
                        x[k] += b[k] * dt + sqrt_2dt * kick[k];
                    }
                    disc *= decay;
                }
                s += acc;
                s2 += acc * acc;
            }
            (s, s2)
        })
        .collect();

    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = n_paths as f64;
    let mean = s / n;
    let var = if n_paths > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let l_bound = cost_bound(model, x0);
    Ok(McEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
        n: n_paths,
        seed,
        truncation_bound: (-8.0f64).exp() * l_bound / delta,
        warnings,
    })
}

fn sample_box(x0: &Vec2, dim: usize) -> Vec<Vec2> {
    let ticks: Vec<f64> = (0..=40).map(|i| -5.0 + 0.25 * i as f64).collect();
    let mut out = Vec::new();
    if dim == 1 {
        for &t in &ticks {
            out.push([x0[0] + t, 0.0]);
        }
    } else {
        for &t in &ticks {
            for &u in &ticks {
                out.push([x0[0] + t, x0[1] + u]);
            }
        }
    }
    out
}

fn drift_lipschitz_estimate(model: &dyn CoefficientModel, x0: &Vec2) -> f64 {
    let dim = model.dim();
    let h = 1e-5;
    sample_box(x0, dim)
        .iter()
        .map(|x| {
            (0..dim)
                .map(|k| {
                    let mut xp = *x;
                    let mut xm = *x;
                    xp[k] += h;
                    xm[k] -= h;
                    let (bp, bm) = (model.drift(&xp, 0), model.drift(&xm, 0));
                    (0..dim).map(|j| ((bp[j] - bm[j]) / (2.0 * h)).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn cost_bound(model: &dyn CoefficientModel, x0: &Vec2) -> f64 {
    sample_box(x0, model.dim())
        .iter()
        .map(|x| model.running_cost(x, 0).abs())
        .fold(0.0, f64::max)
}

/// ∫ h dμ for μ = N(mean, variance), by composite trapezoid on
/// [mean − 8√v, mean + 8√v], doubling the panel count until successive
/// values agree to 1e−10.
pub fn gaussian_average(h: impl Fn(f64) -> f64, mean: f64, variance: f64, n_quad: usize) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::InvalidParameter(format!("variance must be positive, got {variance}")));
    }
    let sd = variance.sqrt();
    let (a, b) = (mean - 8.0 * sd, mean + 8.0 * sd);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * variance).sqrt();
    let integrand = |y: f64| h(y) * norm * (-(y - mean) * (y - mean) / (2.0 * variance)).exp();
    let trapezoid = |n: usize| {
        let step = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| integrand(a + step * i as f64)).sum();
        step * (inner + 0.5 * (integrand(a) + integrand(b)))
    };
    let mut n = n_quad.max(2);
    let mut prev = trapezoid(n);
    for _ in 0..24 {
        n *= 2;
        let next = trapezoid(n);
        if (next - prev).abs() < 1e-10 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence { iterations: n, residual: f64::NAN })
}

/// Direct solve with partial pivoting for systems of at most 500 unknowns.
pub fn dense_solve(matrix: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if n == 0 || n > 500 {
        return Err(Error::InvalidParameter(format!("dense oracle supports 1..=500 unknowns, got {n}")));
    }
    if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("matrix shape does not match rhs".into()));
    }
    let a = nalgebra::DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    let lu = a.clone().lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
    let largest = pivots.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 || pivots.iter().any(|&p| p <= 1e-14 * largest) {
        return Err(Error::Singular);
    }
    let b = nalgebra::DVector::from_column_slice(rhs);
    let x = lu.solve(&b).ok_or(Error::Singular)?;
    Ok(x.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ClosureModel;
    use crate::linalg::Sigma;

    #[test]
    fn sampling_zero_matrix() {
        let p = PucciParams::new(1.0, 2.0).unwrap();
        let s = pucci_sampling(&SymMat::zero(2), &p, 100, 1);
        assert_eq!((s.min_val, s.max_val), (0.0, 0.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = PucciParams::new(0.5, 4.0).unwrap();
        let x = SymMat::new2(1.0, -2.0, 0.5);
        assert_eq!(pucci_sampling(&x, &p, 500, 42), pucci_sampling(&x, &p, 500, 42));
    }

    #[test]
    fn gaussian_average_basic_moments() {
        assert!((gaussian_average(|_| 3.0, 0.3, 2.0, 64).unwrap() - 3.0).abs() < 1e-10);
        assert!((gaussian_average(|y| y, 1.0, 0.5, 64).unwrap() - 1.0).abs() < 1e-10);
        assert!((gaussian_average(|y| y * y, 0.0, 1.0, 64).unwrap() - 1.0).abs() < 1e-10);
        assert!(gaussian_average(|y| y, 0.0, 0.0, 64).is_err());
    }

    #[test]
    fn gaussian_average_regression_constant() {
        // E[1/(1+Z^2)] for Z ~ N(0,1), frozen from this quadrature with step doubling.
        let v = gaussian_average(|y| 1.0 / (1.0 + y * y), 0.0, 1.0, 64).unwrap();
        assert!((v - 0.6556795424187985).abs() < 1e-9, "{v}");
    }

    #[test]
    fn gaussian_average_translation_invariant() {
        let h = |y: f64| (3.0 * y).sin() * (-y * y).exp() + 1.0 / (1.0 + y * y);
        for &s in &[-1.5, 0.3, 2.0] {
            let a = gaussian_average(h, 0.2, 0.7, 64).unwrap();
            let b = gaussian_average(|y| h(y - s), 0.2 + s, 0.7, 64).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_identity_and_two_by_two() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(dense_solve(&id, &[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        // [[2,1],[1,1]]^{-1} = [[1,-1],[-1,2]]
        let a = vec![vec![2.0, 1.0], vec![1.0, 1.0]];
        let x = dense_solve(&a, &[3.0, 5.0]).unwrap();
        assert!((x[0] - (-2.0)).abs() < 1e-14 && (x[1] - 7.0).abs() < 1e-14);
        assert!(matches!(dense_solve(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 1.0]), Err(Error::Singular)));
    }

    #[test]
    fn mc_constant_cost() {
        let m = ClosureModel::new(1)
            .with_sigma(|_, _| Sigma::scalar(1.0))
            .with_drift(|x, _| [-x[0], 0.0])
            .with_running_cost(|_, _| 2.0);
        let e = mc_discounted_value(&m, &[0.0, 0.0], 0.5, 64, 0.01, 3).unwrap();
        assert!((e.estimate - 4.0).abs() <= 3.0 * e.stderr + e.truncation_bound + 1e-9);
    }

    #[test]
    fn mc_frozen_path() {
        let m = ClosureModel::new(1)
            .with_sigma(|_, _| Sigma::scalar(0.0))
            .with_running_cost(|x, _| 1.0 + x[0] * x[0]);
        let e = mc_discounted_value(&m, &[1.5, 0.0], 0.25, 8, 0.05, 0).unwrap();
        let exact = (1.0 + 2.25) / 0.25;
        assert!((e.estimate - exact).abs() <= e.truncation_bound + 1e-9);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn mc_deterministic_ode_quadrature() {
        // X_t = x0 e^{-t}; ∫ e^{-δt} x0² e^{-2t} dt = x0² / (δ + 2).
        let m = ClosureModel::new(1)
            .with_sigma(|_, _| Sigma::scalar(0.0))
            .with_drift(|x, _| [-x[0], 0.0])
            .with_running_cost(|x, _| x[0] * x[0]);
        let e = mc_discounted_value(&m, &[2.0, 0.0], 0.5, 1, 1e-4, 0).unwrap();
        assert!((e.estimate - 4.0 / 2.5).abs() < 2e-3, "{}", e.estimate);
    }

    #[test]
    fn mc_requires_sigma() {
        let m = ClosureModel::new(1);
        assert!(matches!(
            mc_discounted_value(&m, &[0.0, 0.0], 0.2, 10, 0.01, 0),
            Err(Error::MissingParameter { .. })
        ));
    }

    #[test]
    fn mc_warns_on_stiff_drift() {
        let m = ClosureModel::new(1)
            .with_sigma(|_, _| Sigma::scalar(1.0))
            .with_drift(|x, _| [-100.0 * x[0], 0.0]);
        let e = mc_discounted_value(&m, &[0.0, 0.0], 1.0, 2, 0.01, 0).unwrap();
        assert!(!e.warnings.is_empty());
    }
}
