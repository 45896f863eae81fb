//! Numerical toolkit for ergodic Hamilton–Jacobi–Bellman and Pucci-type
//! equations on ℝᴺ (N ≤ 2), truncated to a box.
//!
//! The pipeline is: tabulate coefficients on a [`Grid`], discretize with a
//! monotone scheme ([`scheme`]), solve discounted problems by policy iteration
//! ([`solver`]), and descend a discount ladder to the critical value and
//! corrector ([`ergodic`]). [`conditions`] checks the Lyapunov-type structural
//! assumptions on sampled radii, and [`oracle`] holds independent references.

pub mod coefficients;
pub mod conditions;
pub mod ergodic;
pub mod error;
pub mod field;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod presets;
pub mod problem;
pub mod scheme;
pub mod solver;

pub use coefficients::{ClosureModel, CoefficientModel, Coefficients, ControlSet, LocalCoefficients};
pub use conditions::{check_condition, suggest_lyapunov, verify_supersolution, ConditionId, ConditionParams, ConditionReport};
pub use ergodic::{growth_diagnostics, uniqueness_probe, vanishing_discount, ErgodicOptions, ErgodicResult, GrowthReport, LadderParams};
pub use error::{Error, Result};
pub use field::ScalarField;
pub use grid::Grid;
pub use linalg::{Sigma, SymMat, Vec2};
pub use operators::{hjb_hamiltonian, pucci_minus, pucci_plus, radial_hessian_eigs, RadialProfile};
pub use problem::{OperatorMode, ProblemSpec, PucciParams};
pub use scheme::{discretize, Anchor, BoundaryClosure, DiscreteOperator, DriftDifferencing};
pub use solver::{march_parabolic, solve_discounted, DiscountedSolve, ParabolicBoundary, ParabolicConfig, ParabolicRun};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
