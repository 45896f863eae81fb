use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientModel, Coefficients, ControlSet};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Ellipticity constants 0 < λ ≤ Λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PucciParams {
    pub lambda: f64,
    pub big_lambda: f64,
}

impl PucciParams {
    pub fn new(lambda: f64, big_lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(big_lambda >= lambda) || !big_lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 < lambda <= Lambda, got lambda = {lambda}, Lambda = {big_lambda}"
            )));
        }
        Ok(Self { lambda, big_lambda })
    }
}

/// How the control family is combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorMode {
    /// inf over α of the affine operators.
    HjbInf,
    /// sup over α.
    HjbSup,
    /// M⁻(D²u) plus the inf over α of the first/zeroth-order part.
    PucciMinus,
    /// M⁺(D²u) plus the sup over α.
    PucciPlus,
}

impl OperatorMode {
    /// True when controls are combined with a minimum.
    pub fn minimizes(self) -> bool {
        matches!(self, OperatorMode::HjbInf | OperatorMode::PucciMinus)
    }

    pub fn is_pucci(self) -> bool {
        matches!(self, OperatorMode::PucciMinus | OperatorMode::PucciPlus)
    }

    /// The mode obtained by exchanging inf and sup.
    pub fn dual(self) -> Self {
        match self {
            OperatorMode::HjbInf => OperatorMode::HjbSup,
            OperatorMode::HjbSup => OperatorMode::HjbInf,
            OperatorMode::PucciMinus => OperatorMode::PucciPlus,
            OperatorMode::PucciPlus => OperatorMode::PucciMinus,
        }
    }
}

impl fmt::Display for OperatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorMode::HjbInf => "hjb-inf",
            OperatorMode::HjbSup => "hjb-sup",
            OperatorMode::PucciMinus => "pucci-minus",
            OperatorMode::PucciPlus => "pucci-plus",
        })
    }
}

impl FromStr for OperatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hjb-inf" | "inf" => Ok(OperatorMode::HjbInf),
            "hjb-sup" | "sup" => Ok(OperatorMode::HjbSup),
            "pucci-minus" => Ok(OperatorMode::PucciMinus),
            "pucci-plus" => Ok(OperatorMode::PucciPlus),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

/// A discretizable problem: tabulated coefficients plus the operator mode.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub coefficients: Coefficients,
    pub mode: OperatorMode,
    pub pucci: Option<PucciParams>,
}

impl ProblemSpec {
    pub fn new(coefficients: Coefficients, mode: OperatorMode, pucci: Option<PucciParams>) -> Result<Self> {
        if mode.is_pucci() {
            if pucci.is_none() {
                return Err(Error::MissingParameter { name: "lambda/Lambda", context: format!("mode {mode}") });
            }
            if coefficients.grid().dim() != 1 {
                return Err(Error::Unsupported(format!(
                    "mode {mode} requires dim = 1; the 5-point stencil has no mixed term for the eigenvalue formula"
                )));
            }
        }
        Ok(Self { coefficients, mode, pucci })
    }

    /// Tabulates `model` and builds the problem in one step.
    pub fn from_model(
        model: &dyn CoefficientModel,
        grid: &Grid,
        controls: &ControlSet,
        mode: OperatorMode,
        pucci: Option<PucciParams>,
    ) -> Result<Self> {
        Self::new(Coefficients::sample(model, grid, controls)?, mode, pucci)
    }

    pub fn grid(&self) -> &Grid {
        self.coefficients.grid()
    }

    pub fn with_cost_shift(&self, shift: f64) -> Self {
        Self { coefficients: self.coefficients.with_cost_shift(shift), ..self.clone() }
    }

    /// Exchanges inf/sup and negates l; the discrete solution maps to its negative.
    pub fn dual(&self) -> Self {
        Self {
            coefficients: self.coefficients.with_negated_cost(),
            mode: self.mode.dual(),
            pucci: self.pucci,
        }
    }
}
