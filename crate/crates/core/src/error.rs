use std::fmt;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A single failed admissibility check on a parameter record.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamViolation {
    /// A named inequality does not hold.
    ConditionViolated {
        name: &'static str,
        inequality: &'static str,
        detail: String,
    },
    /// Some lattice pair would be assigned a connection probability above one.
    NonProbability { max_probability: f64 },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamViolation::ConditionViolated {
                name,
                inequality,
                detail,
            } => write!(f, "{name}: requires {inequality} ({detail})"),
            ParamViolation::NonProbability { max_probability } => write!(
                f,
                "non-probability: pair probabilities reach {max_probability} > 1"
            ),
        }
    }
}

fn join_violations(v: &[ParamViolation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model parameters: {}", join_violations(.0))]
    InvalidParams(Vec<ParamViolation>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no lattice point of spacing {eps} lies inside the domain")]
    EmptyGrid { eps: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fields or fibers live on different grids")]
    GridMismatch,

    #[error("naive sampling needs {pairs} pair draws, above the cap of {cap}")]
    SizeLimit { pairs: u128, cap: u128 },

    #[error(
        "growth bound violated at x={x:?}, y={y:?}, zeta={zeta:?}: V/(c|zeta|^p) = {ratio}"
    )]
    GrowthViolated {
        x: Vec<f64>,
        y: Vec<f64>,
        zeta: Vec<f64>,
        ratio: f64,
    },

    #[error("potential `{0}` is not quadratic; use the general solver")]
    NotQuadratic(String),

    #[error("solver hit the iteration cap ({iterations}) with gradient norm {gradient_norm}", iterations = .report.iterations, gradient_norm = .report.gradient_norm)]
    MaxIterations { report: Box<SolveReport> },

    #[error("energy evaluated to a non-finite value")]
    NonFiniteEnergy,

    #[error("line search stalled after {iterations} iterations (gradient norm {gradient_norm})")]
    LineSearchStalled {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("kernel |x-y|^-{kernel_exponent} is not integrable against a growth-{growth} potential in dimension {dim}")]
    NonIntegrable {
        kernel_exponent: f64,
        growth: f64,
        dim: usize,
    },

    #[error("quadrature did not reach rtol {rtol} (last relative change {change})")]
    NoConvergence { rtol: f64, change: f64 },

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::InvalidConfig(_)
                | Error::UnknownName { .. }
                | Error::DimensionMismatch { .. }
                | Error::EmptyGrid { .. }
        )
    }
}
