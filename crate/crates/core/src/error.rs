use std::fmt;

use thiserror::Error;

use crate::spectral::Regime;

/// A single failed model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveRate { name: &'static str, value: f64 },
    NegativeKilling(f64),
    AsymmetricKernel,
    SupportOutsideUnitInterval(f64),
    NotNormalized { total: f64 },
    MassMismatch { expected: f64, found: f64 },
    BadShapeParameter { name: &'static str, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveRate { name, value } => {
                write!(f, "non-positive rate: {name} = {value}")
            }
            Violation::NegativeKilling(k) => write!(f, "negative killing rate k = {k}"),
            Violation::AsymmetricKernel => {
                write!(f, "fragmentation kernel is not symmetric under v -> 1 - v")
            }
            Violation::SupportOutsideUnitInterval(v) => {
                write!(f, "kernel atom at {v} lies outside (0, 1)")
            }
            Violation::NotNormalized { total } => {
                write!(f, "kernel weights sum to {total}, expected 1")
            }
            Violation::MassMismatch { expected, found } => {
                write!(f, "first moment of rho is {found}, expected B = {expected}")
            }
            Violation::BadShapeParameter { name, value } => {
                write!(f, "invalid kernel parameter {name} = {value}")
            }
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", join(.0))]
    InvalidModel(Vec<Violation>),

    #[error("moment of order {order} diverges (threshold {threshold})")]
    DivergentMoment { order: f64, threshold: f64 },

    #[error("argument {value} outside the domain [{lower}, inf)")]
    OutOfDomain { value: f64, lower: f64 },

    #[error("operation requires regime {expected}, model is in regime {found:?}")]
    WrongRegime { expected: &'static str, found: Regime },

    #[error("model is not supercritical (B = {b}, k = {k})")]
    NotSupercritical { b: f64, k: f64 },

    #[error("leading eigenvalue {0} is not positive")]
    NonpositiveLambda(f64),

    #[error("Laplace inversion contour hits a zero of the exponent near {0}")]
    ContourFailure(f64),

    #[error("solver self-check failed: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    ToleranceNotMet { estimate: f64, tolerance: f64 },

    #[error("initial function has sup norm {0} >= 1")]
    NormViolation(f64),

    #[error("root finding did not converge: {0}")]
    NoConvergence(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
