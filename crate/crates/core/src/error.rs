//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The prime must be an odd prime.
    NonOddPrime(u32),
    /// Denominator of a rational input is zero.
    ZeroDenominator,
    /// An exact digit-level answer needs more significant digits than the
    /// operands carry.
    InsufficientPrecision { needed: i64, available: i64 },
    /// The residue search certifying ellipticity found a primitive zero;
    /// the non-residue parameter is invalid.
    CertificationFailed(String),
    /// A declared tail majorant does not decay fast enough to bound the
    /// truncated part of a radial sum.
    TailNotControlled,
    /// Coset resolution too coarse for the integrand to be constant on
    /// cosets (or the enumeration would not be exact).
    CosetResolutionTooCoarse { needed: i64, got: i64 },
    /// Enumeration size exceeds the brute-force budget.
    EnumerationTooLarge(u128),
    /// Series evaluation hit the cancellation regime and cannot certify the
    /// requested accuracy.
    SeriesNotConverged,
    /// Operator exponent outside (0, alpha].
    GammaOutOfRange,
    /// Integrability condition for the hypersingular operator fails.
    DomainViolation(String),
    /// Adaptive quadrature exceeded its node budget.
    QuadratureBudgetExceeded,
    /// Successive approximations are not contracting on the chosen skeleton.
    IterationDiverged,
    /// A hypothesis of the variable-coefficient theory fails (parabolicity,
    /// exponent chain, growth class).
    HypothesisViolation(String),
    /// Rejection sampling exceeded its retry budget; indicates a broken
    /// shell profile.
    RejectionBudgetExceeded,
    /// Any other violated precondition.
    InvalidParameter(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonOddPrime(p) => write!(f, "{p} is not an odd prime"),
            Error::ZeroDenominator => write!(f, "zero denominator"),
            Error::InsufficientPrecision { needed, available } => write!(
                f,
                "insufficient precision: need digits to level {needed}, have {available}"
            ),
            Error::CertificationFailed(msg) => write!(f, "ellipticity certification failed: {msg}"),
            Error::TailNotControlled => write!(f, "tail majorant does not decay"),
            Error::CosetResolutionTooCoarse { needed, got } => {
                write!(f, "coset resolution too coarse: need k >= {needed}, got {got}")
            }
            Error::EnumerationTooLarge(n) => write!(f, "enumeration of {n} cosets exceeds budget"),
            Error::SeriesNotConverged => write!(f, "series did not reach its decay regime"),
            Error::GammaOutOfRange => write!(f, "gamma outside (0, alpha]"),
            Error::DomainViolation(msg) => write!(f, "operator domain violation: {msg}"),
            Error::QuadratureBudgetExceeded => write!(f, "quadrature node budget exceeded"),
            Error::IterationDiverged => write!(f, "successive approximations diverged"),
            Error::HypothesisViolation(msg) => write!(f, "hypothesis violated: {msg}"),
            Error::RejectionBudgetExceeded => write!(f, "rejection sampling budget exceeded"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
