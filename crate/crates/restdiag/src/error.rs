use thiserror::Error;

/// Errors raised anywhere in the workbench.
///
/// Variants split into two groups: input/shape problems and failed
/// mathematical preconditions. The CLI maps the latter to exit code 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("operator has an identity tail and is not compact")]
    NonCompactTail,
    #[error("result tail is not representable: {0}")]
    Unrepresentable(String),
    #[error("not a projection: {0}")]
    NotProjection(String),
    #[error("not a decomposition of the identity: {0}")]
    NotDecomposition(String),
    #[error("not a Fredholm pair")]
    NotFredholmPair,
    #[error("projection tails differ")]
    TailMismatch,
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("partial isometries have different kernels")]
    KernelMismatch,
    #[error("total essential codimension is {0}, expected 0")]
    TotalCodimNonzero(i64),
    #[error("identity defect of the family is not compact")]
    NotCompactDefect,
    #[error("overlap between parts {0} and {1} is not finite rank")]
    OverlapNotFiniteRank(usize, usize),
    #[error("no split index reaches the norm margin within the truncation")]
    NoValidIndex,
    #[error("unitary does not diagonalize the operator (residual {0:e})")]
    NotDiagonalizing(f64),
    #[error("part {0} has nonzero essential codimension")]
    CodimNonzero(usize),
    #[error("series conditions fail: {0}")]
    ConditionsFail(String),
    #[error("vectors are not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
    #[error("value {0} outside the admissible range")]
    OutOfRange(f64),
    #[error("eigenvalue distinctness not reached after {0} rounds")]
    DistinctnessUnreachable(usize),
    #[error("ideal equals its square; no span witness exists")]
    SquareEqualsIdeal,
    #[error("coefficient {0} is zero")]
    ZeroCoefficient(usize),
    #[error("mismatch set has {0} elements, bound is {1}")]
    UnboundedMismatch(usize, usize),
    #[error("permutation support reaches {0}, beyond dimension {1}")]
    SupportExceedsDim(usize, usize),
    #[error("spectra differ: {0}")]
    SpectrumMismatch(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    /// True for failed mathematical preconditions, as opposed to malformed input.
    pub fn is_precondition(&self) -> bool {
        match self {
            Error::InvalidInput(_) | Error::DimMismatch(..) => false,
            Error::Stage { source, .. } => source.is_precondition(),
            _ => true,
        }
    }

    /// Innermost error with stage labels removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
