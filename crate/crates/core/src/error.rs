//! Error taxonomy shared by every module of the laboratory.
//!
//! Each variant names a *semantic* failure (what assumption broke), not the
//! call site; callers match on variants to decide between configuration
//! errors (bad input data) and numerical failures (algorithm exhausted).

use thiserror::Error;

/// Unified error type for the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    // ---- projective linear algebra ----
    /// A vector that must be nonzero was (numerically) zero.
    #[error("zero vector: norm {0:.3e} below representable threshold")]
    ZeroVector(f64),
    /// A matrix expected to have positive real spectrum does not.
    #[error("spectrum is not positive real: {0}")]
    NonPositiveSpectrum(String),
    /// Eigenvalue gaps fall in the gray zone where the Jordan type cannot
    /// be decided at the requested tolerance.
    #[error("numerically ambiguous classification: {0}")]
    NumericallyAmbiguous(String),
    /// Operation requires a hyperbolic (distinct positive spectrum) matrix.
    #[error("matrix is not hyperbolic: {0}")]
    NotHyperbolic(String),
    /// Determinant differs from 1 beyond the configured tolerance.
    #[error("matrix is not unimodular: |det - 1| = {defect:.3e} > {tol:.3e}")]
    NotUnimodular { defect: f64, tol: f64 },

    // ---- residue spectra ----
    /// The residue must be nonzero for this operation.
    #[error("zero residue: {0}")]
    ZeroResidue(String),
    /// A real triple does not arise as the spectrum of any residue.
    #[error("invalid eigenvalue spectrum: {0}")]
    InvalidSpectrum(String),

    // ---- model geometry ----
    /// Point lies outside the metric's domain of definition.
    #[error("domain error: {0}")]
    DomainError(String),
    /// Evaluation point z = 0 is excluded.
    #[error("zero point: evaluation at z = 0 is outside the punctured disk")]
    ZeroPoint,
    /// The cubic differential vanishes somewhere on the interpolation ring.
    #[error("cubic differential degenerates on the ring: min norm {0:.3e}")]
    ZeroOnRing(f64),
    /// Interpolation radii violate 0 < c < C < 1.
    #[error("bad radii: {0}")]
    BadRadii(String),
    /// Collar coordinate outside the plumbing collar.
    #[error("outside collar: {0}")]
    OutsideCollar(String),
    /// Neck parameter too large for the requested collar radius.
    #[error("neck too wide: {0}")]
    NeckTooWide(String),
    /// Laurent data malformed (order < -3, non-finite coefficients, ...).
    #[error("invalid cubic coefficient data: {0}")]
    InvalidCoefficients(String),

    // ---- Wang solver ----
    /// A grid field required by the operation has not been populated.
    #[error("unpopulated grid field: {0}")]
    UnpopulatedField(String),
    /// Barrier sign checks kept failing after the doubling budget.
    #[error("barrier construction failed after {doublings} doublings: {detail}")]
    BarrierFailure { doublings: u32, detail: String },
    /// Damped Newton exhausted its line search.
    #[error("Newton iteration diverged: {0}")]
    NewtonDivergence(String),
    /// Converged solution escaped the barrier bracket.
    #[error("solution violates the barrier bracket: {0}")]
    BracketsViolated(String),

    // ---- developing maps ----
    /// Requested integration step exceeds the supported maximum.
    #[error("step too large: {got:.3e} > {max:.3e}")]
    StepTooLarge { got: f64, max: f64 },
    /// Path or probe left the transport field's domain.
    #[error("field domain error: {0}")]
    FieldDomainError(String),
    /// Ray development did not satisfy the Cauchy tail criterion by y_max.
    #[error("no convergence by y_max = {y_max}: {detail}")]
    NoConvergenceByYmax { y_max: f64, detail: String },
    /// Developed limit contradicts the fixed-point prediction.
    #[error("inconsistent twist witness: {0}")]
    InconsistentWitness(String),

    // ---- asymptotic ODE module ----
    /// Perturbation tail mass does not shrink; L1 hypothesis violated.
    #[error("non-integrable perturbation: {0}")]
    NonIntegrablePerturbation(String),
    /// Successive approximation stopped contracting before convergence.
    #[error("fixed-point iteration stalled: {0}")]
    IterationStall(String),

    // ---- degeneration ----
    /// The pole-coefficient decay hypothesis fails for the family.
    #[error("decay hypothesis violated: {0}")]
    DecayHypothesisViolated(String),

    // ---- configuration / io ----
    /// Configuration file or parameter error.
    #[error("configuration error: {0}")]
    Config(String),
    /// Unparseable literal (complex number, float, ...).
    #[error("parse error: {0}")]
    ParseError(String),
    /// Underlying I/O failure.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    // ---- generic ----
    /// Argument outside the documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Catch-all numerical failure with context.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    /// True for errors caused by user-supplied configuration or malformed
    /// input rather than by numerics; drives the CLI exit-code split.
    #[must_use]
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            LabError::Config(_)
                | LabError::ParseError(_)
                | LabError::InvalidArgument(_)
                | LabError::BadRadii(_)
                | LabError::InvalidCoefficients(_)
                | LabError::Io(_)
        )
    }
}
