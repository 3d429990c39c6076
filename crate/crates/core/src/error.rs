use thiserror::Error;

/// Everything that can go wrong in a computation.
///
/// Variants are split into input problems (exit code 2) and numerical
/// failures (exit code 3); see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unknown site label `{0}`")]
    UnknownSite(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("quadrature did not converge (value {value}, error estimate {estimate:.3e})")]
    QuadratureNonConvergence { value: f64, estimate: f64 },

    #[error("integration horizon too short: tail bound {tail:.3e} exceeds tolerance {tol:.3e}")]
    HorizonTooShort { tail: f64, tol: f64 },

    #[error("frequency {omega} exceeds the Nyquist limit {limit} of the sampling grid")]
    BeyondNyquist { omega: f64, limit: f64 },

    #[error("trace drifted by {drift:.3e} at t = {time}")]
    TraceDrift { time: f64, drift: f64 },

    #[error("steady state is not unique: null space has dimension {}", .basis.len())]
    DegenerateSteadySpace {
        basis: Vec<nalgebra::DMatrix<num_complex::Complex64>>,
    },

    #[error("rectification undefined: mean currents {plus:.3e} and {minus:.3e} sum to zero")]
    UndefinedRectification { plus: f64, minus: f64 },

    #[error("Krylov step at t = {time} exceeded the error budget ({estimate:.3e} > {tol:.3e})")]
    StepErrorBudget { time: f64, estimate: f64, tol: f64 },

    #[error("trajectory norm collapsed to {norm:.3e} at t = {time}")]
    NormCollapse { time: f64, norm: f64 },

    #[error("chain of {sites} sites exceeds the state-vector limit of {limit}")]
    ChainTooLarge { sites: usize, limit: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::UnknownSite(_)
            | Error::DimensionMismatch { .. }
            | Error::NotHermitian { .. }
            | Error::BeyondNyquist { .. }
            | Error::ChainTooLarge { .. }
            | Error::Io(_)
            | Error::Json(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Collects validation messages so that every offending field is reported at once.
#[derive(Debug, Default)]
pub(crate) struct Problems(Vec<String>);

impl Problems {
    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    pub fn finite(&mut self, name: &str, v: f64) {
        self.check(v.is_finite(), || format!("{name} must be finite, got {v}"));
    }

    pub fn positive(&mut self, name: &str, v: f64) {
        self.check(v.is_finite() && v > 0.0, || {
            format!("{name} must be positive and finite, got {v}")
        });
    }

    pub fn non_negative(&mut self, name: &str, v: f64) {
        self.check(v.is_finite() && v >= 0.0, || {
            format!("{name} must be non-negative and finite, got {v}")
        });
    }

    pub fn extend(&mut self, other: Problems) {
        self.0.extend(other.0);
    }

    pub fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.0))
        }
    }
}
