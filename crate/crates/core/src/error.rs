use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A moment the caller asked for does not exist (e.g. Pareto variance with shape <= 2).
    #[error("infinite moment: {0}")]
    Moment(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("phi is singular at theta = {theta}, xi = {xi}: Psi vanishes while Psi_theta = {psi_theta:e}")]
    Singular { theta: f64, xi: f64, psi_theta: f64 },

    #[error("integration constant {c} is infeasible: {reason}")]
    InfeasibleConstant { c: f64, reason: String },

    /// The feasible set of integration constants is empty, so the insurer offers no contract.
    #[error("no admissible integration constant exists: {0}")]
    NoContract(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    /// Stable short identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Unsupported(_) => "unsupported",
            Error::Moment(_) => "moment",
            Error::Numeric(_) => "numeric",
            Error::Bracket { .. } => "bracket",
            Error::NoConvergence { .. } => "no-convergence",
            Error::Singular { .. } => "singular",
            Error::InfeasibleConstant { .. } => "infeasible-constant",
            Error::NoContract(_) => "no-contract",
            Error::Usage(_) => "usage",
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}
