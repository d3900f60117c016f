use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Partial sums kept growing up to the truncation limit: the regenerative
    /// process is not positive recurrent (e.g. branching with lambda >= 1).
    #[error("series did not converge within n_max = {n_max}")]
    DivergentSeries { n_max: usize },

    #[error("lambda = {lambda} is supercritical; the requested mean is infinite")]
    SupercriticalInput { lambda: f64 },

    #[error("lambda = {lambda} is not supercritical; the requested quantity is only defined for lambda > 1")]
    SubcriticalInput { lambda: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NonConvergence { iterations: usize, last_step: f64 },

    #[error("root is not bracketed: g({lo:e}) = {g_lo:e}, g({hi:e}) = {g_hi:e}")]
    BracketFailure {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },

    #[error("event budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },

    #[error("standard error is zero but mean {mean} differs from target {target}")]
    DegenerateEstimate { mean: f64, target: f64 },

    #[error("{0} replicates exceeded the event budget, above the tolerated fraction")]
    TooManyFailedReplicates(usize),
}

impl Error {
    /// True for failures of a numerical method rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DivergentSeries { .. }
                | Error::NonConvergence { .. }
                | Error::BracketFailure { .. }
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
