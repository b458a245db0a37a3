use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("order {order} exceeds cache capacity {max_order}")]
    OrderExceedsCache { order: u32, max_order: u32 },

    #[error("series did not converge within {n_max_hard} terms")]
    NonConvergence { n_max_hard: usize },

    /// The closed form carries `eps_u^-l` factors that degenerate near zero.
    #[error("closed form is singular at eps_u = {eps_u} (floor {floor})")]
    Singularity { eps_u: f64, floor: f64 },

    #[error("closed form is numerically unstable for k = {k} (max {k_max})")]
    Unstable { k: u32, k_max: u32 },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
