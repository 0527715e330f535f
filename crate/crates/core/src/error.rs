use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A matrix that must be invertible (or a column block that must have
    /// full rank) is singular or too ill-conditioned to trust.
    #[error("{context}: singular or ill-conditioned (condition estimate {cond:.3e})")]
    Singular { context: String, cond: f64 },

    /// A bound's hypotheses fail, so the quantity is not defined.
    #[error("bound not applicable: {0}")]
    NotApplicable(String),

    /// An exhaustive enumeration would exceed the combinatorial guard.
    #[error("enumeration infeasible: {0}")]
    Infeasible(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
