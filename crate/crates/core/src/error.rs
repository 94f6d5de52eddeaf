use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes shared by every module. The CLI maps `Config` and
/// `Domain`-style input problems to exit code 2 and numeric failures to 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("branch error: {0}")]
    Branch(String),
    #[error("pole error: {0}")]
    Pole(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("convergence error: {0}")]
    Convergence(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("degeneracy error: {0}")]
    Degeneracy(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("edge error: {0}")]
    Edge(String),
    #[error("matching error: {0}")]
    Matching(String),
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by bad input rather than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::SizeLimit(_)
                | Error::Arity(_)
                | Error::InsufficientData(_)
                | Error::Domain(_)
                | Error::Branch(_)
                | Error::Pole(_)
                | Error::InvalidPotential(_)
                | Error::Edge(_)
                | Error::Config(_)
        )
    }
}
