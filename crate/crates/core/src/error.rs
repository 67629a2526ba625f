use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// Delay `tau_k = sigma_k eps^-k` is not representable.
    #[error("delay at scale k={k} overflows (eps={eps})")]
    DelayRange { k: usize, eps: f64 },

    /// `|Re(lambda)| tau_k` is beyond the double-precision exponent range.
    #[error("evaluation outside the safe range at delay scale k={k}: |Re(lambda)|*tau_k = {exponent:.4e} > {limit}")]
    EvaluationRange { k: usize, exponent: f64, limit: f64 },

    #[error("function vanishes on the contour near {re}{im:+}i")]
    BoundaryZero { re: f64, im: f64 },

    #[error("phase tracking did not resolve along the contour: {0}")]
    Resolution(String),

    #[error("truncated characteristic polynomial at level k={k} is identically zero")]
    Trivial { k: usize },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("non-degeneracy condition violated: {0}")]
    NonDegeneracy(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
