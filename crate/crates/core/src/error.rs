use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge (estimated error {achieved:e})")]
    Quadrature { achieved: f64 },

    #[error("decomposition with {modes} modes misses tolerance {requested:e} (achieved {achieved:e})")]
    FitTolerance {
        modes: usize,
        requested: f64,
        achieved: f64,
    },

    #[error("unsupported decomposition: {0}")]
    UnsupportedDecomposition(&'static str),

    #[error("hierarchy size overflows")]
    HierarchyOverflow,

    #[error("dimension mismatch at site {site}: {detail}")]
    DimensionMismatch { site: usize, detail: String },

    #[error("SVD did not converge at site {site}")]
    Svd { site: usize },

    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },

    #[error("truncation error {error:e} exceeds hard limit {limit:e} at t = {t}")]
    TruncationLimit { error: f64, limit: f64, t: f64 },

    #[error("noise path for bath {bath} ends before half-step index {index}")]
    NoiseTooShort { bath: usize, index: usize },
}
