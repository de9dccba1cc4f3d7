use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Row and column positions in [`Error::Parse`] are 1-based and count data
/// rows only (a header row is not counted).
#[derive(Debug, Error)]
pub enum Error {
    #[error("input needs at least 2 rows and 1 column, got {rows}x{cols}")]
    EmptyInput { rows: usize, cols: usize },
    #[error("column {0} has zero sample variance")]
    ConstantColumn(usize),
    #[error("assays disagree on row count: expected {expected}, assay {assay} has {found}")]
    RowMismatch {
        assay: usize,
        expected: usize,
        found: usize,
    },
    #[error("cannot parse numeric value at row {row}, column {col}")]
    Parse { row: usize, col: usize },
    #[error("assay boundaries sum to {declared} but the file has {available} feature columns")]
    BoundaryMismatch { declared: usize, available: usize },
    #[error("response column {0} not found")]
    MissingResponse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input contains NaN or infinite values")]
    NonFinite,
    #[error("coordinate descent did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("could not bracket the L1 bound on the regularization path: {0}")]
    BisectionFailure(String),
    #[error("cross-product matrix is rank deficient (smallest/largest singular value {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("latent factor {factor} collapsed to zero at iteration {iteration}")]
    DegenerateFactor { factor: usize, iteration: usize },
    #[error("latent score matrix is numerically singular (condition number {0:.3e})")]
    SingularDesign(f64),
    #[error("no feature passes the screening threshold {0}")]
    EmptyScreen(f64),
    #[error("only {survivors} features survive screening but {components} components were requested")]
    InsufficientRank { survivors: usize, components: usize },
    #[error("simulation truth does not match the supplied data: {0}")]
    DesignMismatch(String),
    #[error("oracle test MSE is zero; normalized MSE is undefined")]
    ZeroOracleMse,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}
