use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is rank deficient (smallest/largest singular value ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("vector length {len} is not a power of two")]
    LengthNotPowerOfTwo { len: usize },
    #[error("sketch size m = {m} is smaller than the number of columns p = {p}")]
    SketchTooSmall { m: usize, p: usize },
    #[error("sketch size m = {m} must be smaller than the number of rows n = {n}")]
    SketchTooLarge { m: usize, n: usize },
    #[error("sparsity {sparsity} must lie in 1..={m}")]
    BadSparsity { sparsity: usize, m: usize },
    #[error("kurtosis {kurtosis} is too close to the minimum of 1 (need > {min})")]
    KurtosisTooLow { kurtosis: f64, min: f64 },
    #[error("subsample retained {m_eff} rows, fewer than p = {p}")]
    DegenerateSample { m_eff: usize, p: usize },
    #[error("sketched residual is zero; interval would have zero width")]
    ZeroResidual,
    #[error("sketched fitted signal is zero; interval would have zero width")]
    DegenerateSignal,
    #[error("confidence level {level} must lie in (0, 1)")]
    BadLevel { level: f64 },
    #[error("eigenvalue {index} is within relative gap {gap:.3e} of a neighbour")]
    EigengapTooSmall { index: usize, gap: f64 },
    #[error("{what} requires the full-data left singular vectors")]
    NeedsFullData { what: &'static str },
    #[error("direction is (nearly) parallel to eigenvector {index}; variance vanishes")]
    DegenerateDirection { index: usize },
    #[error("columns are not orthonormal (max deviation {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("bad shape: {0}")]
    BadShape(String),
    #[error("family {family} does not support {what}")]
    UnsupportedFamily { family: String, what: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("schema error at `{key}`: {message}")]
    SchemaError { key: String, message: String },
    #[error("parse error at row {row}, column {col}: {message}")]
    ParseError { row: usize, col: usize, message: String },
    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("non-numeric cell {value:?} at row {row}, column {col}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse error class, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            ConfigInvalid(_) | SchemaError { .. } | BadLevel { .. } | InvalidArgument(_)
            | UnsupportedFamily { .. } | SketchTooSmall { .. } | SketchTooLarge { .. }
            | BadSparsity { .. } | KurtosisTooLow { .. } | NeedsFullData { .. } => {
                ErrorClass::Config
            }
            ParseError { .. } | RaggedRows { .. } | NonNumericCell { .. } | Io(_)
            | BadShape(_) | NonFinite { .. } | TooFewSamples { .. } => ErrorClass::Data,
            _ => ErrorClass::Numerical,
        }
    }

    /// 2 = configuration error, 3 = data error, 4 = numerical error.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }

    /// Stable kebab-case identifier, suitable as a machine-readable prefix.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            RankDeficient { .. } => "rank-deficient",
            NonFinite { .. } => "non-finite",
            NotSymmetric { .. } => "not-symmetric",
            LengthNotPowerOfTwo { .. } => "length-not-power-of-two",
            SketchTooSmall { .. } => "sketch-too-small",
            SketchTooLarge { .. } => "sketch-too-large",
            BadSparsity { .. } => "bad-sparsity",
            KurtosisTooLow { .. } => "kurtosis-too-low",
            DegenerateSample { .. } => "degenerate-sample",
            ZeroResidual => "zero-residual",
            DegenerateSignal => "degenerate-signal",
            BadLevel { .. } => "bad-level",
            EigengapTooSmall { .. } => "eigengap-too-small",
            NeedsFullData { .. } => "needs-full-data",
            DegenerateDirection { .. } => "degenerate-direction",
            NotOrthonormal { .. } => "not-orthonormal",
            TooFewSamples { .. } => "too-few-samples",
            BadShape(_) => "bad-shape",
            UnsupportedFamily { .. } => "unsupported-family",
            InvalidArgument(_) => "invalid-argument",
            ConfigInvalid(_) => "config-invalid",
            SchemaError { .. } => "schema-error",
            ParseError { .. } => "parse-error",
            RaggedRows { .. } => "ragged-rows",
            NonNumericCell { .. } => "non-numeric-cell",
            Io(_) => "io-error",
        }
    }
}
