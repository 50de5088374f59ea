use thiserror::Error;

pub type Result<T> = std::result::Result<T, DelmarError>;

/// Every failure the library can report. Each variant maps to a stable
/// machine-readable code (see [`DelmarError::code`]) that the CLI surfaces.
#[derive(Error, Debug)]
pub enum DelmarError {
    #[error("non-finite value in {context}")]
    NonFiniteInput { context: &'static str },

    #[error("shrinkage threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("vector of length {0} is too short (need at least 2)")]
    VectorTooShort(usize),

    #[error("cumulative sum at position {0} is zero")]
    ZeroPrefix(usize),

    #[error("division by zero at position {0}")]
    DivisionByZero(usize),

    #[error("matrix {rows}x{cols} is too small for rank estimation")]
    MatrixTooSmall { rows: usize, cols: usize },

    #[error("rank {rank} must satisfy 1 <= rank < {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    #[error("iterate became non-finite at iteration {iteration} of layer {layer}")]
    NonFiniteIterate { layer: usize, iteration: usize },

    #[error("input matrix {rows}x{cols} is degenerate (min dimension must be at least 3)")]
    DegenerateInput { rows: usize, cols: usize },

    #[error("layer {layer} out of range 1..={depth}")]
    LayerOutOfRange { layer: usize, depth: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("support set is empty")]
    EmptySupport,

    #[error("signal has zero norm")]
    ZeroSignal,

    #[error("need at least 2 observations to split, got {0}")]
    TooFewObservations(usize),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unparsable value at row {row}, column {col}")]
    MalformedValue { row: usize, col: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("malformed report: {0}")]
    MalformedReport(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl DelmarError {
    pub fn code(&self) -> &'static str {
        match self {
            DelmarError::NonFiniteInput { .. } => "NON_FINITE_INPUT",
            DelmarError::NegativeThreshold(_) => "NEGATIVE_THRESHOLD",
            DelmarError::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            DelmarError::VectorTooShort(_) => "VECTOR_TOO_SHORT",
            DelmarError::ZeroPrefix(_) => "ZERO_PREFIX",
            DelmarError::DivisionByZero(_) => "DIVISION_BY_ZERO",
            DelmarError::MatrixTooSmall { .. } => "MATRIX_TOO_SMALL",
            DelmarError::RankTooLarge { .. } => "RANK_TOO_LARGE",
            DelmarError::NonFiniteIterate { .. } => "NON_FINITE_ITERATE",
            DelmarError::DegenerateInput { .. } => "DEGENERATE_INPUT",
            DelmarError::LayerOutOfRange { .. } => "LAYER_OUT_OF_RANGE",
            DelmarError::InvalidConfig(_) => "INVALID_CONFIG",
            DelmarError::InvalidSpec(_) => "INVALID_SPEC",
            DelmarError::LengthMismatch(..) => "LENGTH_MISMATCH",
            DelmarError::EmptySupport => "EMPTY_SUPPORT",
            DelmarError::ZeroSignal => "ZERO_SIGNAL",
            DelmarError::TooFewObservations(_) => "TOO_FEW_OBSERVATIONS",
            DelmarError::MalformedHeader(_) => "MALFORMED_HEADER",
            DelmarError::DimensionMismatch(_) => "DIMENSION_MISMATCH",
            DelmarError::MalformedValue { .. } => "MALFORMED_VALUE",
            DelmarError::NonFiniteValue { .. } => "NON_FINITE_VALUE",
            DelmarError::MalformedReport(_) => "MALFORMED_REPORT",
            DelmarError::Io(_) => "IO_ERROR",
        }
    }

    /// Numerical failures are distinguished from bad input so the CLI can
    /// report them with their own exit status.
    pub fn is_numerical_failure(&self) -> bool {
        matches!(self, DelmarError::NonFiniteIterate { .. })
    }
}
