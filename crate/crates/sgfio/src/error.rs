//! Error types shared across the crate.

use thiserror::Error;

/// Failure while evaluating a handle (weight, symbol, amplitude, phase) at a
/// point.
#[derive(Debug, Clone, Error)]
pub enum EvalError {
    #[error("point has {got} coordinates, handle expects {expect}")]
    DimensionMismatch { expect: usize, got: usize },
    #[error("requested jet order {requested} exceeds the engine cap {cap}")]
    OrderCapExceeded { requested: usize, cap: usize },
    #[error("Newton inversion failed at {point:?}: {reason}; residual history {residuals:?}")]
    NewtonFailed {
        point: Vec<f64>,
        reason: String,
        residuals: Vec<f64>,
    },
    #[error("point {point:?} lies outside the diagonal cutoff region |y-x| <= {k} <x>")]
    OutsideCutoffRegion { point: Vec<f64>, k: f64 },
    #[error("non-finite value produced at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("weight must be positive, got {value} at {point:?}")]
    NonPositiveWeight { point: Vec<f64>, value: f64 },
}

/// Grid construction and transform failures.
#[derive(Debug, Clone, Error)]
pub enum GridError {
    #[error("dimension must be 1, 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("points per axis must be even and at least 8, got {0}")]
    BadPointCount(usize),
    #[error("half-width must be positive and finite, got {0}")]
    BadHalfWidth(f64),
    #[error("grids differ: {0}")]
    GridMismatch(String),
    #[error("grid function contains a non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error(
        "test function violates the {margin} margin: {detail} (limit {limit:e}, got {got:e})"
    )]
    MarginViolated {
        margin: &'static str,
        detail: String,
        limit: f64,
        got: f64,
    },
    #[error("serialized grid data malformed: {0}")]
    BadSerialization(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for GridError {
    fn from(e: std::io::Error) -> Self {
        GridError::Io(e.to_string())
    }
}

/// Operator assembly and application failures.
#[derive(Debug, Clone, Error)]
pub enum OperatorError {
    #[error("phase failed the admissibility probe: {0}")]
    PhaseNotSimple(String),
    #[error(
        "integrand is not grid-integrable: boundary frequency mass {boundary:e} exceeds \
         {threshold:e} of the peak {peak:e}"
    )]
    TailMass {
        boundary: f64,
        peak: f64,
        threshold: f64,
    },
    #[error("operator and grid dimensions differ: operator d={op}, grid d={grid}")]
    DimensionMismatch { op: usize, grid: usize },
    #[error("symbol dimension {symbol} differs from phase dimension {phase}")]
    SymbolPhaseMismatch { symbol: usize, phase: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Composition-level failures.
#[derive(Debug, Clone, Error)]
pub enum CalculusError {
    #[error("hypothesis probe `{probe}` failed: {detail}")]
    HypothesisFailed { probe: String, detail: String },
    #[error("expansion order {m} exceeds the supported cap {cap}")]
    OrderTooLarge { m: usize, cap: usize },
    #[error("symbol is not elliptic at probe level: |a|/omega = {ratio:e} at {point:?}")]
    NotElliptic { ratio: f64, point: Vec<f64> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// One field-level problem found while validating an experiment config.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConfigViolation {
    /// JSON path of the offending field, e.g. `grid.points_per_axis`.
    pub path: String,
    pub message: String,
    /// Closest known name, when the problem is an unknown identifier.
    pub suggestion: Option<String>,
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)?;
        if let Some(name) = &self.suggestion {
            write!(f, " (did you mean `{name}`?)")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(String),
    #[error("config validation failed with {} problem(s):\n{}", .0.len(),
        .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigViolation>),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e.to_string())
    }
}
