use thiserror::Error;

pub type Result<T, E = ArenaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("value {value} for {what} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("conditioning event has zero probability")]
    ZeroProbabilityConditioning,

    #[error("enumeration cap exceeded: {what} = {actual} exceeds cap {cap}")]
    EnumerationCap {
        what: &'static str,
        actual: usize,
        cap: usize,
    },

    #[error("conjugate gradient leaves the simplex (deviation {deviation:e})")]
    ConjugateOutsideSimplex { deviation: f64 },

    #[error("objective is not concave: three-point violation {violation:e} at r = {at}")]
    NonConcave { violation: f64, at: f64 },

    #[error("report row {forecaster} drifts {gap} from its beliefs, beyond the band {bound}")]
    BandViolation {
        forecaster: usize,
        gap: f64,
        bound: f64,
    },

    #[error("mean of the statistic is unavailable: {0}")]
    MeanUnavailable(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible scale: {0}")]
    Infeasible(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_unit(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ArenaError::Domain {
            what,
            value,
            domain: "[0, 1]",
        })
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(ArenaError::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
