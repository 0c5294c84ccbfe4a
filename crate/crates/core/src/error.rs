use std::fmt;

/// Broad failure categories, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numeric,
    DataFormat,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("singular transconductance boost: gm12/gm11 = {ratio} (must be < 1)")]
    SingularBoost { ratio: f64 },

    #[error("no headroom for the I-V converter: v_dd = {v_dd} V <= v_th = {v_th} V")]
    Headroom { v_dd: f64, v_th: f64 },

    #[error("singular feedback: A*gm2 = {loop_gain} (closed-loop pole)")]
    SingularFeedback { loop_gain: f64 },

    #[error("gain index j = {j} outside 1..={p_max}")]
    GainIndex { j: u32, p_max: u32 },

    #[error("feedback solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("at grid point {index} (i_sen = {current:e} A): {source}")]
    AtPoint {
        index: usize,
        current: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("THD undefined: fundamental magnitude {magnitude:e} below threshold")]
    UndefinedThd { magnitude: f64 },

    #[error("query {query} outside table range [{min}, {max}]")]
    Extrapolation { query: f64, min: f64, max: f64 },

    #[error("unknown process corner `{0}`")]
    UnknownCorner(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("calibration curve is not invertible (slope = 0)")]
    NonInvertible,

    #[error("curve targets {actual}, expected {expected}")]
    WrongTarget {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParam { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::UnknownCorner(_)
            | Error::WrongTarget { .. } => ErrorKind::Config,
            Error::Format(_) | Error::Parse { .. } => ErrorKind::DataFormat,
            Error::AtPoint { source, .. } => source.kind(),
            _ => ErrorKind::Numeric,
        }
    }

    pub(crate) fn at_point(self, index: usize, current: f64) -> Self {
        Error::AtPoint {
            index,
            current,
            source: Box::new(self),
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorKind::Config => "config",
            ErrorKind::Numeric => "numeric",
            ErrorKind::DataFormat => "data-format",
        };
        f.write_str(s)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be > 0, got {value}")))
    }
}
