use thiserror::Error;

/// Every failure the library can report. The CLI maps these onto exit codes.
#[derive(Debug, Clone, Error)]
pub enum WaveError {
    #[error("point {p} lies outside the domain [{p0}, 0]")]
    Domain { p: f64, p0: f64 },

    #[error("derivative order {k} exceeds the supported cap {cap}")]
    UnsupportedOrder { k: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stagnation: h_p = {min_hp:e} violates the floor {floor:e}")]
    Stagnation { min_hp: f64, floor: f64 },

    #[error("laminar profile blew up: {0}")]
    BlowUp(String),

    #[error("Newton iteration diverged after {} iterations (last residual {:e})", history.len().saturating_sub(1), history.last().copied().unwrap_or(f64::NAN))]
    Divergence { history: Vec<f64> },

    #[error("singular Jacobian (pivot ratio {pivot_ratio:e}); likely a bifurcation point")]
    BifurcationPoint { pivot_ratio: f64 },

    #[error("derivative order {requested} exceeds the resolution guard {limit} in {direction}")]
    Resolution {
        direction: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("only {usable} usable Fourier modes, need at least {needed}")]
    InsufficientModes { usable: usize, needed: usize },

    #[error("spectrum does not decay; no Gevrey index can be fitted")]
    NotGevrey,

    #[error("majorant rule violation: {0}")]
    RuleViolation(String),

    #[error("checksum mismatch: expected {expected}, found {found}")]
    Checksum { expected: String, found: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for WaveError {
    fn from(e: std::io::Error) -> Self {
        WaveError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for WaveError {
    fn from(e: serde_json::Error) -> Self {
        WaveError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WaveError>;
