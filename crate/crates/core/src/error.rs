use thiserror::Error;

/// Errors reported by the simulator library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported PAM order {0} (expected 2, 4 or 8)")]
    UnsupportedOrder(u32),

    #[error("unsupported QAM size {0} (expected 4, 16 or 64)")]
    UnsupportedQam(u32),

    #[error("symbol {value} at position {index} is not in the {q}-PAM alphabet")]
    InvalidSymbol { index: usize, value: i32, q: u32 },

    #[error("invalid fixed-point format: {0}")]
    InvalidFormat(String),

    #[error("fixed-point format mismatch: {left} vs {right}")]
    FormatMismatch { left: String, right: String },

    #[error("divisor must be strictly positive, got raw value {0}")]
    NonPositiveDivisor(i64),

    #[error("search space of {candidates} candidates exceeds the cap of {cap}")]
    SearchSpaceTooLarge { candidates: u128, cap: u128 },

    #[error("invalid array organization: {0}")]
    InvalidArray(String),

    #[error("mean cycles per codeword must be positive, got {0}")]
    ZeroCycles(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
