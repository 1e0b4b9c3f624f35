use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("enumeration too large: {count} allocations exceeds the cap of {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid mean {value} for {kind} response at subject {index}")]
    InvalidMean {
        kind: &'static str,
        index: usize,
        value: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "negative radicand {radicand} (kappa_Z={kappa_z}, B2={b2}, S={s}, R={r}, rr~={rr})"
    )]
    NumericalInconsistency {
        radicand: f64,
        kappa_z: f64,
        b2: f64,
        s: f64,
        r: f64,
        rr: f64,
    },

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NumericalInconsistency { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
