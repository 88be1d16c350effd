//! Error types shared across the crate.
//!
//! Solver-level diagnostics (bracket misses, rejected steps, degenerate
//! inputs) are carried as data in the solver outcome structs; these enums
//! cover genuine contract violations on inputs.

use thiserror::Error;

/// Errors raised by the closed-form numeric kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    /// Lambert W0 is real only for arguments at or above -1/e.
    #[error("lambert w0 argument {x} lies below the branch point -1/e")]
    LambertDomain { x: f64 },
    /// A kernel received a NaN or infinite argument.
    #[error("non-finite argument {x} passed to {context}")]
    NonFinite { x: f64, context: &'static str },
}

/// Errors raised when a solve cannot produce a plan at all (as opposed to
/// producing one with diagnostics attached).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    /// The offloading-only scheme needs at least one slot with uplink band.
    #[error("offloading-only plan impossible: no uplink band in any slot")]
    NoUplinkBand,
    /// The offloading-only scheme needs at least one slot with download band.
    #[error("offloading-only plan impossible: no download band in any slot")]
    NoDownloadBand,
}

/// Errors raised by the physical model evaluations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    /// CPU frequencies are non-negative by definition.
    #[error("negative cpu frequency {f} Hz")]
    NegativeFrequency { f: f64 },
    /// Transmitting a positive number of bits through a zero-width channel
    /// would require infinite power.
    #[error("{bits} bits scheduled on a slot with zero bandwidth")]
    BitsWithoutBandwidth { bits: f64 },
    /// User index outside the scenario's equipment list.
    #[error("user index {index} out of range, scenario has {count} users")]
    UserIndex { index: usize, count: usize },
    /// Raised by the strict flight-power evaluation when the speed falls
    /// below the rotor-model floor instead of being clamped.
    #[error("speed {v} m/s below the flight-model floor {floor} m/s")]
    SpeedBelowFloor { v: f64, floor: f64 },
}
