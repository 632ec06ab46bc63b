//! Bit-accurate software model of a low-precision floating-point
//! multiply-accumulate unit with stochastic rounding in the accumulator.
//!
//! The crate is layered bottom-up:
//!
//! * [`format`] - parameterized minifloat formats, encode/decode.
//! * [`exact`] - exact dyadic rationals, the oracle number type.
//! * [`rng`] - Galois LFSR random source and draws.
//! * [`rounding`] - definition-level rounding of exact values (RN, truncation, SR).
//! * [`adder`] - dual-path adder with RN, lazy SR and eager SR rounding.
//! * [`mac`] - exact widening multiplier feeding a rounding accumulator.
//! * [`linalg`] - quantization, dot products and GEMM through the MAC.
//! * [`verify`] - probability-law checks, lazy/eager equivalence sweeps and
//!   trace-covering input generation.

pub mod adder;
pub mod exact;
pub mod format;
pub mod linalg;
pub mod mac;
pub mod rng;
pub mod rounding;
pub mod verify;

pub use adder::{add_rn, add_sr_eager, add_sr_lazy, add_truncate, AddOutcome};
pub use exact::ExactReal;
pub use format::{FloatClass, FloatFormat, PackedFloat, UnpackedFloat};
pub use mac::{MacConfig, RoundMode};
pub use rng::{Lfsr, RandomDraw, UniformSource};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid float format: {0}")]
    BadFormat(String),
    #[error("bit pattern {bits:#x} does not fit in {width} bits")]
    BitsOutOfRange { bits: u64, width: u32 },
    #[error("value not representable in the target format")]
    NotRepresentable,
    #[error("value is not finite")]
    NonFinite,
    #[error("zero has no normalized decomposition")]
    ZeroInput,
    #[error("LFSR seed reduces to the all-zero state")]
    ZeroSeed,
    #[error("LFSR width {0} outside 4..=32")]
    BadWidth(u32),
    #[error("random bit count {r} outside 1..={max}")]
    BadR { r: u32, max: u32 },
    #[error("operands use different formats: {0} vs {1}")]
    FormatMismatch(FloatFormat, FloatFormat),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
}
