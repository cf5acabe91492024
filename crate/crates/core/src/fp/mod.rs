//! Bit-exact reduced-precision arithmetic: binary16 FMA/add/mul, FNCOMP
//! min/max, and the FP8 ↔ binary16 cast units.
//!
//! Only round-to-nearest-even is modelled. Subnormals are fully supported.

mod fp16;
mod fp8;
pub(crate) mod round;

pub use fp16::{add16, fma16, fncomp16, mul16, Fp16, MinMax};
pub use fp8::{cast_fp16_to_fp8, cast_fp8_to_fp16, Fp8, Fp8Format};

/// The single rounding mode used by every lossy operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingMode {
    #[default]
    NearestEven,
}
