//! Scalar abstraction shared by the reference evaluators and the engine.
//!
//! [`Fp16`] is the hardware element type. `f32` and `f64` implement the same
//! operation set with host arithmetic and serve as wide-precision references.

use std::fmt::Debug;

use num_traits::Float;

use crate::fp::{Fp16, Fp8, Fp8Format};

/// Arithmetic a computing element needs from its scalar type.
///
/// `min`/`max` follow the FNCOMP rules for every implementation: a single NaN
/// operand is suppressed, and `-0` orders below `+0`.
pub trait Element: Copy + Debug + PartialEq + Send + Sync + 'static {
    const ZERO: Self;
    const NEG_ZERO: Self;
    const ONE: Self;
    const INFINITY: Self;
    const NEG_INFINITY: Self;

    fn mul_add(self, b: Self, c: Self) -> Self;
    fn add(self, b: Self) -> Self;
    fn mul(self, b: Self) -> Self;
    fn min(self, b: Self) -> Self;
    fn max(self, b: Self) -> Self;
    fn is_nan(self) -> bool;

    /// Identity comparison: same encoding, NaNs compared by payload.
    fn same(self, other: Self) -> bool;

    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;

    fn from_fp8(x: Fp8) -> Self;
    fn to_fp8(self, format: Fp8Format) -> Fp8;
}

impl Element for Fp16 {
    const ZERO: Self = Fp16::ZERO;
    const NEG_ZERO: Self = Fp16::NEG_ZERO;
    const ONE: Self = Fp16::ONE;
    const INFINITY: Self = Fp16::INFINITY;
    const NEG_INFINITY: Self = Fp16::NEG_INFINITY;

    fn mul_add(self, b: Self, c: Self) -> Self {
        Fp16::mul_add(self, b, c)
    }
    fn add(self, b: Self) -> Self {
        Fp16::add(self, b)
    }
    fn mul(self, b: Self) -> Self {
        Fp16::mul(self, b)
    }
    fn min(self, b: Self) -> Self {
        Fp16::min(self, b)
    }
    fn max(self, b: Self) -> Self {
        Fp16::max(self, b)
    }
    fn is_nan(self) -> bool {
        Fp16::is_nan(self)
    }
    fn same(self, other: Self) -> bool {
        self.to_bits() == other.to_bits()
    }
    fn to_f64(self) -> f64 {
        Fp16::to_f64(self)
    }
    fn from_f64(v: f64) -> Self {
        Fp16::from_f64(v)
    }
    fn from_fp8(x: Fp8) -> Self {
        x.to_fp16()
    }
    fn to_fp8(self, format: Fp8Format) -> Fp8 {
        Fp8::from_fp16(self, format)
    }
}

fn float_min_max<F: Float>(a: F, b: F, want_min: bool) -> F {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => return F::nan(),
        (true, false) => return b,
        (false, true) => return a,
        (false, false) => {}
    }
    if a == b {
        // only the zero pair can compare equal with different encodings
        let a_neg = a.is_sign_negative();
        let b_neg = b.is_sign_negative();
        return if a_neg == b_neg || (want_min == a_neg) { a } else { b };
    }
    if (a < b) == want_min {
        a
    } else {
        b
    }
}

macro_rules! host_element {
    ($t:ty, $bits:ident) => {
        impl Element for $t {
            const ZERO: Self = 0.0;
            const NEG_ZERO: Self = -0.0;
            const ONE: Self = 1.0;
            const INFINITY: Self = <$t>::INFINITY;
            const NEG_INFINITY: Self = <$t>::NEG_INFINITY;

            fn mul_add(self, b: Self, c: Self) -> Self {
                Float::mul_add(self, b, c)
            }
            fn add(self, b: Self) -> Self {
                self + b
            }
            fn mul(self, b: Self) -> Self {
                self * b
            }
            fn min(self, b: Self) -> Self {
                float_min_max(self, b, true)
            }
            fn max(self, b: Self) -> Self {
                float_min_max(self, b, false)
            }
            fn is_nan(self) -> bool {
                Float::is_nan(self)
            }
            fn same(self, other: Self) -> bool {
                self.$bits() == other.$bits()
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn from_fp8(x: Fp8) -> Self {
                x.to_f64() as $t
            }
            fn to_fp8(self, format: Fp8Format) -> Fp8 {
                Fp8::from_f64(self as f64, format)
            }
        }
    };
}

host_element!(f32, to_bits);
host_element!(f64, to_bits);
