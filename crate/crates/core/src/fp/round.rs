//! Round-to-nearest-even packing shared by every reduced-precision format.
//!
//! All arithmetic in this crate reduces to an exact value `±mag · 2^exp2`
//! (held in a `u128`) followed by exactly one call to [`round_pack`].

/// What happens to magnitudes beyond the largest finite encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Overflow {
    /// IEEE style: all-ones exponent encodes infinity and NaN.
    Infinity,
    /// No infinities; the all-ones pattern is the only NaN and overflow clamps
    /// to the largest finite value (OCP/NVIDIA E4M3).
    Saturate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub exp_bits: u32,
    pub man_bits: u32,
    pub overflow: Overflow,
}

pub(crate) const BINARY16: Layout = Layout { exp_bits: 5, man_bits: 10, overflow: Overflow::Infinity };
pub(crate) const E5M2: Layout = Layout { exp_bits: 5, man_bits: 2, overflow: Overflow::Infinity };
pub(crate) const E4M3: Layout = Layout { exp_bits: 4, man_bits: 3, overflow: Overflow::Saturate };

/// Decoded view of a code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Class {
    Zero { neg: bool },
    /// `±sig · 2^exp2`, `sig > 0`.
    Finite { neg: bool, sig: u32, exp2: i32 },
    Inf { neg: bool },
    Nan,
}

impl Layout {
    pub const fn bias(&self) -> i32 {
        (1 << (self.exp_bits - 1)) - 1
    }

    pub const fn sign_bit(&self) -> u32 {
        1 << (self.exp_bits + self.man_bits)
    }

    const fn exp_mask(&self) -> u32 {
        (1 << self.exp_bits) - 1
    }

    const fn man_mask(&self) -> u32 {
        (1 << self.man_bits) - 1
    }

    /// Largest finite magnitude, as a code without sign.
    pub const fn max_finite(&self) -> u32 {
        match self.overflow {
            Overflow::Infinity => ((self.exp_mask() - 1) << self.man_bits) | self.man_mask(),
            Overflow::Saturate => (self.exp_mask() << self.man_bits) | (self.man_mask() - 1),
        }
    }

    pub fn classify(&self, bits: u32) -> Class {
        let neg = bits & self.sign_bit() != 0;
        let be = (bits >> self.man_bits) & self.exp_mask();
        let man = bits & self.man_mask();
        let top = be == self.exp_mask();
        match self.overflow {
            Overflow::Infinity if top => {
                if man == 0 {
                    Class::Inf { neg }
                } else {
                    Class::Nan
                }
            }
            Overflow::Saturate if top && man == self.man_mask() => Class::Nan,
            _ if be == 0 && man == 0 => Class::Zero { neg },
            _ if be == 0 => Class::Finite { neg, sig: man, exp2: 1 - self.bias() - self.man_bits as i32 },
            _ => Class::Finite {
                neg,
                sig: man | (1 << self.man_bits),
                exp2: be as i32 - self.bias() - self.man_bits as i32,
            },
        }
    }
}

/// Rounds `±mag · 2^exp2` to the nearest code of `layout`, ties to even.
///
/// `mag` must stay below 2^126 so the discarded-bit arithmetic cannot overflow.
pub(crate) fn round_pack(neg: bool, mag: u128, exp2: i32, layout: Layout) -> u32 {
    let sign = if neg { layout.sign_bit() } else { 0 };
    if mag == 0 {
        return sign;
    }
    debug_assert!(mag < 1 << 126);
    let m = layout.man_bits as i32;
    let msb = 127 - mag.leading_zeros() as i32;
    let emin = 1 - layout.bias();
    let mut ulp_exp = (msb + exp2).max(emin) - m;
    let shift = ulp_exp - exp2;

    let mut sig: u128 = if shift <= 0 {
        mag << (-shift) as u32
    } else if shift > msb + 1 {
        0
    } else {
        let kept = mag >> shift as u32;
        let rem = mag & ((1u128 << shift as u32) - 1);
        let half = 1u128 << (shift - 1) as u32;
        if rem > half || (rem == half && kept & 1 == 1) {
            kept + 1
        } else {
            kept
        }
    };
    if sig == 0 {
        return sign;
    }
    if sig >> (m + 1) != 0 {
        sig >>= 1;
        ulp_exp += 1;
    }

    let hidden = 1u128 << m;
    let (be, man) = if sig >= hidden {
        ((ulp_exp + m + layout.bias()) as i64, (sig - hidden) as u32)
    } else {
        (0, sig as u32)
    };
    let max = layout.max_finite();
    let max_be = (max >> layout.man_bits) as i64;
    let code = if be > max_be {
        None
    } else {
        let c = ((be as u32) << layout.man_bits) | man;
        (c <= max).then_some(c)
    };
    match (code, layout.overflow) {
        (Some(c), _) => sign | c,
        (None, Overflow::Saturate) => sign | max,
        (None, Overflow::Infinity) => sign | (layout.exp_mask() << layout.man_bits),
    }
}

/// Splits a host double into an exact `(neg, mag, exp2)` triple.
pub(crate) fn split_f64(v: f64) -> (bool, u128, i32) {
    let (mantissa, exponent, sign) = num_traits::Float::integer_decode(v);
    (sign < 0, mantissa as u128, exponent as i32)
}
