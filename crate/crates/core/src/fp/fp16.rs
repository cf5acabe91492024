use std::cmp::Ordering;
use std::fmt;

use super::round::{round_pack, split_f64, Class, BINARY16};

/// IEEE 754 binary16 value held as its raw 16-bit code.
///
/// Every pattern is valid. Arithmetic works on the integer code and never
/// touches host half-precision support, so results are identical on all
/// platforms.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fp16(u16);

/// Operation selector of the comparison (FNCOMP) unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MinMax {
    Min,
    Max,
}

/// Exact signed value `±mag · 2^exp2`.
#[derive(Debug, Clone, Copy)]
struct Exact {
    neg: bool,
    mag: u128,
    exp2: i32,
}

impl Exact {
    fn zero(neg: bool) -> Self {
        Exact { neg, mag: 0, exp2: 0 }
    }

    fn sum(self, other: Exact) -> Exact {
        if self.mag == 0 && other.mag == 0 {
            // (+0) + (-0) is +0 under round-to-nearest; -0 only when both are -0
            return Exact::zero(self.neg && other.neg);
        }
        if self.mag == 0 {
            return other;
        }
        if other.mag == 0 {
            return self;
        }
        let exp2 = self.exp2.min(other.exp2);
        let a = self.mag << (self.exp2 - exp2) as u32;
        let b = other.mag << (other.exp2 - exp2) as u32;
        if self.neg == other.neg {
            return Exact { neg: self.neg, mag: a + b, exp2 };
        }
        match a.cmp(&b) {
            Ordering::Greater => Exact { neg: self.neg, mag: a - b, exp2 },
            Ordering::Less => Exact { neg: other.neg, mag: b - a, exp2 },
            Ordering::Equal => Exact::zero(false),
        }
    }

    fn round(self) -> Fp16 {
        Fp16(round_pack(self.neg, self.mag, self.exp2, BINARY16) as u16)
    }
}

/// Non-NaN operand after special-case screening.
enum Operand {
    Finite(Exact),
    Inf(bool),
}

impl Fp16 {
    pub const ZERO: Fp16 = Fp16(0x0000);
    pub const NEG_ZERO: Fp16 = Fp16(0x8000);
    pub const ONE: Fp16 = Fp16(0x3C00);
    pub const INFINITY: Fp16 = Fp16(0x7C00);
    pub const NEG_INFINITY: Fp16 = Fp16(0xFC00);
    /// Canonical quiet NaN returned by every invalid operation.
    pub const NAN: Fp16 = Fp16(0x7E00);
    pub const MAX: Fp16 = Fp16(0x7BFF);
    pub const MIN_POSITIVE_SUBNORMAL: Fp16 = Fp16(0x0001);

    pub const fn from_bits(bits: u16) -> Self {
        Fp16(bits)
    }

    pub const fn to_bits(self) -> u16 {
        self.0
    }

    pub const fn is_nan(self) -> bool {
        self.0 & 0x7C00 == 0x7C00 && self.0 & 0x03FF != 0
    }

    pub const fn is_infinite(self) -> bool {
        self.0 & 0x7FFF == 0x7C00
    }

    pub const fn is_sign_negative(self) -> bool {
        self.0 & 0x8000 != 0
    }

    pub const fn neg(self) -> Self {
        Fp16(self.0 ^ 0x8000)
    }

    fn class(self) -> Class {
        BINARY16.classify(self.0 as u32)
    }

    fn operand(self) -> Option<Operand> {
        match self.class() {
            Class::Nan => None,
            Class::Zero { neg } => Some(Operand::Finite(Exact::zero(neg))),
            Class::Finite { neg, sig, exp2 } => Some(Operand::Finite(Exact { neg, mag: sig as u128, exp2 })),
            Class::Inf { neg } => Some(Operand::Inf(neg)),
        }
    }

    /// Exact value as a double (every binary16 value is representable).
    pub fn to_f64(self) -> f64 {
        match self.class() {
            Class::Nan => f64::NAN,
            Class::Zero { neg } => {
                if neg {
                    -0.0
                } else {
                    0.0
                }
            }
            Class::Inf { neg } => {
                if neg {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            Class::Finite { neg, sig, exp2 } => {
                let v = sig as f64 * (exp2 as f64).exp2();
                if neg {
                    -v
                } else {
                    v
                }
            }
        }
    }

    /// Rounds a double to the nearest binary16 (single rounding, ties to even).
    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            return Fp16::NAN;
        }
        if v.is_infinite() {
            return if v < 0.0 { Fp16::NEG_INFINITY } else { Fp16::INFINITY };
        }
        let (neg, mag, exp2) = split_f64(v);
        Fp16(round_pack(neg, mag, exp2, BINARY16) as u16)
    }

    /// Fused multiply-add `self · b + c` with a single rounding.
    pub fn mul_add(self, b: Fp16, c: Fp16) -> Fp16 {
        let (Some(a), Some(b), Some(c)) = (self.operand(), b.operand(), c.operand()) else {
            return Fp16::NAN;
        };
        let product = match (a, b) {
            (Operand::Inf(_), Operand::Finite(z)) | (Operand::Finite(z), Operand::Inf(_)) if z.mag == 0 => {
                return Fp16::NAN;
            }
            (Operand::Inf(sa), Operand::Inf(sb)) => Operand::Inf(sa != sb),
            (Operand::Inf(sa), Operand::Finite(f)) | (Operand::Finite(f), Operand::Inf(sa)) => {
                Operand::Inf(sa != f.neg)
            }
            (Operand::Finite(x), Operand::Finite(y)) => {
                Operand::Finite(Exact { neg: x.neg != y.neg, mag: x.mag * y.mag, exp2: x.exp2 + y.exp2 })
            }
        };
        let result = match (product, c) {
            (Operand::Inf(sp), Operand::Inf(sc)) if sp != sc => return Fp16::NAN,
            (Operand::Inf(sp), _) | (Operand::Finite(_), Operand::Inf(sp)) => {
                return if sp { Fp16::NEG_INFINITY } else { Fp16::INFINITY };
            }
            (Operand::Finite(p), Operand::Finite(c)) => p.sum(c),
        };
        #[cfg(feature = "fault-injection")]
        {
            if let Some(faulty) = fault::flip_rounding(result) {
                return faulty;
            }
        }
        result.round()
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, b: Fp16) -> Fp16 {
        match (self.operand(), b.operand()) {
            (Some(Operand::Finite(x)), Some(Operand::Finite(y))) => x.sum(y).round(),
            (Some(Operand::Inf(sa)), Some(Operand::Inf(sb))) if sa != sb => Fp16::NAN,
            (Some(Operand::Inf(_)), Some(_)) => self,
            (Some(_), Some(Operand::Inf(_))) => b,
            _ => Fp16::NAN,
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, b: Fp16) -> Fp16 {
        match (self.operand(), b.operand()) {
            (Some(Operand::Finite(x)), Some(Operand::Finite(y))) => {
                Exact { neg: x.neg != y.neg, mag: x.mag * y.mag, exp2: x.exp2 + y.exp2 }.round()
            }
            (Some(Operand::Inf(_)), Some(Operand::Finite(z))) | (Some(Operand::Finite(z)), Some(Operand::Inf(_)))
                if z.mag == 0 =>
            {
                Fp16::NAN
            }
            (Some(_), Some(_)) => {
                if self.is_sign_negative() != b.is_sign_negative() {
                    Fp16::NEG_INFINITY
                } else {
                    Fp16::INFINITY
                }
            }
            _ => Fp16::NAN,
        }
    }

    /// Ordering key for non-NaN codes with `-0 < +0`.
    fn order_key(self) -> i32 {
        let mag = (self.0 & 0x7FFF) as i32;
        if self.is_sign_negative() {
            -mag - 1
        } else {
            mag
        }
    }

    /// FNCOMP min/max: NaN-suppressing (a single NaN operand yields the other
    /// operand), two NaNs yield the canonical NaN, and `-0` orders below `+0`.
    pub fn min_max(self, b: Fp16, op: MinMax) -> Fp16 {
        match (self.is_nan(), b.is_nan()) {
            (true, true) => return Fp16::NAN,
            (true, false) => return b,
            (false, true) => return self,
            (false, false) => {}
        }
        let a_first = match op {
            MinMax::Min => self.order_key() <= b.order_key(),
            MinMax::Max => self.order_key() >= b.order_key(),
        };
        if a_first {
            self
        } else {
            b
        }
    }

    pub fn min(self, b: Fp16) -> Fp16 {
        self.min_max(b, MinMax::Min)
    }

    pub fn max(self, b: Fp16) -> Fp16 {
        self.min_max(b, MinMax::Max)
    }
}

/// `fma16(a, b, c)`: fused multiply-add with one rounding step.
pub fn fma16(a: Fp16, b: Fp16, c: Fp16) -> Fp16 {
    a.mul_add(b, c)
}

pub fn add16(a: Fp16, b: Fp16) -> Fp16 {
    a.add(b)
}

pub fn mul16(a: Fp16, b: Fp16) -> Fp16 {
    a.mul(b)
}

pub fn fncomp16(a: Fp16, b: Fp16, op: MinMax) -> Fp16 {
    a.min_max(b, op)
}

impl fmt::Debug for Fp16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:04x} ({})", self.0, self.to_f64())
    }
}

impl fmt::Display for Fp16 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

#[cfg(feature = "fault-injection")]
mod fault {
    use super::{Exact, Fp16};
    use crate::fp::round::{round_pack, BINARY16};

    /// Nudges the exact result up by half of its lowest bit before rounding,
    /// for one seeded family of results. Exact ties, and exact results that
    /// fit the format with an odd last bit, come out one ulp off.
    pub(super) fn flip_rounding(exact: Exact) -> Option<Fp16> {
        const SEED: u32 = 1;
        let nearest = round_pack(exact.neg, exact.mag, exact.exp2, BINARY16) as u16;
        let bumped = round_pack(exact.neg, exact.mag * 2 + 1, exact.exp2 - 1, BINARY16) as u16;
        (nearest != bumped && (exact.mag.count_ones() + SEED) % 4 == 0).then_some(Fp16(bumped))
    }
}
