use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::fp16::Fp16;
use super::round::{round_pack, split_f64, Class, Layout, BINARY16, E4M3, E5M2};

/// The two 8-bit layouts of hybrid FP8.
///
/// * `E4M3`: {1,4,3}, bias 7, no infinities, a single NaN magnitude
///   (`S.1111.111`), largest finite 448. Overflow saturates.
/// * `E5M2`: {1,5,2}, bias 15, IEEE-style infinities and NaNs, largest
///   finite 57344. Overflow produces infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fp8Format {
    #[serde(alias = "E4M3")]
    E4M3,
    #[serde(alias = "E5M2")]
    E5M2,
}

impl Fp8Format {
    pub const ALL: [Fp8Format; 2] = [Fp8Format::E4M3, Fp8Format::E5M2];

    pub(crate) fn layout(self) -> Layout {
        match self {
            Fp8Format::E4M3 => E4M3,
            Fp8Format::E5M2 => E5M2,
        }
    }

    /// Canonical NaN magnitude (sign bit clear).
    pub fn nan_bits(self) -> u8 {
        match self {
            Fp8Format::E4M3 => 0x7F,
            Fp8Format::E5M2 => 0x7E,
        }
    }

    pub fn max_finite(self) -> Fp8 {
        Fp8::from_bits(self.layout().max_finite() as u8, self)
    }
}

impl fmt::Display for Fp8Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fp8Format::E4M3 => "e4m3",
            Fp8Format::E5M2 => "e5m2",
        })
    }
}

impl FromStr for Fp8Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "e4m3" => Ok(Fp8Format::E4M3),
            "e5m2" => Ok(Fp8Format::E5M2),
            other => Err(format!("unknown FP8 format `{other}` (expected e4m3 or e5m2)")),
        }
    }
}

/// An 8-bit float code tagged with its layout.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fp8 {
    bits: u8,
    format: Fp8Format,
}

impl Fp8 {
    pub const fn from_bits(bits: u8, format: Fp8Format) -> Self {
        Fp8 { bits, format }
    }

    pub const fn to_bits(self) -> u8 {
        self.bits
    }

    pub const fn format(self) -> Fp8Format {
        self.format
    }

    pub fn is_nan(self) -> bool {
        self.class() == Class::Nan
    }

    fn class(self) -> Class {
        self.format.layout().classify(self.bits as u32)
    }

    /// Widens to binary16. Exact for every non-NaN code; NaNs become the
    /// canonical binary16 quiet NaN carrying the input sign.
    pub fn to_fp16(self) -> Fp16 {
        let sign = if self.bits & 0x80 != 0 { 0x8000 } else { 0 };
        let bits = match self.class() {
            Class::Nan => Fp16::NAN.to_bits() | sign,
            Class::Zero { .. } => sign,
            Class::Inf { .. } => Fp16::INFINITY.to_bits() | sign,
            Class::Finite { neg, sig, exp2 } => round_pack(neg, sig as u128, exp2, BINARY16) as u16,
        };
        Fp16::from_bits(bits)
    }

    /// Narrows a binary16 value with round-to-nearest-even. Out-of-range
    /// magnitudes (infinity included) saturate in E4M3 and overflow to
    /// infinity in E5M2.
    pub fn from_fp16(x: Fp16, format: Fp8Format) -> Self {
        let bits = x.to_bits();
        let sign: u8 = if bits & 0x8000 != 0 { 0x80 } else { 0 };
        let layout = format.layout();
        let code = match BINARY16.classify(bits as u32) {
            Class::Nan => sign | format.nan_bits(),
            Class::Zero { .. } => sign,
            Class::Inf { .. } => match format {
                Fp8Format::E4M3 => sign | layout.max_finite() as u8,
                Fp8Format::E5M2 => sign | 0x7C,
            },
            Class::Finite { neg, sig, exp2 } => round_pack(neg, sig as u128, exp2, layout) as u8,
        };
        Fp8::from_bits(code, format)
    }

    /// Narrows a double directly (one rounding), same overflow policy as
    /// [`Fp8::from_fp16`].
    pub fn from_f64(v: f64, format: Fp8Format) -> Self {
        let layout = format.layout();
        let sign: u8 = if v.is_sign_negative() { 0x80 } else { 0 };
        let code = if v.is_nan() {
            format.nan_bits()
        } else if v.is_infinite() {
            match format {
                Fp8Format::E4M3 => sign | layout.max_finite() as u8,
                Fp8Format::E5M2 => sign | 0x7C,
            }
        } else {
            let (neg, mag, exp2) = split_f64(v);
            round_pack(neg, mag, exp2, layout) as u8
        };
        Fp8::from_bits(code, format)
    }

    pub fn to_f64(self) -> f64 {
        self.to_fp16().to_f64()
    }
}

/// Input cast unit: FP8 → binary16.
pub fn cast_fp8_to_fp16(x: Fp8) -> Fp16 {
    x.to_fp16()
}

/// Output cast unit: binary16 → FP8.
pub fn cast_fp16_to_fp8(x: Fp16, format: Fp8Format) -> Fp8 {
    Fp8::from_fp16(x, format)
}

impl fmt::Debug for Fp8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:0x{:02x} ({})", self.format, self.bits, self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_in_both_formats() {
        assert_eq!(Fp8::from_bits(0x3C, Fp8Format::E5M2).to_fp16(), Fp16::ONE);
        assert_eq!(Fp8::from_bits(0x38, Fp8Format::E4M3).to_fp16(), Fp16::ONE);
        assert_eq!(cast_fp16_to_fp8(Fp16::ONE, Fp8Format::E4M3).to_bits(), 0x38);
    }

    #[test]
    fn e4m3_extremes() {
        assert_eq!(Fp8::from_bits(0x7E, Fp8Format::E4M3).to_f64(), 448.0);
        assert_eq!(Fp8::from_bits(0x01, Fp8Format::E4M3).to_f64(), 2f64.powi(-9));
        assert!(Fp8::from_bits(0x7F, Fp8Format::E4M3).to_fp16().is_nan());
        assert!(Fp8::from_bits(0xFF, Fp8Format::E4M3).to_fp16().is_nan());
        // 0x78.. 0x7E are ordinary finite values in E4M3
        assert_eq!(Fp8::from_bits(0x78, Fp8Format::E4M3).to_f64(), 256.0);
    }

    #[test]
    fn saturation_and_overflow() {
        let big = Fp16::from_f64(65504.0);
        assert_eq!(cast_fp16_to_fp8(big, Fp8Format::E4M3).to_bits(), 0x7E);
        assert_eq!(cast_fp16_to_fp8(big.neg(), Fp8Format::E4M3).to_bits(), 0xFE);
        assert_eq!(cast_fp16_to_fp8(big, Fp8Format::E5M2).to_bits(), 0x7C);
        assert_eq!(cast_fp16_to_fp8(Fp16::INFINITY, Fp8Format::E4M3).to_bits(), 0x7E);
        assert_eq!(cast_fp16_to_fp8(Fp16::NEG_INFINITY, Fp8Format::E5M2).to_bits(), 0xFC);
        // 57344 + half an ulp (61440) ties to the even neighbour, which is infinity
        assert_eq!(cast_fp16_to_fp8(Fp16::from_f64(61440.0), Fp8Format::E5M2).to_bits(), 0x7C);
        assert_eq!(cast_fp16_to_fp8(Fp16::from_f64(61408.0), Fp8Format::E5M2).to_bits(), 0x7B);
    }

    #[test]
    fn nan_survives_narrowing() {
        assert!(cast_fp16_to_fp8(Fp16::NAN, Fp8Format::E4M3).is_nan());
        assert!(cast_fp16_to_fp8(Fp16::NAN, Fp8Format::E5M2).is_nan());
    }

    #[test]
    fn e5m2_is_the_top_byte_of_binary16() {
        for bits in 0..=u8::MAX {
            let x = Fp8::from_bits(bits, Fp8Format::E5M2);
            if !x.is_nan() {
                assert_eq!(x.to_fp16().to_bits(), (bits as u16) << 8);
            }
        }
    }

    #[test]
    fn direct_double_narrowing_matches_exact_inputs() {
        for format in Fp8Format::ALL {
            for bits in 0..=u8::MAX {
                let x = Fp8::from_bits(bits, format);
                if !x.is_nan() {
                    assert_eq!(Fp8::from_f64(x.to_f64(), format), x);
                }
            }
        }
    }
}
