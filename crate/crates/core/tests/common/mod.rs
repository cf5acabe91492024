//! Oracles shared by the integration tests. None of them call into the
//! arithmetic or tiling code they check.

#![allow(dead_code)]

use num_bigint::BigInt;
use rand::Rng;
use redmule_sim::{Fp16, Fp8Format, Matrix};

/// Exact value of a finite binary16 code as `(numerator, 2^-24 units)`.
fn fp16_units(bits: u16) -> i64 {
    let e = ((bits >> 10) & 0x1F) as i64;
    let m = (bits & 0x3FF) as i64;
    let mag = if e == 0 { m } else { (1024 + m) << (e - 1) };
    if bits & 0x8000 != 0 {
        -mag
    } else {
        mag
    }
}

fn is_nan16(bits: u16) -> bool {
    bits & 0x7C00 == 0x7C00 && bits & 0x3FF != 0
}

fn is_inf16(bits: u16) -> bool {
    bits & 0x7FFF == 0x7C00
}

fn is_zero16(bits: u16) -> bool {
    bits & 0x7FFF == 0
}

/// Rounds `num · 2^-48` (non-zero) to binary16, nearest with ties to even.
fn round_units48(num: &BigInt) -> u16 {
    let neg = num.sign() == num_bigint::Sign::Minus;
    let mag = if neg { -num.clone() } else { num.clone() };
    let scaled = |code: u16| BigInt::from(fp16_units(code)) << 24u32;
    // largest positive finite code not above `mag`
    let (mut lo, mut hi) = (0u16, 0x7BFFu16);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if scaled(mid) <= mag {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let below = scaled(lo);
    // the code above 0x7BFF stands for 2^16, the rounding boundary to inf
    let above = if lo == 0x7BFF { BigInt::from(1u64 << 40) << 24u32 } else { scaled(lo + 1) };
    let code = if below == mag {
        lo
    } else {
        let d_lo = &mag - &below;
        let d_hi = &above - &mag;
        if d_lo < d_hi || (d_lo == d_hi && lo % 2 == 0) {
            lo
        } else {
            lo + 1
        }
    };
    let code = if code > 0x7BFF { 0x7C00 } else { code };
    code | if neg { 0x8000 } else { 0 }
}

/// Exact `a·b + c` followed by a single RNE rounding.
pub fn fma_oracle(a: u16, b: u16, c: u16) -> u16 {
    const NAN: u16 = 0x7E00;
    if is_nan16(a) || is_nan16(b) || is_nan16(c) {
        return NAN;
    }
    let psign = (a ^ b) & 0x8000;
    if is_inf16(a) || is_inf16(b) {
        if is_zero16(a) || is_zero16(b) {
            return NAN;
        }
        if is_inf16(c) && (c & 0x8000) != psign {
            return NAN;
        }
        return 0x7C00 | psign;
    }
    if is_inf16(c) {
        return c;
    }
    let num = BigInt::from(fp16_units(a)) * BigInt::from(fp16_units(b)) + (BigInt::from(fp16_units(c)) << 24u32);
    if num == BigInt::from(0) {
        let product_zero_sign = is_zero16(a) || is_zero16(b);
        let csign = c & 0x8000;
        // exact zero: -0 only when both terms are -0-signed zeros
        if product_zero_sign && is_zero16(c) && psign == 0x8000 && csign == 0x8000 {
            return 0x8000;
        }
        return 0;
    }
    round_units48(&num)
}

/// Random binary16 code: half uniform over all codes, half near 1.0 in
/// magnitude so that sums cancel often.
pub fn random_fp16<R: Rng>(rng: &mut R) -> u16 {
    if rng.gen_bool(0.5) {
        rng.gen()
    } else {
        let sign: u16 = if rng.gen_bool(0.5) { 0x8000 } else { 0 };
        let exp: u16 = rng.gen_range(10..=20);
        sign | (exp << 10) | rng.gen_range(0..1024)
    }
}

/// Decodes an FP8 code from its bit fields.
pub fn fp8_value(code: u8, format: Fp8Format) -> f64 {
    let (ebits, mbits, bias) = match format {
        Fp8Format::E4M3 => (4, 3, 7),
        Fp8Format::E5M2 => (5, 2, 15),
    };
    let sign = if code & 0x80 != 0 { -1.0 } else { 1.0 };
    let e = ((code & 0x7F) >> mbits) as i32;
    let m = (code & ((1 << mbits) - 1)) as f64;
    let emax = (1 << ebits) - 1;
    match format {
        Fp8Format::E4M3 if e == emax && m == 7.0 => return f64::NAN,
        Fp8Format::E5M2 if e == emax => return if m == 0.0 { sign * f64::INFINITY } else { f64::NAN },
        _ => {}
    }
    let scale = (1u32 << mbits) as f64;
    if e == 0 {
        sign * m / scale * 2f64.powi(1 - bias)
    } else {
        sign * (1.0 + m / scale) * 2f64.powi(e - bias)
    }
}

/// Nearest FP8 code by exhaustive search, ties to the even code. Beyond the
/// largest finite value E4M3 saturates; E5M2 treats infinity as the next
/// step (65536) so that halfway values round up to it.
pub fn fp8_nearest(x: f64, format: Fp8Format) -> u8 {
    let sign: u8 = if x.is_sign_negative() { 0x80 } else { 0 };
    if x.is_nan() {
        return match format {
            Fp8Format::E4M3 => sign | 0x7F,
            Fp8Format::E5M2 => sign | 0x7E,
        };
    }
    let mag = x.abs();
    let candidates: Vec<(u8, f64)> = (0u8..0x80)
        .filter_map(|c| {
            let v = fp8_value(c, format);
            if v.is_nan() {
                None
            } else if v.is_infinite() {
                Some((c, 65536.0))
            } else {
                Some((c, v))
            }
        })
        .collect();
    if mag.is_infinite() {
        return sign
            | match format {
                Fp8Format::E4M3 => 0x7E,
                Fp8Format::E5M2 => 0x7C,
            };
    }
    let mut best = candidates[0];
    for &(c, v) in &candidates[1..] {
        let (d, db) = ((v - mag).abs(), (best.1 - mag).abs());
        if d < db || (d == db && c % 2 == 0) {
            best = (c, v);
        }
    }
    sign | best.0
}

pub fn floyd_warshall(w: &Matrix<Fp16>) -> Vec<Vec<f64>> {
    closure(w, |cur, a, b| cur.min(a + b))
}

pub fn widest_paths(w: &Matrix<Fp16>) -> Vec<Vec<f64>> {
    closure(w, |cur, a, b| cur.max(a.min(b)))
}

pub fn minimax_paths(w: &Matrix<Fp16>) -> Vec<Vec<f64>> {
    closure(w, |cur, a, b| cur.min(a.max(b)))
}

fn closure(w: &Matrix<Fp16>, relax: impl Fn(f64, f64, f64) -> f64) -> Vec<Vec<f64>> {
    let n = w.rows();
    let mut d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| w.get(i, j).to_f64()).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = relax(d[i][j], d[i][k], d[k][j]);
            }
        }
    }
    d
}

pub fn equals(z: &Matrix<Fp16>, expect: &[Vec<f64>]) -> bool {
    (0..z.rows()).all(|i| (0..z.cols()).all(|j| z.get(i, j).to_f64() == expect[i][j]))
}

/// Per-output dot product `Σ x·w + y` in double precision together with the
/// magnitude `Σ |x·w| + |y|` that bounds its rounding error.
pub fn wide_matmul(x: &Matrix<Fp16>, w: &Matrix<Fp16>, y: &Matrix<Fp16>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for m in 0..x.rows() {
        for k in 0..w.cols() {
            let mut s = y.get(m, k).to_f64();
            let mut a = s.abs();
            for n in 0..x.cols() {
                let p = x.get(m, n).to_f64() * w.get(n, k).to_f64();
                s += p;
                a += p.abs();
            }
            out.push((s, a));
        }
    }
    out
}
