mod common;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use redmule_sim::fp::{add16, fma16, fncomp16, mul16, MinMax};
use redmule_sim::Fp16;

fn h(v: f64) -> Fp16 {
    Fp16::from_f64(v)
}

fn same(a: Fp16, b: u16) -> bool {
    if a.is_nan() {
        Fp16::from_bits(b).is_nan()
    } else {
        a.to_bits() == b
    }
}

#[test]
fn fma_matches_exact_oracle_on_a_million_triples() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xF3A);
    for i in 0..1_000_000 {
        let (a, b) = (common::random_fp16(&mut rng), common::random_fp16(&mut rng));
        // every fourth addend sits near -a·b so that the sum cancels
        let c = if i % 4 == 0 {
            let p = mul16(Fp16::from_bits(a), Fp16::from_bits(b)).neg().to_bits();
            if p & 0x7C00 == 0x7C00 {
                p
            } else {
                p.wrapping_add(rng.gen_range(0..8)).wrapping_sub(4)
            }
        } else {
            common::random_fp16(&mut rng)
        };
        let got = fma16(Fp16::from_bits(a), Fp16::from_bits(b), Fp16::from_bits(c));
        let want = common::fma_oracle(a, b, c);
        assert!(same(got, want), "fma({a:#06x}, {b:#06x}, {c:#06x}) = {got:?}, oracle {want:#06x}");
    }
}

#[test]
fn fma_with_zero_addend_equals_mul() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xF3B);
    let special = |x: u16| x & 0x7C00 == 0x7C00;
    let check = |a: u16, b: u16| {
        if special(a) || special(b) {
            return;
        }
        let (fa, fb) = (Fp16::from_bits(a), Fp16::from_bits(b));
        let prod = mul16(fa, fb);
        let fused = fma16(fa, fb, Fp16::ZERO);
        // an exact zero product plus +0 is +0; a tiny product that rounds to
        // -0 keeps its sign
        if prod.to_bits() == 0x8000 && (a & 0x7FFF == 0 || b & 0x7FFF == 0) {
            assert_eq!(fused.to_bits(), 0x0000);
        } else {
            assert_eq!(fused.to_bits(), prod.to_bits(), "{fa:?} * {fb:?}");
        }
    };
    for _ in 0..1_000_000 {
        check(rng.gen(), rng.gen());
    }
    // products of small integers and powers of two are exact
    for i in -64i32..=64 {
        for j in -64i32..=64 {
            check(h(i as f64).to_bits(), h(j as f64).to_bits());
        }
        for e in -24..=15 {
            check(h(i as f64).to_bits(), h(2f64.powi(e)).to_bits());
        }
    }
}

#[test]
fn add_and_mul_agree_with_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xADD);
    let one = Fp16::ONE.to_bits();
    for _ in 0..200_000 {
        let (a, b) = (common::random_fp16(&mut rng), common::random_fp16(&mut rng));
        let s = add16(Fp16::from_bits(a), Fp16::from_bits(b));
        assert!(same(s, common::fma_oracle(a, one, b)), "{a:#06x} + {b:#06x}");
        let p = mul16(Fp16::from_bits(a), Fp16::from_bits(b));
        // x·y + (-0) is x·y rounded, including the sign of zero products
        assert!(same(p, common::fma_oracle(a, b, 0x8000)), "{a:#06x} * {b:#06x}");
    }
}

#[test]
fn documented_examples() {
    assert_eq!(add16(h(1.5), h(2.5)).to_f64(), 4.0);
    assert_eq!(mul16(Fp16::NEG_ZERO, h(5.0)).to_bits(), 0x8000);
    assert_eq!(add16(h(60000.0), h(8192.0)).to_bits(), Fp16::INFINITY.to_bits());
    assert_eq!(fncomp16(h(3.0), h(-1.0), MinMax::Min).to_f64(), -1.0);
    assert_eq!(fncomp16(Fp16::NAN, h(7.0), MinMax::Max).to_f64(), 7.0);
    for (a, b) in [(0x0000, 0x8000), (0x8000, 0x0000), (0x0000, 0x0000), (0x8000, 0x8000)] {
        let (fa, fb) = (Fp16::from_bits(a), Fp16::from_bits(b));
        let max = fncomp16(fa, fb, MinMax::Max).to_bits();
        let min = fncomp16(fa, fb, MinMax::Min).to_bits();
        assert_eq!(max, a & b, "max({a:#06x}, {b:#06x})");
        assert_eq!(min, a | b, "min({a:#06x}, {b:#06x})");
    }
}

/// Rank in the total order used by FNCOMP: -inf < ... < -0 < +0 < ... < +inf.
fn rank(bits: u16) -> i32 {
    let mag = (bits & 0x7FFF) as i32;
    if bits & 0x8000 != 0 {
        -mag - 1
    } else {
        mag
    }
}

fn fncomp_pair(a: u16, b: u16) {
    let (fa, fb) = (Fp16::from_bits(a), Fp16::from_bits(b));
    let min = fncomp16(fa, fb, MinMax::Min);
    let max = fncomp16(fa, fb, MinMax::Max);
    match (fa.is_nan(), fb.is_nan()) {
        (true, true) => assert!(min.is_nan() && max.is_nan()),
        (true, false) => assert!(min.to_bits() == b && max.to_bits() == b),
        (false, true) => assert!(min.to_bits() == a && max.to_bits() == a),
        (false, false) => {
            let (lo, hi) = if rank(a) <= rank(b) { (a, b) } else { (b, a) };
            assert_eq!((min.to_bits(), max.to_bits()), (lo, hi), "{a:#06x} {b:#06x}");
            assert_eq!(fncomp16(fb, fa, MinMax::Min).to_bits(), lo);
            let dual = fncomp16(fa.neg(), fb.neg(), MinMax::Max).neg();
            assert_eq!(dual.to_bits(), lo, "duality {a:#06x} {b:#06x}");
        }
    }
}

/// Every code against a stratified partner set holding all zeros,
/// infinities, NaN boundaries, subnormal and normal extremes and every 61st
/// code. The full cross product runs with `--ignored`.
#[test]
fn fncomp_every_code_against_stratified_partners() {
    let mut partners: Vec<u16> = (0..=u16::MAX).step_by(61).collect();
    for base in [0x0000u16, 0x8000] {
        partners.extend([0x0000, 0x0001, 0x03FF, 0x0400, 0x3C00, 0x7BFF, 0x7C00, 0x7C01, 0x7E00, 0x7FFF].map(|c| c | base));
    }
    for a in 0..=u16::MAX {
        for &b in &partners {
            fncomp_pair(a, b);
        }
    }
}

#[test]
#[ignore = "2^32 pairs; about two minutes on one core"]
fn fncomp_exhaustive() {
    for a in 0..=u16::MAX {
        for b in 0..=u16::MAX {
            fncomp_pair(a, b);
        }
    }
}
