//! Self-checks run by `redmule-sim verify`. Each property uses its own
//! reference: exact integer arithmetic for the FMA, exhaustive search for
//! the FP8 casts, the golden model for the engine and Floyd-Warshall style
//! closures for the graph drivers.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use redmule_sim::fp::{fma16, fncomp16, MinMax};
use redmule_sim::report::auto_port_bits;
use redmule_sim::workloads::{gen_problem, oracles, solve, Distribution, EngineBackend, GraphInstance, GraphProblem};
use redmule_sim::{
    gemm_op_reference, kernel_table, run_native, ArrayConfig, Dims, Fp16, Fp8, Fp8Format, IoMatrix, IoPrecision,
    MemoryModel, SimParams, StallPattern,
};

type Outcome = Result<String, String>;

struct Sizes {
    fma_triples: usize,
    fncomp_pairs: usize,
    engine_cases: usize,
    graphs: usize,
    apsp_nodes: usize,
    capacity_nodes: usize,
}

const QUICK: Sizes =
    Sizes { fma_triples: 100_000, fncomp_pairs: 200_000, engine_cases: 6, graphs: 3, apsp_nodes: 16, capacity_nodes: 12 };
const FULL: Sizes =
    Sizes { fma_triples: 1_000_000, fncomp_pairs: 4_000_000, engine_cases: 40, graphs: 20, apsp_nodes: 32, capacity_nodes: 24 };

type Check<'a> = (&'a str, &'a dyn Fn(&Sizes) -> Outcome);

pub fn run(quick: bool) -> Result<(), String> {
    let sizes = if quick { &QUICK } else { &FULL };
    let checks: [Check; 7] = [
        ("fp8 round trip", &|_| fp8_round_trip()),
        ("fp8 nearest-even casts", &|_| fp8_casts()),
        ("fma exact rounding", &fma_exact),
        ("fncomp ordering", &fncomp_order),
        ("engine equals golden model", &engine_equivalence),
        ("kernel cycle invariance", &|_| kernel_invariance()),
        ("graph oracles", &graphs),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        let t = Instant::now();
        match check(sizes) {
            Ok(detail) => println!("PASS {name} ({:.1}s): {detail}", t.elapsed().as_secs_f64()),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("verify: all {} properties pass", checks.len());
        Ok(())
    } else {
        Err(format!("failing properties: {}", failed.join(", ")))
    }
}

fn fp8_round_trip() -> Outcome {
    for f in Fp8Format::ALL {
        for code in 0..=255u8 {
            let v = Fp8::from_bits(code, f);
            if v.is_nan() {
                continue;
            }
            let back = Fp8::from_fp16(v.to_fp16(), f);
            if back.to_bits() != code {
                return Err(format!("{f} code {code:#04x} came back as {:#04x}", back.to_bits()));
            }
        }
    }
    Ok("2 x 256 codes".into())
}

fn fp8_casts() -> Outcome {
    for f in Fp8Format::ALL {
        // finite magnitudes, with E5M2 infinity placed one step past the top
        let table: Vec<(u8, f64)> = (0u8..0x80)
            .filter_map(|c| {
                let v = Fp8::from_bits(c, f);
                if v.is_nan() {
                    None
                } else if v.to_f64().is_infinite() {
                    Some((c, 65536.0))
                } else {
                    Some((c, v.to_f64()))
                }
            })
            .collect();
        let top = table.iter().filter(|e| e.1 < 65536.0).map(|e| e.0).max().unwrap_or(0);
        for bits in 0..=u16::MAX {
            let h = Fp16::from_bits(bits);
            let got = Fp8::from_fp16(h, f);
            if h.is_nan() {
                if !got.is_nan() {
                    return Err(format!("{f}: NaN {bits:#06x} narrowed to a number"));
                }
                continue;
            }
            let x = h.to_f64();
            let mag = x.abs();
            let code = if mag.is_infinite() {
                match f {
                    Fp8Format::E4M3 => top,
                    Fp8Format::E5M2 => table.iter().find(|e| e.1 == 65536.0).map_or(top, |e| e.0),
                }
            } else {
                let mut best = table[0];
                for &(c, v) in &table[1..] {
                    let (d, db) = ((v - mag).abs(), (best.1 - mag).abs());
                    if d < db || (d == db && c % 2 == 0) {
                        best = (c, v);
                    }
                }
                best.0
            };
            let want = code | if x.is_sign_negative() { 0x80 } else { 0 };
            if got.to_bits() != want {
                return Err(format!("{f}: {h:?} -> {:#04x}, expected {want:#04x}", got.to_bits()));
            }
        }
    }
    Ok("2 x 65536 inputs".into())
}

/// Finite binary16 value in units of `2^-24`.
fn units(bits: u16) -> i128 {
    let e = ((bits >> 10) & 0x1F) as i128;
    let m = (bits & 0x3FF) as i128;
    let mag = if e == 0 { m } else { (1024 + m) << (e - 1) };
    if bits & 0x8000 != 0 {
        -mag
    } else {
        mag
    }
}

/// `a·b + c` computed exactly in units of `2^-48`, rounded once.
fn fma_reference(a: u16, b: u16, c: u16) -> Option<u16> {
    let special = |x: u16| x & 0x7C00 == 0x7C00;
    if special(a) || special(b) || special(c) {
        return None;
    }
    let exact = units(a) * units(b) + (units(c) << 24);
    if exact == 0 {
        let both_negative_zeros = (a ^ b) & 0x8000 != 0 && (units(a) == 0 || units(b) == 0) && c == 0x8000;
        return Some(if both_negative_zeros { 0x8000 } else { 0 });
    }
    let mag = exact.abs();
    let value = |code: u16| units(code) << 24;
    let (mut lo, mut hi) = (0u16, 0x7BFF);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if value(mid) <= mag {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let above = if lo == 0x7BFF { 1i128 << 64 } else { value(lo + 1) };
    let (d_lo, d_hi) = (mag - value(lo), above - mag);
    let code = if d_lo < d_hi || (d_lo == d_hi && lo % 2 == 0) { lo } else { lo + 1 };
    Some(code.min(0x7C00) | if exact < 0 { 0x8000 } else { 0 })
}

fn fma_exact(s: &Sizes) -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0x5EED);
    let mut checked = 0;
    for i in 0..s.fma_triples {
        let a: u16 = rng.gen();
        let b: u16 = rng.gen();
        // zero and nearby addends make exactly-halfway products common
        let c: u16 = match i % 3 {
            0 => 0,
            1 => rng.gen(),
            _ => (rng.gen_range(0x3000u16..0x5000)) | (rng.gen::<u16>() & 0x8000),
        };
        if let Some(want) = fma_reference(a, b, c) {
            checked += 1;
            let got = fma16(Fp16::from_bits(a), Fp16::from_bits(b), Fp16::from_bits(c));
            if got.to_bits() != want {
                return Err(format!("fma({a:#06x}, {b:#06x}, {c:#06x}) = {got:?}, exact rounding gives {want:#06x}"));
            }
        }
    }
    Ok(format!("{checked} finite triples"))
}

fn fncomp_order(s: &Sizes) -> Outcome {
    let key = |x: u16| if x & 0x8000 != 0 { -((x & 0x7FFF) as i32) - 1 } else { x as i32 };
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xC0);
    for i in 0..s.fncomp_pairs + 4 {
        let (a, b): (u16, u16) = if i < 4 { ([0, 0x8000][i & 1], [0, 0x8000][i >> 1]) } else { (rng.gen(), rng.gen()) };
        let (fa, fb) = (Fp16::from_bits(a), Fp16::from_bits(b));
        let (min, max) = (fncomp16(fa, fb, MinMax::Min), fncomp16(fa, fb, MinMax::Max));
        let want = match (fa.is_nan(), fb.is_nan()) {
            (true, true) => None,
            (true, false) => Some((b, b)),
            (false, true) => Some((a, a)),
            (false, false) => Some(if key(a) <= key(b) { (a, b) } else { (b, a) }),
        };
        let ok = match want {
            None => min.is_nan() && max.is_nan(),
            Some((lo, hi)) => min.to_bits() == lo && max.to_bits() == hi,
        };
        if !ok {
            return Err(format!("min/max({a:#06x}, {b:#06x}) = ({min:?}, {max:?})"));
        }
    }
    Ok(format!("{} pairs", s.fncomp_pairs + 4))
}

fn engine_equivalence(s: &Sizes) -> Outcome {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(0xE9);
    let mut runs = 0;
    for kernel in kernel_table() {
        for _ in 0..s.engine_cases {
            let (l, h, p) = loop {
                let t = (rng.gen_range(1..=12), rng.gen_range(1..=8), rng.gen_range(1..=4));
                if t.0 <= t.1 * t.2 * (t.2 + 1) {
                    break t;
                }
            };
            let fp8 = rng.gen_bool(0.25);
            let io = if fp8 { IoPrecision::Fp8 } else { IoPrecision::Fp16 };
            let cfg = ArrayConfig { rows: l, cols: h, pipe_regs: p, port_bits: auto_port_bits(l, h, p, io), io };
            let dims = Dims::new(rng.gen_range(1..=40), rng.gen_range(1..=40), rng.gen_range(1..=40));
            let memory = match rng.gen_range(0..3) {
                0 => MemoryModel::Ideal,
                1 => MemoryModel::FixedLatency(rng.gen_range(1..4)),
                _ => MemoryModel::StallPattern(StallPattern::new((0..20).map(|_| rng.gen_range(0..2000)))),
            };
            let (x, w, y) = gen_problem(rng.gen(), dims, Distribution::Unit);
            let fail = |what: &str| format!("{kernel} {dims} on {cfg} with {memory}: {what}");
            let params = SimParams::default();
            if fp8 {
                let narrow = |m: redmule_sim::Matrix<Fp16>| IoMatrix::Fp8(m.map(|v| Fp8::from_fp16(v, Fp8Format::E4M3)));
                let (x, w, y) = (narrow(x), narrow(w), narrow(y));
                let out = redmule_sim::run(&cfg, kernel, &x, &w, &y, &memory, &params).map_err(|e| fail(&e.to_string()))?;
                let golden = gemm_op_reference(kernel, &x.widen(), &w.widen(), &y.widen()).map_err(|e| e.to_string())?;
                let want = golden.map(|v| Fp8::from_fp16(v, params.z_format));
                match out.z {
                    IoMatrix::Fp8(z) if z == want => {}
                    _ => return Err(fail("FP8 output differs")),
                }
            } else {
                let (z, _, _) = run_native(&cfg, kernel, &x, &w, &y, &memory, &params).map_err(|e| fail(&e.to_string()))?;
                let golden = gemm_op_reference(kernel, &x, &w, &y).map_err(|e| e.to_string())?;
                if !z.same(&golden) {
                    return Err(fail("output differs"));
                }
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} randomized runs over all 7 kernels"))
}

fn kernel_invariance() -> Outcome {
    let cfg = ArrayConfig::default();
    let dims = Dims::new(37, 29, 45);
    let (x, w, y) = gen_problem(11, dims, Distribution::Unit);
    let memory = MemoryModel::StallPattern(StallPattern::new([3, 4, 5, 100, 250, 251]));
    let mut totals = Vec::new();
    for kernel in kernel_table() {
        let (_, stats, _) = run_native(&cfg, kernel, &x, &w, &y, &memory, &SimParams::default()).map_err(|e| e.to_string())?;
        totals.push(stats.total_cycles);
    }
    if totals.windows(2).any(|t| t[0] != t[1]) {
        return Err(format!("cycle counts differ across kernels: {totals:?}"));
    }
    Ok(format!("{} cycles for every kernel on {dims}", totals[0]))
}

fn graphs(s: &Sizes) -> Outcome {
    let mut backend = EngineBackend::new(ArrayConfig::default());
    let cases = [
        (GraphProblem::Apsp, s.apsp_nodes, 0.15),
        (GraphProblem::MaxCapacity, s.capacity_nodes, 0.2),
        (GraphProblem::MstStyle, s.capacity_nodes, 0.2),
    ];
    for (problem, nodes, density) in cases {
        for seed in 0..s.graphs as u64 {
            let g = GraphInstance::random(seed, problem, nodes, density);
            let d = solve(&g, &mut backend).map_err(|e| e.to_string())?;
            if !oracles::matches(&d, &oracles::for_problem(&g)) {
                return Err(format!("{problem:?} graph {seed} ({nodes} nodes) disagrees with its oracle"));
            }
        }
    }
    Ok(format!("{} graphs per problem, {} engine calls", s.graphs, backend.calls))
}
