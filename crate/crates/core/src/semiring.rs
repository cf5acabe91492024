//! The seven GEMM-Op kernels `Z = (X ∘ W) ⋆ Y` and their golden evaluators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Result, SimError};
use crate::matrix::{Matrix, Role};

/// The element-wise operator `∘` applied to an X/W pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Circ {
    Mul,
    Add,
    Min,
    Max,
}

/// The reduction operator `⋆`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Star {
    Add,
    Min,
    Max,
}

/// How a kernel maps onto the two CE stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// `⋆` fused into the stage-1 FMA; stage 2 bypassed.
    Matmul,
    /// Stage 1 adds or multiplies; stage 2 compares.
    Group1,
    /// Both stages compare.
    Group2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemiringKernel {
    /// (×, +)
    Matmul,
    /// (+, max)
    MaxCriticalPath,
    /// (+, min)
    AllPairsShortestPaths,
    /// (×, max)
    MaxReliabilityPath,
    /// (×, min)
    MinReliabilityPath,
    /// (max, min)
    MinSpanningTree,
    /// (min, max)
    MaxCapacityPath,
}

pub use SemiringKernel as Kernel;

impl SemiringKernel {
    pub const ALL: [SemiringKernel; 7] = [
        SemiringKernel::Matmul,
        SemiringKernel::MaxCriticalPath,
        SemiringKernel::AllPairsShortestPaths,
        SemiringKernel::MaxReliabilityPath,
        SemiringKernel::MinReliabilityPath,
        SemiringKernel::MinSpanningTree,
        SemiringKernel::MaxCapacityPath,
    ];

    pub fn circ(self) -> Circ {
        use SemiringKernel::*;
        match self {
            Matmul | MaxReliabilityPath | MinReliabilityPath => Circ::Mul,
            MaxCriticalPath | AllPairsShortestPaths => Circ::Add,
            MinSpanningTree => Circ::Max,
            MaxCapacityPath => Circ::Min,
        }
    }

    pub fn star(self) -> Star {
        use SemiringKernel::*;
        match self {
            Matmul => Star::Add,
            MaxCriticalPath | MaxReliabilityPath | MaxCapacityPath => Star::Max,
            AllPairsShortestPaths | MinReliabilityPath | MinSpanningTree => Star::Min,
        }
    }

    pub fn group(self) -> Group {
        match (self.circ(), self.star()) {
            (_, Star::Add) => Group::Matmul,
            (Circ::Add | Circ::Mul, _) => Group::Group1,
            (Circ::Min | Circ::Max, _) => Group::Group2,
        }
    }

    /// Canonical command-line name.
    pub fn name(self) -> &'static str {
        use SemiringKernel::*;
        match self {
            Matmul => "matmul",
            MaxCriticalPath => "max-critical-path",
            AllPairsShortestPaths => "apsp",
            MaxReliabilityPath => "max-reliability",
            MinReliabilityPath => "min-reliability",
            MinSpanningTree => "mst",
            MaxCapacityPath => "max-capacity",
        }
    }

    pub fn title(self) -> &'static str {
        use SemiringKernel::*;
        match self {
            Matmul => "Matmul",
            MaxCriticalPath => "Maximum Critical Path",
            AllPairsShortestPaths => "All-Pairs Shortest Paths",
            MaxReliabilityPath => "Maximum Reliability Path",
            MinReliabilityPath => "Minimum Reliability Path",
            MinSpanningTree => "Minimum Spanning Tree",
            MaxCapacityPath => "Maximum Capacity Path",
        }
    }

    pub fn formula(self) -> &'static str {
        use SemiringKernel::*;
        match self {
            Matmul => "Z = (X * W) + Y",
            MaxCriticalPath => "Z = max[Y, (X + W)]",
            AllPairsShortestPaths => "Z = min[Y, (X + W)]",
            MaxReliabilityPath => "Z = max[Y, (X * W)]",
            MinReliabilityPath => "Z = min[Y, (X * W)]",
            MinSpanningTree => "Z = min[Y, max(X, W)]",
            MaxCapacityPath => "Z = max[Y, min(X, W)]",
        }
    }

    /// Fill for padded X elements (reduction and row leftovers).
    ///
    /// Together with [`pad_w`](Self::pad_w) the padded pair contributes a
    /// `⋆`-identity for every NaN-free accumulator, so padded reduction steps
    /// leave results bit-identical.
    pub fn pad_x<T: Element>(self) -> T {
        match self.circ() {
            Circ::Mul if self.group() == Group::Matmul => T::ZERO,
            Circ::Mul => T::ONE,
            Circ::Add | Circ::Max | Circ::Min => self.reduce_identity(),
        }
    }

    /// Fill for padded W elements.
    pub fn pad_w<T: Element>(self) -> T {
        match self.group() {
            // (+0)·(−0) = −0 is the only addend preserving both signed zeros
            Group::Matmul => T::NEG_ZERO,
            Group::Group1 | Group::Group2 => self.reduce_identity(),
        }
    }

    /// Fill for padded Y elements; their outputs are discarded.
    pub fn pad_y<T: Element>(self) -> T {
        match self.star() {
            Star::Add => T::ZERO,
            Star::Min | Star::Max => self.reduce_identity(),
        }
    }

    fn reduce_identity<T: Element>(self) -> T {
        match self.star() {
            Star::Add => T::NEG_ZERO,
            Star::Min => T::INFINITY,
            Star::Max => T::NEG_INFINITY,
        }
    }
}

impl fmt::Display for SemiringKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemiringKernel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        use SemiringKernel::*;
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match key.as_str() {
            "matmul" | "gemm" => Matmul,
            "max-critical-path" | "critical-path" => MaxCriticalPath,
            "apsp" | "all-pairs-shortest-paths" | "shortest-paths" => AllPairsShortestPaths,
            "max-reliability" | "max-reliability-path" => MaxReliabilityPath,
            "min-reliability" | "min-reliability-path" => MinReliabilityPath,
            "mst" | "min-spanning-tree" => MinSpanningTree,
            "max-capacity" | "max-capacity-path" => MaxCapacityPath,
            _ => {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                return Err(SimError::InvalidConfig(format!(
                    "unknown kernel `{s}` (expected one of {})",
                    names.join(", ")
                )));
            }
        })
    }
}

/// All seven supported kernels.
pub fn kernel_table() -> Vec<SemiringKernel> {
    SemiringKernel::ALL.to_vec()
}

/// First CE stage. `acc` is only consumed by the fused matmul path.
#[inline]
pub fn ce_stage1<T: Element>(kernel: SemiringKernel, x: T, w: T, acc: T) -> T {
    match kernel.group() {
        Group::Matmul => x.mul_add(w, acc),
        Group::Group1 | Group::Group2 => match kernel.circ() {
            Circ::Mul => x.mul(w),
            Circ::Add => x.add(w),
            Circ::Min => x.min(w),
            Circ::Max => x.max(w),
        },
    }
}

/// Second CE stage: combinational compare, bypassed for matmul.
#[inline]
pub fn ce_stage2<T: Element>(kernel: SemiringKernel, t: T, acc: T) -> T {
    match kernel.star() {
        Star::Add => t,
        Star::Min => t.min(acc),
        Star::Max => t.max(acc),
    }
}

/// One full CE update.
#[inline]
pub fn ce_apply<T: Element>(kernel: SemiringKernel, x: T, w: T, acc: T) -> T {
    ce_stage2(kernel, ce_stage1(kernel, x, w, acc), acc)
}

pub(crate) fn check_dims<A: Copy, B: Copy, C: Copy>(x: &Matrix<A>, w: &Matrix<B>, y: &Matrix<C>) -> Result<(usize, usize, usize)> {
    let (m, n, k) = (x.rows(), x.cols(), w.cols());
    if w.rows() != n {
        return Err(SimError::DimensionMismatch(format!("X is {m}x{n} but W is {}x{k}", w.rows())));
    }
    if y.rows() != m || y.cols() != k {
        return Err(SimError::DimensionMismatch(format!("Y must be {m}x{k}, got {}x{}", y.rows(), y.cols())));
    }
    Ok((m, n, k))
}

/// Bit-exact golden model: for every output, `acc` starts at `Y[m,k]` and
/// absorbs `n = 0..N` in ascending order.
pub fn gemm_op_reference<T: Element>(
    kernel: SemiringKernel,
    x: &Matrix<T>,
    w: &Matrix<T>,
    y: &Matrix<T>,
) -> Result<Matrix<T>> {
    let (m, n, k) = check_dims(x, w, y)?;
    let wt = w.transpose();
    let mut z = Vec::with_capacity(m * k);
    for r in 0..m {
        let xr = x.row(r);
        for c in 0..k {
            let wc = wt.row(c);
            let mut acc = y.get(r, c);
            for i in 0..n {
                acc = ce_apply(kernel, xr[i], wc[i], acc);
            }
            z.push(acc);
        }
    }
    Matrix::new(Role::Z, m, k, z)
}

/// The same recurrence evaluated in double precision on decoded inputs.
pub fn wide_oracle<T: Element>(
    kernel: SemiringKernel,
    x: &Matrix<T>,
    w: &Matrix<T>,
    y: &Matrix<T>,
) -> Result<Matrix<f64>> {
    gemm_op_reference(kernel, &x.to_f64(), &w.to_f64(), &y.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::Fp16;
    use proptest::prelude::*;

    fn h(v: f64) -> Fp16 {
        Fp16::from_f64(v)
    }

    fn mat(role: Role, rows: usize, cols: usize, vals: &[f64]) -> Matrix<Fp16> {
        Matrix::new(role, rows, cols, vals.iter().map(|&v| h(v)).collect()).unwrap()
    }

    #[test]
    fn table_rows() {
        let t = kernel_table();
        assert_eq!(t.len(), 7);
        let pairs: Vec<_> = t.iter().map(|k| (k.circ(), k.star())).collect();
        assert!(pairs.contains(&(Circ::Mul, Star::Add)));
        assert!(pairs.contains(&(Circ::Add, Star::Min)));
        assert!(pairs.contains(&(Circ::Min, Star::Max)));
        for k in t {
            let g1 = matches!(k.circ(), Circ::Add | Circ::Mul) && matches!(k.star(), Star::Min | Star::Max);
            assert_eq!(k.group() == Group::Group1, g1, "{k}");
            assert_eq!(k.group() == Group::Group2, matches!(k.circ(), Circ::Min | Circ::Max), "{k}");
            assert_eq!(k.name().parse::<SemiringKernel>().unwrap(), k);
        }
        assert!("bfs".parse::<SemiringKernel>().is_err());
    }

    #[test]
    fn stage_examples() {
        use SemiringKernel::*;
        assert_eq!(ce_stage1(Matmul, h(2.0), h(3.0), h(1.0)), h(7.0));
        assert_eq!(ce_stage1(AllPairsShortestPaths, h(2.0), h(3.0), h(100.0)), h(5.0));
        assert_eq!(ce_stage1(MinSpanningTree, h(2.0), h(3.0), h(100.0)), h(3.0));
        assert_eq!(ce_stage2(Matmul, h(7.0), h(-9.0)), h(7.0));
        assert_eq!(ce_stage2(AllPairsShortestPaths, h(5.0), h(4.0)), h(4.0));
        assert_eq!(ce_stage2(MaxCriticalPath, h(5.0), h(4.0)), h(5.0));
    }

    #[test]
    fn scalar_matmul() {
        let z = gemm_op_reference(
            SemiringKernel::Matmul,
            &mat(Role::X, 1, 1, &[2.0]),
            &mat(Role::W, 1, 1, &[3.0]),
            &mat(Role::Y, 1, 1, &[1.0]),
        )
        .unwrap();
        assert_eq!(z.get(0, 0), h(7.0));
    }

    #[test]
    fn two_node_min_plus() {
        let a = mat(Role::X, 2, 2, &[0.0, 5.0, 5.0, 0.0]);
        let z = gemm_op_reference(SemiringKernel::AllPairsShortestPaths, &a, &a, &a).unwrap();
        // brute force over paths of at most two edges
        for i in 0..2 {
            for j in 0..2 {
                let mut best = a.get(i, j).to_f64();
                for m in 0..2 {
                    best = best.min(a.get(i, m).to_f64() + a.get(m, j).to_f64());
                }
                assert_eq!(z.get(i, j).to_f64(), best);
            }
        }
    }

    #[test]
    fn identity_weights_copy_x() {
        let x = Matrix::from_fn(Role::X, 5, 6, |r, c| h((r as f64 - 2.0) * 0.37 + c as f64 * 11.5));
        let w = Matrix::from_fn(Role::W, 6, 6, |r, c| if r == c { Fp16::ONE } else { Fp16::ZERO });
        let y = Matrix::filled(Role::Y, 5, 6, Fp16::ZERO);
        assert!(gemm_op_reference(SemiringKernel::Matmul, &x, &w, &y).unwrap().same(&x));
    }

    #[test]
    fn dimension_mismatch() {
        let x = Matrix::filled(Role::X, 2, 3, Fp16::ONE);
        let w = Matrix::filled(Role::W, 2, 3, Fp16::ONE);
        let y = Matrix::filled(Role::Y, 2, 3, Fp16::ONE);
        assert!(gemm_op_reference(SemiringKernel::Matmul, &x, &w, &y).is_err());
    }

    #[test]
    fn wide_oracle_exact_on_small_integers() {
        let x = Matrix::from_fn(Role::X, 4, 5, |r, c| h(((r * 7 + c * 3) % 9) as f64 - 4.0));
        let w = Matrix::from_fn(Role::W, 5, 3, |r, c| h(((r * 5 + c) % 7) as f64 - 3.0));
        let y = Matrix::from_fn(Role::Y, 4, 3, |r, c| h((r + c) as f64));
        for k in kernel_table() {
            let z = gemm_op_reference(k, &x, &w, &y).unwrap();
            assert_eq!(z.to_f64(), wide_oracle(k, &x, &w, &y).unwrap(), "{k}");
        }
    }

    fn fp16_in(lo: f64, hi: f64) -> impl Strategy<Value = Fp16> {
        (lo..hi).prop_map(Fp16::from_f64)
    }

    fn matrix_strategy(rows: usize, cols: usize, role: Role) -> impl Strategy<Value = Matrix<Fp16>> {
        prop::collection::vec(
            prop_oneof![
                8 => fp16_in(-4.0, 4.0),
                1 => Just(Fp16::INFINITY),
                1 => Just(Fp16::NEG_INFINITY),
                1 => Just(Fp16::NEG_ZERO),
                1 => Just(Fp16::ZERO),
            ],
            rows * cols,
        )
        .prop_map(move |d| Matrix::new(role, rows, cols, d).unwrap())
    }

    fn problem() -> impl Strategy<Value = (SemiringKernel, Matrix<Fp16>, Matrix<Fp16>, Matrix<Fp16>, usize)> {
        (1usize..7, 1usize..7, 1usize..7, 0usize..5, 0usize..7).prop_flat_map(|(m, n, k, extra, ki)| {
            (
                Just(SemiringKernel::ALL[ki]),
                matrix_strategy(m, n, Role::X),
                matrix_strategy(n, k, Role::W),
                matrix_strategy(m, k, Role::Y),
                Just(extra),
            )
        })
    }

    proptest! {
        #[test]
        fn padding_is_a_no_op((kernel, x, w, y, extra) in problem()) {
            // inf·0 inside real data would create NaN; padding only has to be
            // neutral for NaN-free accumulators
            let z = gemm_op_reference(kernel, &x, &w, &y).unwrap();
            prop_assume!(!z.data().iter().any(|v| v.is_nan()));
            let (m, n, k) = (x.rows(), x.cols(), w.cols());
            let xp = x.padded(m + extra, n + extra, kernel.pad_x());
            let wp = w.padded(n + extra, k + extra, kernel.pad_w());
            let yp = y.padded(m + extra, k + extra, kernel.pad_y());
            let zp = gemm_op_reference(kernel, &xp, &wp, &yp).unwrap();
            prop_assert!(zp.cropped(m, k).same(&z));
        }

        #[test]
        fn group2_is_exact((kernel, x, w, y, _e) in problem()) {
            prop_assume!(kernel.group() == Group::Group2);
            let z = gemm_op_reference(kernel, &x, &w, &y).unwrap();
            prop_assert_eq!(z.to_f64(), wide_oracle(kernel, &x, &w, &y).unwrap());
        }
    }

    #[test]
    fn group2_transpose_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(7);
        for kernel in [SemiringKernel::MinSpanningTree, SemiringKernel::MaxCapacityPath] {
            for _ in 0..20 {
                let mut g = |role, r, c| Matrix::from_fn(role, r, c, |_, _| h(rng.gen_range(-50i32..50) as f64 / 4.0));
                let x = g(Role::X, 8, 8);
                let w = g(Role::W, 8, 8);
                let y = g(Role::Y, 8, 8);
                let z = gemm_op_reference(kernel, &x, &w, &y).unwrap();
                let zt = gemm_op_reference(kernel, &w.transpose(), &x.transpose(), &y.transpose()).unwrap();
                assert!(zt.transpose().same(&z));
            }
        }
    }

    #[test]
    fn matmul_rounding_bound_16() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(16);
        let n = 16;
        let mut g = |role, r, c| Matrix::from_fn(role, r, c, |_, _| h(rng.gen_range(0.0..1.0)));
        let (x, w, y) = (g(Role::X, n, n), g(Role::W, n, n), g(Role::Y, n, n));
        let z = gemm_op_reference(SemiringKernel::Matmul, &x, &w, &y).unwrap();
        let wide = wide_oracle(SemiringKernel::Matmul, &x, &w, &y).unwrap();
        let worst = z
            .data()
            .iter()
            .zip(wide.data())
            .map(|(a, b)| (a.to_f64() - b).abs() / b.abs())
            .fold(0.0, f64::max);
        assert!(worst <= n as f64 / 256.0, "{worst}");
    }
}
