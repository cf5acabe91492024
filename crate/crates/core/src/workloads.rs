//! Input generators and graph drivers built on GEMM-Op kernels.
//!
//! Random data comes from `Xoshiro256PlusPlus` seeded with
//! `seed_from_u64(seed)`; one generator instance produces a whole problem in
//! the order X, W, Y.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::datapath::run_native;
use crate::error::{Result, SimError};
use crate::fp::Fp16;
use crate::matrix::{Matrix, Role};
use crate::semiring::{gemm_op_reference, SemiringKernel};
use crate::streamer::{MemoryModel, SimParams};
use crate::tiling::{ArrayConfig, Dims};

pub type Prng = Xoshiro256PlusPlus;

pub fn prng(seed: u64) -> Prng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// Uniform in `[-1, 1]`, rounded to binary16.
    #[default]
    Unit,
    /// Integers in `[-128, 127]`.
    Int8,
    /// Integers in `[0, 255]`.
    Uint8,
    /// Uniform in `[0, 1]`, rounded to binary16.
    Positive,
}

impl Distribution {
    pub fn sample(self, rng: &mut Prng) -> Fp16 {
        let v = match self {
            Distribution::Unit => rng.gen_range(-1.0..=1.0),
            Distribution::Int8 => rng.gen_range(-128i32..=127) as f64,
            Distribution::Uint8 => rng.gen_range(0i32..=255) as f64,
            Distribution::Positive => rng.gen_range(0.0..=1.0),
        };
        Fp16::from_f64(v)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Distribution::Unit => "unit",
            Distribution::Int8 => "int8",
            Distribution::Uint8 => "uint8",
            Distribution::Positive => "positive",
        })
    }
}

impl FromStr for Distribution {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "unit" => Distribution::Unit,
            "int8" => Distribution::Int8,
            "uint8" => Distribution::Uint8,
            "positive" => Distribution::Positive,
            other => return Err(SimError::InvalidConfig(format!("unknown distribution `{other}`"))),
        })
    }
}

pub fn gen_matrix_with(rng: &mut Prng, role: Role, rows: usize, cols: usize, dist: Distribution) -> Matrix<Fp16> {
    Matrix::from_fn(role, rows, cols, |_, _| dist.sample(rng))
}

pub fn gen_matrix(seed: u64, role: Role, rows: usize, cols: usize, dist: Distribution) -> Matrix<Fp16> {
    gen_matrix_with(&mut prng(seed), role, rows, cols, dist)
}

/// X (`M x N`), W (`N x K`) and Y (`M x K`) from one seed.
pub fn gen_problem(seed: u64, dims: Dims, dist: Distribution) -> (Matrix<Fp16>, Matrix<Fp16>, Matrix<Fp16>) {
    let mut rng = prng(seed);
    let x = gen_matrix_with(&mut rng, Role::X, dims.m, dims.n, dist);
    let w = gen_matrix_with(&mut rng, Role::W, dims.n, dims.k, dist);
    let y = gen_matrix_with(&mut rng, Role::Y, dims.m, dims.k, dist);
    (x, w, y)
}

/// Evaluates GEMM-Ops for the graph drivers.
pub trait GemmOpBackend {
    fn gemm_op(&mut self, kernel: SemiringKernel, x: &Matrix<Fp16>, w: &Matrix<Fp16>, y: &Matrix<Fp16>) -> Result<Matrix<Fp16>>;
}

/// The golden software model.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceBackend;

impl GemmOpBackend for ReferenceBackend {
    fn gemm_op(&mut self, kernel: SemiringKernel, x: &Matrix<Fp16>, w: &Matrix<Fp16>, y: &Matrix<Fp16>) -> Result<Matrix<Fp16>> {
        gemm_op_reference(kernel, x, w, y)
    }
}

/// The cycle-level engine; accumulates cycles over all calls.
#[derive(Debug, Clone)]
pub struct EngineBackend {
    pub cfg: ArrayConfig,
    pub memory: MemoryModel,
    pub params: SimParams,
    pub total_cycles: u64,
    pub calls: usize,
}

impl EngineBackend {
    pub fn new(cfg: ArrayConfig) -> Self {
        EngineBackend { cfg, memory: MemoryModel::Ideal, params: SimParams::default(), total_cycles: 0, calls: 0 }
    }
}

impl GemmOpBackend for EngineBackend {
    fn gemm_op(&mut self, kernel: SemiringKernel, x: &Matrix<Fp16>, w: &Matrix<Fp16>, y: &Matrix<Fp16>) -> Result<Matrix<Fp16>> {
        let (z, stats, _) = run_native(&self.cfg, kernel, x, w, y, &self.memory, &self.params)?;
        self.total_cycles += stats.total_cycles;
        self.calls += 1;
        Ok(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphProblem {
    /// Shortest paths, `(+, min)`.
    Apsp,
    /// Widest (bottleneck) paths, `(min, max)`.
    MaxCapacity,
    /// Minimax paths, `(max, min)`: the largest edge on the best path, which
    /// is the heaviest edge on the minimum spanning tree path.
    MstStyle,
}

impl GraphProblem {
    pub fn kernel(self) -> SemiringKernel {
        match self {
            GraphProblem::Apsp => SemiringKernel::AllPairsShortestPaths,
            GraphProblem::MaxCapacity => SemiringKernel::MaxCapacityPath,
            GraphProblem::MstStyle => SemiringKernel::MinSpanningTree,
        }
    }

    /// Matrix entry for a missing edge.
    pub fn absent(self) -> Fp16 {
        match self {
            GraphProblem::Apsp | GraphProblem::MstStyle => Fp16::INFINITY,
            GraphProblem::MaxCapacity => Fp16::ZERO,
        }
    }

    /// Matrix entry on the diagonal.
    pub fn diagonal(self) -> Fp16 {
        match self {
            GraphProblem::Apsp | GraphProblem::MstStyle => Fp16::ZERO,
            GraphProblem::MaxCapacity => Fp16::INFINITY,
        }
    }
}

/// A dense weighted graph in the form the kernels consume.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    pub problem: GraphProblem,
    pub weights: Matrix<Fp16>,
}

impl GraphInstance {
    pub fn nodes(&self) -> usize {
        self.weights.rows()
    }

    /// Builds the matrix from `(u, v, w)` edges; parallel edges keep the
    /// better weight for the problem.
    pub fn from_edges(problem: GraphProblem, nodes: usize, edges: &[(usize, usize, u32)], undirected: bool) -> Result<Self> {
        if nodes == 0 {
            return Err(SimError::Format("graph needs at least one node".into()));
        }
        let mut m = Matrix::filled(Role::X, nodes, nodes, problem.absent());
        for i in 0..nodes {
            m.set(i, i, problem.diagonal());
        }
        for &(u, v, w) in edges {
            if u >= nodes || v >= nodes {
                return Err(SimError::Format(format!("edge ({u}, {v}) outside {nodes} nodes")));
            }
            if w > 255 {
                return Err(SimError::Format(format!("edge weight {w} exceeds 255")));
            }
            let wv = Fp16::from_f64(w as f64);
            let pairs: &[(usize, usize)] = if undirected { &[(u, v), (v, u)] } else { &[(u, v)] };
            for &(a, b) in pairs {
                if a == b {
                    continue;
                }
                let old = m.get(a, b);
                let better = match problem {
                    GraphProblem::Apsp | GraphProblem::MstStyle => old.min(wv),
                    GraphProblem::MaxCapacity => old.max(wv),
                };
                m.set(a, b, better);
            }
        }
        Ok(GraphInstance { problem, weights: m })
    }

    /// Random graph with integer weights in `[1, 255]` and edge probability
    /// `density`. Minimax instances are undirected.
    pub fn random(seed: u64, problem: GraphProblem, nodes: usize, density: f64) -> Self {
        let mut rng = prng(seed);
        let mut edges = Vec::new();
        for u in 0..nodes {
            for v in 0..nodes {
                if u != v && (problem != GraphProblem::MstStyle || u < v) && rng.gen_bool(density) {
                    edges.push((u, v, rng.gen_range(1..=255)));
                }
            }
        }
        GraphInstance::from_edges(problem, nodes, &edges, problem == GraphProblem::MstStyle)
            .expect("generated edges are in range")
    }

    /// Parses `u v w` lines (`#` comments). The node count is one past the
    /// largest index unless `nodes` is given.
    pub fn parse_edge_list(problem: GraphProblem, text: &str, nodes: Option<usize>, undirected: bool) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            let bad = || SimError::Format(format!("line {}: expected `u v w`", lineno + 1));
            if f.len() != 3 {
                return Err(bad());
            }
            let u: usize = f[0].parse().map_err(|_| bad())?;
            let v: usize = f[1].parse().map_err(|_| bad())?;
            let w: u32 = f[2].parse().map_err(|_| bad())?;
            edges.push((u, v, w));
        }
        let n = nodes.unwrap_or_else(|| edges.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
        GraphInstance::from_edges(problem, n, &edges, undirected)
    }
}

/// Squarings needed to cover paths of `n - 1` edges.
pub fn squarings(nodes: usize) -> u32 {
    if nodes <= 2 {
        return 0;
    }
    usize::BITS - (nodes - 2).leading_zeros()
}

/// Repeated squaring `D ← (D ∘ D) ⋆ D` with the problem's kernel.
pub fn solve<B: GemmOpBackend>(g: &GraphInstance, backend: &mut B) -> Result<Matrix<Fp16>> {
    let kernel = g.problem.kernel();
    let mut d = g.weights.clone();
    for _ in 0..squarings(g.nodes()) {
        let x = d.clone().with_role(Role::X);
        let w = d.clone().with_role(Role::W);
        let y = d.with_role(Role::Y);
        d = backend.gemm_op(kernel, &x, &w, &y)?;
    }
    Ok(d.with_role(Role::Z))
}

pub fn apsp_solve<B: GemmOpBackend>(g: &GraphInstance, backend: &mut B) -> Result<Matrix<Fp16>> {
    if g.problem != GraphProblem::Apsp {
        return Err(SimError::InvalidConfig("apsp_solve needs an APSP instance".into()));
    }
    solve(g, backend)
}

pub fn max_capacity_solve<B: GemmOpBackend>(g: &GraphInstance, backend: &mut B) -> Result<Matrix<Fp16>> {
    if g.problem != GraphProblem::MaxCapacity {
        return Err(SimError::InvalidConfig("max_capacity_solve needs a max-capacity instance".into()));
    }
    solve(g, backend)
}

/// Classic path-algebra closures on doubles, used by `verify`.
pub mod oracles {
    use super::*;

    fn closure(g: &GraphInstance, relax: impl Fn(f64, f64, f64) -> f64) -> Vec<Vec<f64>> {
        let n = g.nodes();
        let mut d: Vec<Vec<f64>> = (0..n).map(|i| g.weights.row(i).iter().map(|v| v.to_f64()).collect()).collect();
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = relax(d[i][j], d[i][k], d[k][j]);
                }
            }
        }
        d
    }

    pub fn floyd_warshall(g: &GraphInstance) -> Vec<Vec<f64>> {
        closure(g, |cur, a, b| cur.min(a + b))
    }

    pub fn widest_paths(g: &GraphInstance) -> Vec<Vec<f64>> {
        closure(g, |cur, a, b| cur.max(a.min(b)))
    }

    pub fn minimax_paths(g: &GraphInstance) -> Vec<Vec<f64>> {
        closure(g, |cur, a, b| cur.min(a.max(b)))
    }

    pub fn for_problem(g: &GraphInstance) -> Vec<Vec<f64>> {
        match g.problem {
            GraphProblem::Apsp => floyd_warshall(g),
            GraphProblem::MaxCapacity => widest_paths(g),
            GraphProblem::MstStyle => minimax_paths(g),
        }
    }

    pub fn matches(z: &Matrix<Fp16>, expect: &[Vec<f64>]) -> bool {
        expect.iter().enumerate().all(|(i, row)| row.iter().enumerate().all(|(j, &v)| z.get(i, j).to_f64() == v))
    }
}

/// Reads `M,N,K` lines (commas, `x` or whitespace; `#` comments).
pub fn parse_shape_list(text: &str) -> Result<Vec<Dims>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(|c: char| c == ',' || c == 'x' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        let parsed: Option<Vec<usize>> = f.iter().map(|s| s.parse().ok()).collect();
        match parsed.as_deref() {
            Some(&[m, n, k]) if m > 0 && n > 0 && k > 0 => out.push(Dims::new(m, n, k)),
            _ => return Err(SimError::Format(format!("line {}: expected positive M,N,K", lineno + 1))),
        }
    }
    Ok(out)
}
