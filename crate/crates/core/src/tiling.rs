//! Array parameters, the tile/pass decomposition and the analytic
//! cycle/intensity models.

use std::fmt;
use std::str::FromStr;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Result, SimError};
use crate::matrix::Matrix;
use crate::semiring::SemiringKernel;

/// Precision of the data crossing the memory port. The array always
/// computes in binary16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IoPrecision {
    #[default]
    Fp16,
    Fp8,
}

impl IoPrecision {
    pub fn elem_bits(self) -> usize {
        match self {
            IoPrecision::Fp16 => 16,
            IoPrecision::Fp8 => 8,
        }
    }
}

impl fmt::Display for IoPrecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IoPrecision::Fp16 => "fp16",
            IoPrecision::Fp8 => "fp8",
        })
    }
}

impl FromStr for IoPrecision {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp16" => Ok(IoPrecision::Fp16),
            "fp8" => Ok(IoPrecision::Fp8),
            other => Err(SimError::InvalidConfig(format!("unknown I/O precision `{other}` (expected fp16 or fp8)"))),
        }
    }
}

/// Design-time array parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// `L`: rows of computing elements.
    pub rows: usize,
    /// `H`: computing elements per row.
    pub cols: usize,
    /// `P`: pipeline registers per computing element.
    pub pipe_regs: usize,
    pub port_bits: usize,
    pub io: IoPrecision,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig { rows: 12, cols: 4, pipe_regs: 3, port_bits: 288, io: IoPrecision::Fp16 }
    }
}

impl ArrayConfig {
    pub fn new(rows: usize, cols: usize, pipe_regs: usize) -> Self {
        ArrayConfig { rows, cols, pipe_regs, ..Default::default() }
    }

    pub fn with_io(mut self, io: IoPrecision) -> Self {
        self.io = io;
        self
    }

    pub fn with_port_bits(mut self, port_bits: usize) -> Self {
        self.port_bits = port_bits;
        self
    }

    /// `H·(P+1)`: pipeline stages per row, Z-tile width and elements per beat.
    pub fn stages_per_row(&self) -> usize {
        self.cols * (self.pipe_regs + 1)
    }

    /// Computing elements in the array.
    pub fn ces(&self) -> usize {
        self.rows * self.cols
    }

    /// Bits carried by one full buffer-line beat.
    pub fn beat_bits(&self) -> usize {
        self.stages_per_row() * self.io.elem_bits()
    }

    /// Structural validity: positive dimensions and a port wide enough for
    /// one buffer line per access.
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimError::InvalidConfig(format!("L and H must be at least 1 (L={}, H={})", self.rows, self.cols)));
        }
        if self.port_bits == 0 || !self.port_bits.is_multiple_of(32) {
            return Err(SimError::InvalidConfig(format!("port width {} is not a positive multiple of 32", self.port_bits)));
        }
        if self.port_bits < self.beat_bits() {
            return Err(SimError::InvalidConfig(format!(
                "port width {} bits cannot carry one {}-element {} line ({} bits)",
                self.port_bits,
                self.stages_per_row(),
                self.io,
                self.beat_bits()
            )));
        }
        Ok(())
    }

    /// Steady-state port budget. Over `P+1` passes a row block consumes
    /// `L` X beats while the W stream leaves `H·P` free slots per pass.
    pub fn check_bandwidth(&self) -> Result<()> {
        let gap_slots = self.cols * self.pipe_regs * (self.pipe_regs + 1);
        if self.rows > gap_slots {
            return Err(SimError::BandwidthInfeasible {
                rows: self.rows,
                cols: self.cols,
                pipe_regs: self.pipe_regs,
                gap_slots,
                needed: format!("{}", self.rows),
            });
        }
        Ok(())
    }

    pub fn validate_all(&self) -> Result<()> {
        self.validate()?;
        self.check_bandwidth()
    }
}

impl fmt::Display for ArrayConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L={} H={} P={} port={}b io={}", self.rows, self.cols, self.pipe_regs, self.port_bits, self.io)
    }
}

/// Problem dimensions `M x N x K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(m: usize, n: usize, k: usize) -> Self {
        Dims { m, n, k }
    }

    pub fn cube(s: usize) -> Self {
        Dims { m: s, n: s, k: s }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.k == 0 {
            return Err(SimError::DimensionMismatch(format!("dimensions must be positive, got {self}")));
        }
        Ok(())
    }

    pub fn macs(&self) -> u64 {
        (self.m * self.n * self.k) as u64
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.n, self.k)
    }
}

impl FromStr for Dims {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<_> = s.split(['x', 'X', ',']).map(str::trim).collect();
        let bad = || SimError::DimensionMismatch(format!("`{s}` is not of the form MxNxK"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<usize> = parts.iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let d = Dims::new(v[0], v[1], v[2]);
        d.validate()?;
        Ok(d)
    }
}

/// The tile walk for one problem: row blocks of `L` outer, column blocks of
/// `H·(P+1)` middle, passes of `H` reduction steps inner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub dims: Dims,
    pub rows: usize,
    pub cols: usize,
    pub pipe_regs: usize,
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub passes_per_tile: usize,
    pub padded: Dims,
}

impl TilePlan {
    /// `H·(P+1)`.
    pub fn width(&self) -> usize {
        self.cols * (self.pipe_regs + 1)
    }

    pub fn tiles(&self) -> usize {
        self.row_blocks * self.col_blocks
    }

    /// Compute steps spent on one tile.
    pub fn steps_per_tile(&self) -> usize {
        self.passes_per_tile * self.width()
    }

    /// Passes sharing one X-buffer window (`P+1` passes consume `H·(P+1)`
    /// reduction indices).
    pub fn windows_per_tile(&self) -> usize {
        self.passes_per_tile.div_ceil(self.pipe_regs + 1)
    }

    /// `(row block, column block)` of tile `t` in walk order.
    pub fn tile_coords(&self, t: usize) -> (usize, usize) {
        (t / self.col_blocks, t % self.col_blocks)
    }

    pub fn has_leftovers(&self) -> bool {
        self.padded != self.dims
    }

    /// Leftover amounts `(M'-M, N'-N, K'-K)`.
    pub fn leftovers(&self) -> Dims {
        Dims::new(self.padded.m - self.dims.m, self.padded.n - self.dims.n, self.padded.k - self.dims.k)
    }
}

pub fn plan_tiles(cfg: &ArrayConfig, dims: Dims) -> Result<TilePlan> {
    dims.validate()?;
    cfg.validate()?;
    let width = cfg.stages_per_row();
    let row_blocks = dims.m.div_ceil(cfg.rows);
    let col_blocks = dims.k.div_ceil(width);
    let passes = dims.n.div_ceil(cfg.cols);
    Ok(TilePlan {
        dims,
        rows: cfg.rows,
        cols: cfg.cols,
        pipe_regs: cfg.pipe_regs,
        row_blocks,
        col_blocks,
        passes_per_tile: passes,
        padded: Dims::new(row_blocks * cfg.rows, passes * cfg.cols, col_blocks * width),
    })
}

/// Zero-overhead compute cycles: every pass occupies `H·(P+1)` issue slots.
pub fn ideal_cycles(plan: &TilePlan) -> u64 {
    (plan.tiles() * plan.steps_per_tile()) as u64
}

/// Operations per loaded/stored element for a single-CE inner product of
/// length `n`: `2N / (2N + 2)`.
pub fn intensity_1d<T: Num + FromPrimitive>(n: u64) -> T {
    assert!(n >= 1, "N must be positive");
    let c = |v: u64| T::from_u64(v).unwrap();
    (c(2) * c(n)) / (c(2) * c(n) + c(2))
}

/// Operations per element for an `L x H` outer-product array over a
/// reduction of length `n`: `2LHN / ((L+H)N + 2LH)`.
pub fn intensity_2d<T: Num + FromPrimitive>(l: u64, h: u64, n: u64) -> T {
    assert!(l >= 1 && h >= 1 && n >= 1, "L, H and N must be positive");
    let c = |v: u64| T::from_u64(v).unwrap();
    (c(2) * c(l) * c(h) * c(n)) / (c(l + h) * c(n) + c(2) * c(l) * c(h))
}

/// Pads `x` (`M x N`), `w` (`N x K`) and `y` (`M x K`) to the plan's
/// padded dimensions with the kernel's identities.
pub fn pad_operands<T: Element>(
    plan: &TilePlan,
    kernel: SemiringKernel,
    x: &Matrix<T>,
    w: &Matrix<T>,
    y: &Matrix<T>,
) -> (Matrix<T>, Matrix<T>, Matrix<T>) {
    let p = plan.padded;
    (
        x.padded(p.m, p.n, kernel.pad_x()),
        w.padded(p.n, p.k, kernel.pad_w()),
        y.padded(p.m, p.k, kernel.pad_y()),
    )
}
