//! Cycle-level functional model of a GEMM-Op matrix engine.
//!
//! The engine evaluates `Z = (X ∘ W) ⋆ Y` for the seven supported
//! (∘, ⋆) operator pairs on an `L x H` array of two-stage computing
//! elements, with bit-exact binary16 arithmetic and optional FP8 I/O.

pub mod datapath;
pub mod element;
pub mod error;
pub mod fp;
pub mod matrix;
pub mod report;
pub mod semiring;
pub mod streamer;
pub mod tiling;
pub mod workloads;
pub mod timing;

pub use datapath::{run, run_native, CycleStats, Engine, RunOutput};
pub use element::Element;
pub use error::{Result, SimError};
pub use fp::{Fp16, Fp8, Fp8Format};
pub use matrix::{IoMatrix, Matrix, Role};
pub use report::{emit, sweep, ReportFormat, RunReport, SweepRow, SweepSpec, Workload};
pub use semiring::{gemm_op_reference, kernel_table, wide_oracle, SemiringKernel};
pub use streamer::{issue_schedule, AccessKind, AccessTrace, MemoryModel, SimParams, StallPattern};
pub use tiling::{ideal_cycles, intensity_1d, intensity_2d, plan_tiles, ArrayConfig, Dims, IoPrecision, TilePlan};

pub type Fp16Matrix = Matrix<Fp16>;
pub type Fp8Matrix = Matrix<Fp8>;
pub type WideMatrix = Matrix<f64>;
pub type Intensity = num_rational::Ratio<u64>;
pub type RedMulE = Engine<Fp16>;
