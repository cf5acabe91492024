//! Run reports, their JSON/CSV forms, and configuration sweeps.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapath::{run, CycleStats, RunOutput};
use crate::error::{Result, SimError};
use crate::fp::{Fp16, Fp8, Fp8Format};
use crate::matrix::IoMatrix;
use crate::semiring::{gemm_op_reference, SemiringKernel};
use crate::streamer::{AccessKind, AccessTrace, MemoryModel, SimParams};
use crate::tiling::{ideal_cycles, plan_tiles, ArrayConfig, Dims, IoPrecision};
use crate::workloads::{gen_problem, Distribution};

/// Clock used when no frequency is requested.
pub const DEFAULT_FREQ_MHZ: f64 = 613.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleBreakdown {
    pub compute: u64,
    pub fill: u64,
    pub stall: u64,
    pub bubble: u64,
    pub tail: u64,
    pub port_stall: u64,
}

/// Switching-activity proxies: issues per unit, summed over CEs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub ce_busy: u64,
    pub fma_active: u64,
    pub fncomp_active: u64,
    pub stage2_active: u64,
    pub ops_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub kind: AccessKind,
    pub beats: usize,
    pub elems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ArrayConfig,
    pub stages_per_row: usize,
    pub dims: Dims,
    pub kernel: SemiringKernel,
    pub memory: String,
    pub seed: Option<u64>,
    pub total_cycles: u64,
    pub ideal_cycles: u64,
    pub utilization: f64,
    pub op_per_cycle: f64,
    pub freq_mhz: f64,
    pub gflops: f64,
    pub cycles: CycleBreakdown,
    pub activity: Activity,
    pub streams: Vec<StreamSummary>,
    /// Outcome of the comparison against the golden model, when requested.
    pub check_passed: Option<bool>,
}

impl RunReport {
    pub fn new(
        cfg: &ArrayConfig,
        dims: Dims,
        kernel: SemiringKernel,
        memory: &MemoryModel,
        stats: &CycleStats,
        trace: &AccessTrace,
        freq_mhz: f64,
    ) -> Result<Self> {
        let plan = plan_tiles(cfg, dims)?;
        Ok(RunReport {
            config: *cfg,
            stages_per_row: cfg.stages_per_row(),
            dims,
            kernel,
            memory: memory.to_string(),
            seed: None,
            total_cycles: stats.total_cycles,
            ideal_cycles: ideal_cycles(&plan),
            utilization: stats.utilization,
            op_per_cycle: stats.op_per_cycle,
            freq_mhz,
            gflops: stats.gflops_at(freq_mhz),
            cycles: CycleBreakdown {
                compute: stats.compute_cycles,
                fill: stats.fill_cycles,
                stall: stats.stall_cycles,
                bubble: stats.bubble_cycles,
                tail: stats.tail_cycles,
                port_stall: stats.port_stall_cycles,
            },
            activity: Activity {
                ce_busy: stats.ce_busy_cycles,
                fma_active: stats.fma_active_cycles,
                fncomp_active: stats.fncomp_active_cycles,
                stage2_active: stats.stage2_active_cycles,
                ops_total: stats.ops_total,
            },
            streams: AccessKind::ALL
                .iter()
                .map(|&kind| StreamSummary { kind, beats: trace.count(kind), elems: trace.elems(kind) })
                .collect(),
            check_passed: None,
        })
    }

    pub fn gflops_at(&self, freq_mhz: f64) -> f64 {
        self.op_per_cycle * freq_mhz * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: &str = "L,H,P,port_bits,io,kernel,M,N,K,memory,feasible,total_cycles,ideal_cycles,\
utilization,op_per_cycle,gflops,ce_busy,fma_active,fncomp_active,stage2_active,note";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_row(cfg: &ArrayConfig, dims: Dims, kernel: SemiringKernel, memory: &str, report: Option<&RunReport>, note: &str) -> String {
    let mut line = format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        cfg.rows,
        cfg.cols,
        cfg.pipe_regs,
        cfg.port_bits,
        cfg.io,
        kernel,
        dims.m,
        dims.n,
        dims.k,
        csv_field(memory),
        report.is_some()
    );
    match report {
        Some(r) => {
            let a = &r.activity;
            write!(
                line,
                ",{},{},{},{},{},{},{},{},{}",
                r.total_cycles, r.ideal_cycles, r.utilization, r.op_per_cycle, r.gflops, a.ce_busy, a.fma_active, a.fncomp_active, a.stage2_active
            )
            .unwrap();
        }
        None => line.push_str(",,,,,,,,,"),
    }
    line.push(',');
    line.push_str(&csv_field(note));
    line
}

/// Serializes one report. Field order and number formatting are fixed, so
/// identical reports produce identical bytes.
pub fn emit(report: &RunReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("reports serialize") + "\n",
        ReportFormat::Csv => {
            let row = csv_row(&report.config, report.dims, report.kernel, &report.memory, Some(report), "");
            format!("{CSV_HEADER}\n{row}\n")
        }
    }
}

/// The problem a sweep or a single run executes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Workload {
    pub dims: Dims,
    pub kernel: SemiringKernel,
    pub seed: u64,
    pub distribution: Distribution,
    /// Input encoding when the array uses FP8 I/O.
    pub fp8_format: Fp8Format,
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            dims: Dims::cube(96),
            kernel: SemiringKernel::Matmul,
            seed: 1,
            distribution: Distribution::Unit,
            fp8_format: Fp8Format::E4M3,
        }
    }
}

/// A finished simulation with its report.
#[derive(Debug, Clone)]
pub struct Execution {
    pub report: RunReport,
    pub output: RunOutput<Fp16>,
}

impl Workload {
    /// Operands as they sit in memory for the given I/O precision.
    pub fn operands(&self, io: IoPrecision) -> [IoMatrix<Fp16>; 3] {
        let (x, w, y) = gen_problem(self.seed, self.dims, self.distribution);
        match io {
            IoPrecision::Fp16 => [x.into(), w.into(), y.into()],
            IoPrecision::Fp8 => {
                let f = self.fp8_format;
                [x, w, y].map(|m| IoMatrix::Fp8(m.map(|v| Fp8::from_fp16(v, f))))
            }
        }
    }

    /// Simulates the workload; with `check`, compares Z against the golden
    /// model evaluated on the same (widened) operands.
    pub fn execute(&self, cfg: &ArrayConfig, memory: &MemoryModel, params: &SimParams, freq_mhz: f64, check: bool) -> Result<Execution> {
        let [x, w, y] = self.operands(cfg.io);
        let output = run(cfg, self.kernel, &x, &w, &y, memory, params)?;
        let mut report = RunReport::new(cfg, self.dims, self.kernel, memory, &output.stats, &output.trace, freq_mhz)?;
        report.seed = Some(self.seed);
        if check {
            let golden = gemm_op_reference(self.kernel, &x.widen(), &w.widen(), &y.widen())?;
            let ok = match &output.z {
                IoMatrix::Native(z) => z.same(&golden),
                IoMatrix::Fp8(z) => *z == golden.map(|v| Fp8::from_fp16(v, params.z_format)),
            };
            report.check_passed = Some(ok);
        }
        Ok(Execution { report, output })
    }
}

/// One sweep point. Infeasible configurations keep their row with the
/// diagnostic in `note`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: ArrayConfig,
    pub feasible: bool,
    pub note: String,
    pub report: Option<RunReport>,
}

/// Evaluates `workload` on every configuration, in parallel on at most
/// `threads` workers, and returns rows sorted by `(L, H, P)`.
pub fn sweep(
    configs: &[ArrayConfig],
    workload: &Workload,
    memory: &MemoryModel,
    params: &SimParams,
    freq_mhz: f64,
    threads: Option<usize>,
) -> Result<Vec<SweepRow>> {
    let eval = |cfg: &ArrayConfig| match cfg.validate_all().and_then(|_| workload.execute(cfg, memory, params, freq_mhz, false)) {
        Ok(e) => SweepRow { config: *cfg, feasible: true, note: String::new(), report: Some(e.report) },
        Err(err @ (SimError::BandwidthInfeasible { .. } | SimError::InvalidConfig(_))) => {
            SweepRow { config: *cfg, feasible: false, note: err.to_string(), report: None }
        }
        Err(other) => SweepRow { config: *cfg, feasible: false, note: format!("error: {other}"), report: None },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("cannot start sweep workers: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| configs.par_iter().map(eval).collect());
    rows.sort_by_key(|r| (r.config.rows, r.config.cols, r.config.pipe_regs, r.config.port_bits, r.config.io == IoPrecision::Fp8));
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow], workload: &Workload, memory: &MemoryModel) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&csv_row(&r.config, workload.dims, workload.kernel, &memory.to_string(), r.report.as_ref(), &r.note));
        out.push('\n');
    }
    out
}

/// Smallest port that carries one line plus a 32-bit side channel.
pub fn auto_port_bits(rows: usize, cols: usize, pipe_regs: usize, io: IoPrecision) -> usize {
    let line = ArrayConfig::new(rows, cols, pipe_regs).with_io(io).beat_bits();
    line.div_ceil(32) * 32 + 32
}

/// Sweep description: the cross product of `rows x cols x pipe_regs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(rename = "L")]
    pub rows: Vec<usize>,
    #[serde(rename = "H")]
    pub cols: Vec<usize>,
    #[serde(rename = "P")]
    pub pipe_regs: Vec<usize>,
    /// Fixed port width; sized per configuration with
    /// [`auto_port_bits`] when absent.
    #[serde(default)]
    pub port_bits: Option<usize>,
    #[serde(default)]
    pub io: IoPrecision,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default = "default_memory")]
    pub memory: String,
    #[serde(default = "default_freq")]
    pub freq_mhz: f64,
}

fn default_memory() -> String {
    "ideal".into()
}

fn default_freq() -> f64 {
    DEFAULT_FREQ_MHZ
}

impl SweepSpec {
    pub fn configs(&self) -> Vec<ArrayConfig> {
        let mut out = Vec::new();
        for &l in &self.rows {
            for &h in &self.cols {
                for &p in &self.pipe_regs {
                    let port = self.port_bits.unwrap_or_else(|| auto_port_bits(l, h, p, self.io));
                    out.push(ArrayConfig { rows: l, cols: h, pipe_regs: p, port_bits: port, io: self.io });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Workload {
        Workload { dims: Dims::new(20, 12, 24), seed: 3, ..Default::default() }
    }

    #[test]
    fn json_round_trip_and_fields() {
        let e = small().execute(&ArrayConfig::default(), &MemoryModel::Ideal, &SimParams::default(), 613.0, true).unwrap();
        let json = emit(&e.report, ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let u = v["utilization"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&u));
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e.report);
        assert_eq!(emit(&back, ReportFormat::Json), json);
        assert_eq!(e.report.check_passed, Some(true));
        let g = e.report.gflops_at(613.0);
        assert!((g - e.report.op_per_cycle * 0.613).abs() <= 1e-9 * g);
    }

    #[test]
    fn csv_has_fixed_header() {
        let e = small().execute(&ArrayConfig::default(), &MemoryModel::Ideal, &SimParams::default(), 613.0, false).unwrap();
        let csv = emit(&e.report, ReportFormat::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1].split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn sweep_sorts_and_flags() {
        let spec = SweepSpec {
            rows: vec![8, 4],
            cols: vec![2],
            pipe_regs: vec![1, 0],
            port_bits: None,
            io: IoPrecision::Fp16,
            workload: small(),
            memory: "ideal".into(),
            freq_mhz: 613.0,
        };
        let rows = sweep(&spec.configs(), &spec.workload, &MemoryModel::Ideal, &SimParams::default(), 613.0, Some(1)).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.config.rows, r.config.pipe_regs)).collect();
        assert_eq!(keys, vec![(4, 0), (4, 1), (8, 0), (8, 1)]);
        assert!(!rows[0].feasible && rows[0].note.contains("bandwidth"));
        assert!(rows[1].feasible);
        // L = 8 exceeds the H·P·(P+1) = 4 gap slots at P = 1
        assert!(!rows[3].feasible);
        assert!(sweep(&[], &spec.workload, &MemoryModel::Ideal, &SimParams::default(), 613.0, None).unwrap().is_empty());
        let csv = sweep_csv(&rows, &spec.workload, &MemoryModel::Ideal);
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn auto_port() {
        assert_eq!(auto_port_bits(12, 4, 3, IoPrecision::Fp16), 288);
        assert_eq!(auto_port_bits(12, 8, 3, IoPrecision::Fp8), 288);
        assert_eq!(auto_port_bits(12, 8, 3, IoPrecision::Fp16), 544);
    }
}
