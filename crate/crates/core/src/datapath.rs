//! The cycle-level engine: an `L x H` array of two-stage computing elements
//! with `P+1`-deep pipelines, fed by the streamer.
//!
//! CE `j` of every row works on `u = s - j·(P+1)` at step `s`. With
//! `D = H·(P+1)` steps per pass, `u` decomposes into tile `T`, pass `p` and
//! slot `t`; the CE consumes reduction index `n = p·H + j` for output column
//! `t` of the tile. Its result leaves the pipeline `P+1` steps later, exactly
//! when CE `j+1` reaches the same slot, and the last CE's output re-enters
//! CE 0 one pass later (the feedback path). After the last pass the result is
//! written into the Z-buffer line that CE 0 is reading Y from.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Result, SimError};
use crate::fp::Fp8;
use crate::matrix::{IoMatrix, Matrix, Role};
use crate::semiring::{ce_stage1, ce_stage2, check_dims, Group, SemiringKernel};
use crate::streamer::{
    issue_schedule, Access, AccessKind, AccessTrace, Beat, Handshake, MemoryModel, NeedTracker, Schedule,
    SimParams, StepGeometry, Streamer,
};
use crate::tiling::{plan_tiles, ArrayConfig, Dims, IoPrecision, TilePlan};

/// Where a CE takes its accumulator operand from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccSource {
    /// First CE, first pass: the preloaded Y element.
    ZBuffer,
    /// First CE, later passes: the last CE's output.
    Feedback,
    /// The previous CE in the row.
    Chain,
}

/// Coordinates of the work a CE performs at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Issue {
    pub tile: usize,
    pub pass: usize,
    pub slot: usize,
    pub source: AccSource,
}

/// What CE `j` does at step `s`, if anything.
pub fn ce_issue(g: &StepGeometry, step: u64, j: usize) -> Option<Issue> {
    let u = step.checked_sub((j * g.period) as u64)?;
    let spt = g.steps_per_tile();
    if u >= g.start(g.tiles) {
        return None;
    }
    let tile = (u / spt) as usize;
    let rem = (u % spt) as usize;
    let (pass, slot) = (rem / g.width, rem % g.width);
    let source = match (j, pass) {
        (0, 0) => AccSource::ZBuffer,
        (0, _) => AccSource::Feedback,
        _ => AccSource::Chain,
    };
    Some(Issue { tile, pass, slot, source })
}

/// Run counters. CE-level counters are summed over all computing elements.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub total_cycles: u64,
    /// Cycles in which the array advanced.
    pub compute_cycles: u64,
    /// Cycles before the first step.
    pub fill_cycles: u64,
    /// Cycles after the last step (trailing stores).
    pub tail_cycles: u64,
    /// Idle cycles spent switching tiles.
    pub bubble_cycles: u64,
    /// Cycles the array waited for an operand.
    pub stall_cycles: u64,
    /// Issues on real (unpadded) data.
    pub ce_busy_cycles: u64,
    /// Stage-1 issues on the FMA unit, padding included.
    pub fma_active_cycles: u64,
    /// Stage-1 issues on the FNCOMP unit, padding included.
    pub fncomp_active_cycles: u64,
    /// Stage-2 comparator evaluations, padding included.
    pub stage2_active_cycles: u64,
    /// `∘` and `⋆` each count one operation per useful issue.
    pub ops_total: u64,
    pub utilization: f64,
    pub op_per_cycle: f64,
    /// Port handshakes refused by the memory model.
    pub port_stall_cycles: u64,
}

impl CycleStats {
    pub fn gflops_at(&self, freq_mhz: f64) -> f64 {
        self.op_per_cycle * freq_mhz * 1e-3
    }

    fn finish(&mut self, ces: usize) {
        self.ops_total = 2 * self.ce_busy_cycles;
        if self.total_cycles > 0 {
            self.utilization = self.ce_busy_cycles as f64 / (self.total_cycles as f64 * ces as f64);
            self.op_per_cycle = self.ops_total as f64 / self.total_cycles as f64;
        }
    }
}

/// One line of the per-cycle trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub access: Option<AccessKind>,
    pub port_stalled: bool,
    /// Step executed this cycle.
    pub step: Option<u64>,
    /// W beats waiting in the FIFO (arrived, not yet in a shift register).
    pub w_fifo: usize,
    /// Beats issued but not yet arrived.
    pub in_flight: usize,
}

impl fmt::Display for CycleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let access = match (self.access, self.port_stalled) {
            (Some(k), _) => k.label(),
            (None, true) => "STALL",
            (None, false) => "-",
        };
        let step = self.step.map_or_else(|| "-".to_string(), |s| s.to_string());
        write!(f, "{} {} step={} wfifo={} inflight={}", self.cycle, access, step, self.w_fifo, self.in_flight)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T: Copy> {
    pub z: IoMatrix<T>,
    pub stats: CycleStats,
    pub trace: AccessTrace,
    pub cycles: Vec<CycleRecord>,
}

struct Operands<T: Copy> {
    x: Matrix<T>,
    w: Matrix<T>,
    y: Matrix<T>,
}

/// One simulation instance. Single-threaded; advance with [`Engine::step`].
pub struct Engine<T: Element> {
    cfg: ArrayConfig,
    kernel: SemiringKernel,
    params: SimParams,
    plan: TilePlan,
    geom: StepGeometry,
    ops: Operands<T>,
    streamer: Streamer,
    needs: NeedTracker,
    in_flight: VecDeque<(u64, usize)>,

    w_fifo: VecDeque<Vec<T>>,
    w_regs: Vec<Vec<T>>,
    /// `[bank][row][H·(P+1)]`.
    x_banks: [Vec<Vec<T>>; 2],
    /// `[row][H·(P+1)]`.
    z_lines: Vec<Vec<T>>,
    /// `[ce][ring slot][row]`: results in flight through each CE.
    pipes: Vec<Vec<Vec<T>>>,
    z_out: Vec<T>,

    cycle: u64,
    steps_done: u64,
    last_step_cycle: Option<u64>,
    stats: CycleStats,
    trace: AccessTrace,
    records: Vec<CycleRecord>,
}

impl<T: Element> Engine<T> {
    /// Validates inputs, pads them and computes the issue schedule.
    pub fn new(
        cfg: ArrayConfig,
        kernel: SemiringKernel,
        x: &IoMatrix<T>,
        w: &IoMatrix<T>,
        y: &IoMatrix<T>,
        memory: MemoryModel,
        params: SimParams,
    ) -> Result<Self> {
        let want_fp8 = cfg.io == IoPrecision::Fp8;
        for m in [x, w, y] {
            if m.is_fp8() != want_fp8 {
                return Err(SimError::InvalidConfig(format!(
                    "{} operand is {} but the array is configured for {} I/O",
                    m.role(),
                    if m.is_fp8() { "FP8" } else { "FP16" },
                    cfg.io
                )));
            }
        }
        let (x, w, y) = (x.widen(), w.widen(), y.widen());
        let (m, n, k) = check_dims(&x, &w, &y)?;
        let plan = plan_tiles(&cfg, Dims::new(m, n, k))?;
        let schedule = issue_schedule(&cfg, &plan, &params)?;
        Ok(Self::with_schedule(cfg, kernel, plan, schedule, x, w, y, memory, params))
    }

    #[allow(clippy::too_many_arguments)]
    fn with_schedule(
        cfg: ArrayConfig,
        kernel: SemiringKernel,
        plan: TilePlan,
        schedule: Schedule,
        x: Matrix<T>,
        w: Matrix<T>,
        y: Matrix<T>,
        memory: MemoryModel,
        params: SimParams,
    ) -> Self {
        let geom = StepGeometry::new(&plan);
        let p = plan.padded;
        let ops = Operands {
            x: x.padded(p.m, p.n, kernel.pad_x()),
            w: w.padded(p.n, p.k, kernel.pad_w()),
            y: y.padded(p.m, p.k, kernel.pad_y()),
        };
        let needs = NeedTracker::new(geom.total_steps(), schedule.beats.iter());
        let (l, d) = (geom.rows, geom.width);
        let line = vec![kernel.pad_y::<T>(); d];
        Engine {
            cfg,
            kernel,
            params,
            plan,
            geom,
            ops,
            streamer: Streamer::new(schedule, memory),
            needs,
            in_flight: VecDeque::new(),
            w_fifo: VecDeque::new(),
            w_regs: vec![vec![kernel.pad_w::<T>(); d]; geom.cols],
            x_banks: [vec![vec![kernel.pad_x::<T>(); d]; l], vec![vec![kernel.pad_x::<T>(); d]; l]],
            z_lines: vec![line; l],
            pipes: vec![vec![vec![kernel.pad_y::<T>(); l]; geom.period]; geom.cols],
            z_out: vec![kernel.pad_y::<T>(); p.m * p.k],
            cycle: 0,
            steps_done: 0,
            last_step_cycle: None,
            stats: CycleStats::default(),
            trace: AccessTrace::default(),
            records: Vec::new(),
        }
    }

    pub fn plan(&self) -> &TilePlan {
        &self.plan
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.cfg
    }

    pub fn kernel(&self) -> SemiringKernel {
        self.kernel
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn stats(&self) -> &CycleStats {
        &self.stats
    }

    pub fn schedule(&self) -> &Schedule {
        self.streamer.schedule()
    }

    pub fn is_done(&self) -> bool {
        self.steps_done == self.geom.total_steps() && self.streamer.is_done()
    }

    /// Advances one clock cycle. Returns `false` (and does nothing) once the
    /// run is complete.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let cycle = self.cycle;

        while let Some(&(avail, idx)) = self.in_flight.front() {
            if avail > cycle {
                break;
            }
            self.in_flight.pop_front();
            self.deliver(idx);
        }

        let mut access = None;
        let hs = self.streamer.handshake_step(cycle, self.steps_done);
        match hs {
            Handshake::Transferred { index, avail } => {
                let beat = *self.streamer.beat(index);
                access = Some(beat.kind);
                self.trace.push(Access {
                    cycle,
                    kind: beat.kind,
                    elems: beat.elems,
                    addr: beat.addr,
                    tile: self.plan.tile_coords(beat.tile),
                });
                if beat.kind == AccessKind::StZ {
                    self.store(&beat);
                }
                self.in_flight.push_back((avail, index));
            }
            Handshake::Stalled => self.stats.port_stall_cycles += 1,
            Handshake::Idle => {}
        }

        let mut executed = None;
        let total_steps = self.geom.total_steps();
        if self.steps_done < total_steps {
            let s = self.steps_done;
            let gap = if self.geom.is_tile_switch(s) { self.params.tile_switch_cycles } else { 0 };
            let switch_wait = self.last_step_cycle.is_some_and(|c| cycle < c + 1 + gap);
            if switch_wait {
                self.stats.bubble_cycles += 1;
            } else if self.needs.ready() {
                self.compute(s);
                executed = Some(s);
                self.steps_done += 1;
                self.needs.advance();
                self.last_step_cycle = Some(cycle);
                self.stats.compute_cycles += 1;
            } else if self.last_step_cycle.is_none() {
                self.stats.fill_cycles += 1;
            } else {
                self.stats.stall_cycles += 1;
            }
        } else {
            self.stats.tail_cycles += 1;
        }

        if self.params.record_cycles {
            self.records.push(CycleRecord {
                cycle,
                access,
                port_stalled: hs == Handshake::Stalled,
                step: executed,
                w_fifo: self.w_fifo.len(),
                in_flight: self.in_flight.len(),
            });
        }
        self.cycle += 1;
        true
    }

    fn deliver(&mut self, idx: usize) {
        let beat: Beat = *self.streamer.beat(idx);
        let (rb, cb) = self.plan.tile_coords(beat.tile);
        let (l, d) = (self.geom.rows, self.geom.width);
        match beat.kind {
            AccessKind::LdW => {
                let row = self.ops.w.row(beat.index);
                self.w_fifo.push_back(row[cb * d..cb * d + d].to_vec());
            }
            AccessKind::LdX => {
                let g = beat.tile * self.geom.windows + beat.index;
                let src = self.ops.x.row(rb * l + beat.row);
                let start = beat.index * d;
                self.x_banks[g % 2][beat.row][..beat.elems].copy_from_slice(&src[start..start + beat.elems]);
            }
            AccessKind::LdY => {
                let src = self.ops.y.row(rb * l + beat.row);
                self.z_lines[beat.row].copy_from_slice(&src[cb * d..cb * d + d]);
            }
            AccessKind::StZ => {}
        }
        self.needs.arrive(beat.need);
    }

    fn store(&mut self, beat: &Beat) {
        let (rb, cb) = self.plan.tile_coords(beat.tile);
        let (l, d, k) = (self.geom.rows, self.geom.width, self.plan.padded.k);
        let base = (rb * l + beat.row) * k + cb * d;
        self.z_out[base..base + d].copy_from_slice(&self.z_lines[beat.row]);
    }

    #[allow(clippy::needless_range_loop)]
    fn compute(&mut self, s: u64) {
        let g = self.geom;
        let (l, h, q, d) = (g.rows, g.cols, g.period, g.width);
        let slot = (s % q as u64) as usize;
        let group = self.kernel.group();
        let dims = self.plan.dims;
        let fb = self.pipes[h - 1][slot].clone();

        for j in (0..h).rev() {
            let Some(is) = ce_issue(&g, s, j) else { continue };
            if is.slot == 0 {
                let beat = self.w_fifo.pop_front().expect("W beat scheduled before its need");
                self.w_regs[j] = beat;
            }
            let (rb, cb) = self.plan.tile_coords(is.tile);
            let n = is.pass * h + j;
            let kcol = cb * d + is.slot;
            let wv = self.w_regs[j][is.slot];
            let bank = (is.tile * g.windows + is.pass / q) % 2;
            let xcol = (is.pass % q) * h + j;
            let mut useful = 0u64;
            for r in 0..l {
                let acc = match is.source {
                    AccSource::ZBuffer => self.z_lines[r][is.slot],
                    AccSource::Feedback => fb[r],
                    AccSource::Chain => self.pipes[j - 1][slot][r],
                };
                let xv = self.x_banks[bank][r][xcol];
                let t = ce_stage1(self.kernel, xv, wv, acc);
                self.pipes[j][slot][r] = ce_stage2(self.kernel, t, acc);
                if rb * l + r < dims.m {
                    useful += 1;
                }
            }
            if n < dims.n && kcol < dims.k {
                self.stats.ce_busy_cycles += useful;
            }
            let issues = l as u64;
            match group {
                Group::Matmul | Group::Group1 => self.stats.fma_active_cycles += issues,
                Group::Group2 => self.stats.fncomp_active_cycles += issues,
            }
            if group != Group::Matmul {
                self.stats.stage2_active_cycles += issues;
            }
        }

        // last pass of the previous tile retires into the Z-buffer
        if let Some(prev) = s.checked_sub(d as u64) {
            if let Some(is) = ce_issue(&g, prev, 0) {
                if is.pass + 1 == g.passes {
                    for r in 0..l {
                        self.z_lines[r][is.slot] = fb[r];
                    }
                }
            }
        }
    }

    /// Runs to completion.
    pub fn run_to_end(&mut self) {
        while self.step() {}
    }

    pub fn finish(mut self) -> RunOutput<T> {
        self.run_to_end();
        self.stats.total_cycles = self.cycle;
        self.stats.finish(self.cfg.ces());
        let p = self.plan.padded;
        let dims = self.plan.dims;
        let padded = Matrix::new(Role::Z, p.m, p.k, std::mem::take(&mut self.z_out)).expect("padded Z shape");
        let z = padded.cropped(dims.m, dims.k);
        let z = match self.cfg.io {
            IoPrecision::Fp16 => IoMatrix::Native(z),
            IoPrecision::Fp8 => {
                let fmt = self.params.z_format;
                IoMatrix::Fp8(z.map(|v| v.to_fp8(fmt)))
            }
        };
        RunOutput { z, stats: self.stats, trace: self.trace, cycles: self.records }
    }
}

/// Simulates one GEMM-Op end to end.
pub fn run<T: Element>(
    cfg: &ArrayConfig,
    kernel: SemiringKernel,
    x: &IoMatrix<T>,
    w: &IoMatrix<T>,
    y: &IoMatrix<T>,
    memory: &MemoryModel,
    params: &SimParams,
) -> Result<RunOutput<T>> {
    Ok(Engine::new(*cfg, kernel, x, w, y, memory.clone(), *params)?.finish())
}

/// Convenience wrapper for native-precision operands.
pub fn run_native<T: Element>(
    cfg: &ArrayConfig,
    kernel: SemiringKernel,
    x: &Matrix<T>,
    w: &Matrix<T>,
    y: &Matrix<T>,
    memory: &MemoryModel,
    params: &SimParams,
) -> Result<(Matrix<T>, CycleStats, AccessTrace)> {
    let out = run(
        cfg,
        kernel,
        &IoMatrix::Native(x.clone()),
        &IoMatrix::Native(w.clone()),
        &IoMatrix::Native(y.clone()),
        memory,
        params,
    )?;
    match out.z {
        IoMatrix::Native(z) => Ok((z, out.stats, out.trace)),
        IoMatrix::Fp8(_) => unreachable!("native operands require FP16 I/O"),
    }
}

/// Narrows every element of a matrix into an FP8 format.
pub fn to_fp8_matrix<T: Element>(m: &Matrix<T>, format: crate::fp::Fp8Format) -> Matrix<Fp8> {
    m.map(|v| v.to_fp8(format))
}
