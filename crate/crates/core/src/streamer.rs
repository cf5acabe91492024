//! The single wide memory port: beat schedule, memory models and the
//! access trace.
//!
//! Time is tracked in two domains. *Steps* are lock-step advances of the
//! whole array; *cycles* are clock cycles. A cycle executes at most one step
//! and transfers at most one beat. Every beat carries a release threshold
//! (`rel`: steps that must have completed before it may be issued) and a need
//! (`need`: the first step that cannot execute until it has arrived).

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::tiling::{ArrayConfig, TilePlan};

/// Port timing behaviour.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryModel {
    /// Loads are usable the cycle after issue.
    #[default]
    Ideal,
    /// Loads are usable `1 + n` cycles after issue.
    FixedLatency(u32),
    /// The port refuses every handshake in the listed cycles.
    StallPattern(StallPattern),
}

impl MemoryModel {
    pub fn load_latency(&self) -> u64 {
        match self {
            MemoryModel::FixedLatency(n) => *n as u64,
            _ => 0,
        }
    }

    pub fn port_stalled(&self, cycle: u64) -> bool {
        match self {
            MemoryModel::StallPattern(p) => p.contains(cycle),
            _ => false,
        }
    }

    /// First cycle `>= cycle` in which the port accepts a handshake.
    pub fn next_free(&self, cycle: u64) -> u64 {
        match self {
            MemoryModel::StallPattern(p) => p.next_free(cycle),
            _ => cycle,
        }
    }

    /// Parses `ideal`, `lat:N` or `stalls:<pattern>` where the pattern is in
    /// [`StallPattern::parse`] syntax (file loading is left to the caller).
    pub fn parse_inline(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("ideal") {
            return Ok(MemoryModel::Ideal);
        }
        if let Some(n) = s.strip_prefix("lat:") {
            let n = n.trim().parse().map_err(|_| SimError::InvalidConfig(format!("bad latency in `{s}`")))?;
            return Ok(MemoryModel::FixedLatency(n));
        }
        if let Some(p) = s.strip_prefix("stalls:") {
            return Ok(MemoryModel::StallPattern(p.parse()?));
        }
        Err(SimError::InvalidConfig(format!("unknown memory model `{s}` (expected ideal, lat:N or stalls:...)")))
    }
}

impl fmt::Display for MemoryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryModel::Ideal => f.write_str("ideal"),
            MemoryModel::FixedLatency(n) => write!(f, "lat:{n}"),
            MemoryModel::StallPattern(p) => write!(f, "stalls:{} cycles", p.len()),
        }
    }
}

/// A deterministic set of cycles in which the port is unavailable.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StallPattern {
    cycles: BTreeSet<u64>,
}

impl StallPattern {
    pub fn new(cycles: impl IntoIterator<Item = u64>) -> Self {
        StallPattern { cycles: cycles.into_iter().collect() }
    }

    /// `k` consecutive stalled cycles starting at `start`.
    pub fn burst(start: u64, k: u64) -> Self {
        StallPattern::new(start..start + k)
    }

    pub fn contains(&self, cycle: u64) -> bool {
        self.cycles.contains(&cycle)
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn cycles(&self) -> impl Iterator<Item = u64> + '_ {
        self.cycles.iter().copied()
    }

    pub fn next_free(&self, mut cycle: u64) -> u64 {
        for &c in self.cycles.range(cycle..) {
            if c != cycle {
                break;
            }
            cycle += 1;
        }
        cycle
    }

    /// Text form: cycle numbers or inclusive `a-b` ranges, separated by
    /// whitespace, commas or newlines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cycles = BTreeSet::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("");
            for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
                let bad = || SimError::Format(format!("bad stall entry `{tok}`"));
                match tok.split_once('-') {
                    Some((a, b)) => {
                        let a: u64 = a.parse().map_err(|_| bad())?;
                        let b: u64 = b.parse().map_err(|_| bad())?;
                        if b < a {
                            return Err(bad());
                        }
                        cycles.extend(a..=b);
                    }
                    None => {
                        cycles.insert(tok.parse().map_err(|_| bad())?);
                    }
                }
            }
        }
        Ok(StallPattern { cycles })
    }
}

impl FromStr for StallPattern {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        StallPattern::parse(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccessKind {
    #[serde(rename = "ST_Z")]
    StZ,
    #[serde(rename = "LD_Y")]
    LdY,
    #[serde(rename = "LD_X")]
    LdX,
    #[serde(rename = "LD_W")]
    LdW,
}

impl AccessKind {
    pub const ALL: [AccessKind; 4] = [AccessKind::LdX, AccessKind::LdW, AccessKind::LdY, AccessKind::StZ];

    pub fn label(self) -> &'static str {
        match self {
            AccessKind::LdX => "LD_X",
            AccessKind::LdW => "LD_W",
            AccessKind::LdY => "LD_Y",
            AccessKind::StZ => "ST_Z",
        }
    }

    pub fn is_load(self) -> bool {
        self != AccessKind::StZ
    }

    /// Tie-break among beats with equal need; lower goes first.
    fn rank(self) -> u8 {
        match self {
            AccessKind::StZ => 0,
            AccessKind::LdY => 1,
            AccessKind::LdX => 2,
            AccessKind::LdW => 3,
        }
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One port transfer of (up to) a buffer line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beat {
    pub kind: AccessKind,
    /// Tile index in walk order.
    pub tile: usize,
    /// W: reduction row `n`; X: window within the tile; Y/Z: 0.
    pub index: usize,
    /// Buffer line (array row) for X/Y/Z; 0 for W.
    pub row: usize,
    pub elems: usize,
    /// Steps that must have completed before issue.
    pub rel: u64,
    /// First step that requires this beat; `None` for the final stores.
    pub need: Option<u64>,
    pub addr: u64,
}

/// Step-domain geometry shared by the schedule, the engine and the timing
/// oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepGeometry {
    pub rows: usize,
    pub cols: usize,
    /// `P+1`.
    pub period: usize,
    /// `H·(P+1)`.
    pub width: usize,
    pub tiles: usize,
    pub passes: usize,
    pub windows: usize,
    pub padded_n: usize,
}

impl StepGeometry {
    pub fn new(plan: &TilePlan) -> Self {
        StepGeometry {
            rows: plan.rows,
            cols: plan.cols,
            period: plan.pipe_regs + 1,
            width: plan.width(),
            tiles: plan.tiles(),
            passes: plan.passes_per_tile,
            windows: plan.windows_per_tile(),
            padded_n: plan.padded.n,
        }
    }

    pub fn steps_per_tile(&self) -> u64 {
        (self.passes * self.width) as u64
    }

    /// First step of tile `t` (`t == tiles` is the drain).
    pub fn start(&self, t: usize) -> u64 {
        t as u64 * self.steps_per_tile()
    }

    /// Compute steps plus the `H·(P+1)` drain steps that retire the last tile.
    pub fn total_steps(&self) -> u64 {
        self.start(self.tiles) + self.width as u64
    }

    pub fn window_passes(&self, v: usize) -> usize {
        (self.passes - v * self.period).min(self.period)
    }

    pub fn window_start(&self, t: usize, v: usize) -> u64 {
        self.start(t) + (v * self.period * self.width) as u64
    }

    /// Steps completed once every CE has finished with X window `(t, v)`.
    pub fn window_retire(&self, t: usize, v: usize) -> u64 {
        self.window_start(t, v) + (self.window_passes(v) * self.width + (self.cols - 1) * self.period) as u64
    }

    pub fn window_elems(&self, v: usize) -> usize {
        (self.padded_n - v * self.width).min(self.width)
    }

    /// Whether the step is preceded by a tile switch.
    pub fn is_tile_switch(&self, step: u64) -> bool {
        let spt = self.steps_per_tile();
        step > 0 && step.is_multiple_of(spt) && step < self.start(self.tiles)
    }
}

/// Tunables of the streamer and engine that are not array parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimParams {
    /// W beats that may be in flight or buffered ahead of the shift registers.
    pub fifo_depth: usize,
    /// Idle cycles between the last step of a tile and the first of the next.
    pub tile_switch_cycles: u64,
    /// Output format when I/O is FP8.
    pub z_format: crate::fp::Fp8Format,
    /// Keep one [`CycleRecord`](crate::datapath::CycleRecord) per cycle.
    pub record_cycles: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            fifo_depth: 2,
            tile_switch_cycles: 1,
            z_format: crate::fp::Fp8Format::E4M3,
            record_cycles: false,
        }
    }
}

/// Flat byte addresses: X, W, Y, Z stored back to back, row-major, padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressMap {
    pub elem_bytes: u64,
    pub x_base: u64,
    pub w_base: u64,
    pub y_base: u64,
    pub z_base: u64,
    n: u64,
    k: u64,
}

impl AddressMap {
    pub fn new(cfg: &ArrayConfig, plan: &TilePlan) -> Self {
        let e = (cfg.io.elem_bits() / 8) as u64;
        let (m, n, k) = (plan.padded.m as u64, plan.padded.n as u64, plan.padded.k as u64);
        let x_base = 0;
        let w_base = x_base + m * n * e;
        let y_base = w_base + n * k * e;
        let z_base = y_base + m * k * e;
        AddressMap { elem_bytes: e, x_base, w_base, y_base, z_base, n, k }
    }

    pub fn x(&self, row: usize, col: usize) -> u64 {
        self.x_base + (row as u64 * self.n + col as u64) * self.elem_bytes
    }

    pub fn w(&self, row: usize, col: usize) -> u64 {
        self.w_base + (row as u64 * self.k + col as u64) * self.elem_bytes
    }

    pub fn y(&self, row: usize, col: usize) -> u64 {
        self.y_base + (row as u64 * self.k + col as u64) * self.elem_bytes
    }

    pub fn z(&self, row: usize, col: usize) -> u64 {
        self.z_base + (row as u64 * self.k + col as u64) * self.elem_bytes
    }
}

/// Every beat of a run, per stream, in stream order.
pub fn stream_beats(cfg: &ArrayConfig, plan: &TilePlan, params: &SimParams) -> [Vec<Beat>; 4] {
    let g = StepGeometry::new(plan);
    let addr = AddressMap::new(cfg, plan);
    let (l, d, q) = (g.rows, g.width, g.period as u64);
    let depth = params.fifo_depth.max(1);

    let mut w: Vec<Beat> = Vec::with_capacity(g.tiles * g.passes * g.cols);
    let mut x = Vec::with_capacity(g.tiles * g.windows * l);
    let mut y = Vec::with_capacity(g.tiles * l);
    let mut z = Vec::with_capacity(g.tiles * l);
    for t in 0..g.tiles {
        let (rb, cb) = plan.tile_coords(t);
        for p in 0..g.passes {
            for j in 0..g.cols {
                let need = g.start(t) + (p * d) as u64 + j as u64 * q;
                let rel = if w.len() >= depth { w[w.len() - depth].need.map_or(0, |n: u64| n + 1) } else { 0 };
                let n = p * g.cols + j;
                w.push(Beat { kind: AccessKind::LdW, tile: t, index: n, row: 0, elems: d, rel, need: Some(need), addr: addr.w(n, cb * d) });
            }
        }
        for v in 0..g.windows {
            let gw = t * g.windows + v;
            let rel = if gw >= 2 {
                let prev = gw - 2;
                g.window_retire(prev / g.windows, prev % g.windows)
            } else {
                0
            };
            for r in 0..l {
                x.push(Beat {
                    kind: AccessKind::LdX,
                    tile: t,
                    index: v,
                    row: r,
                    elems: g.window_elems(v),
                    rel,
                    need: Some(g.window_start(t, v)),
                    addr: addr.x(rb * l + r, v * d),
                });
            }
        }
        let y_rel = if t == 0 { 0 } else { g.start(t - 1) + d as u64 };
        let z_need = if t + 2 <= g.tiles { Some(g.start(t + 2)) } else { None };
        for r in 0..l {
            y.push(Beat { kind: AccessKind::LdY, tile: t, index: 0, row: r, elems: d, rel: y_rel, need: Some(g.start(t)), addr: addr.y(rb * l + r, cb * d) });
            z.push(Beat {
                kind: AccessKind::StZ,
                tile: t,
                index: 0,
                row: r,
                elems: d,
                rel: g.start(t + 1) + d as u64,
                need: z_need,
                addr: addr.z(rb * l + r, cb * d),
            });
        }
    }
    [z, y, x, w]
}

/// Counts, for the next step to execute, how many of the beats it depends on
/// have not arrived yet.
#[derive(Debug, Clone)]
pub(crate) struct NeedTracker {
    expected: Vec<u32>,
    arrived: Vec<u32>,
    next_step: u64,
    missing: i64,
}

impl NeedTracker {
    pub(crate) fn new<'a>(total_steps: u64, beats: impl Iterator<Item = &'a Beat>) -> Self {
        let mut expected = vec![0u32; total_steps as usize + 1];
        for b in beats {
            if let Some(n) = b.need {
                expected[n as usize] += 1;
            }
        }
        let missing = expected[0] as i64;
        NeedTracker { arrived: vec![0; expected.len()], expected, next_step: 0, missing }
    }

    pub(crate) fn arrive(&mut self, need: Option<u64>) {
        if let Some(n) = need {
            self.arrived[n as usize] += 1;
            if n <= self.next_step {
                self.missing -= 1;
            }
        }
    }

    /// Whether step `next_step` has all its operands.
    pub(crate) fn ready(&self) -> bool {
        self.missing == 0
    }

    pub(crate) fn advance(&mut self) {
        self.next_step += 1;
        let s = self.next_step as usize;
        if s < self.expected.len() {
            self.missing += self.expected[s] as i64 - self.arrived[s] as i64;
        }
    }
}

/// The interleaved issue order of every beat, computed for ideal memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub beats: Vec<Beat>,
    /// Issue cycle of each beat under ideal memory.
    pub ideal_cycle: Vec<u64>,
    /// Cycle in which each step executes under ideal memory.
    pub ideal_step_cycle: Vec<u64>,
    pub ideal_total_cycles: u64,
}

/// List-schedules every beat onto the port, assuming ideal memory.
///
/// Each cycle the released beat with the earliest need is issued (ties:
/// store, Y, X, W); then the array advances one step if it has every
/// operand and is not in a tile switch. A Y load only becomes eligible after
/// the store that empties its buffer line.
pub fn issue_schedule(cfg: &ArrayConfig, plan: &TilePlan, params: &SimParams) -> Result<Schedule> {
    cfg.validate_all()?;
    if params.fifo_depth == 0 {
        return Err(SimError::InvalidConfig("W FIFO depth must be at least 1".into()));
    }
    let g = StepGeometry::new(plan);
    let streams = stream_beats(cfg, plan, params);
    let total_beats: usize = streams.iter().map(Vec::len).sum();
    let total_steps = g.total_steps();
    let mut needs = NeedTracker::new(total_steps, streams.iter().flatten());
    let mut heads = [0usize; 4];
    let (zs, ys) = (0, 1);

    let mut beats = Vec::with_capacity(total_beats);
    let mut ideal_cycle = Vec::with_capacity(total_beats);
    let mut step_cycle = Vec::with_capacity(total_steps as usize);
    let mut inflight: std::collections::VecDeque<(u64, Option<u64>)> = Default::default();
    let mut steps_done = 0u64;
    let mut last_step: Option<u64> = None;
    let mut cycle = 0u64;
    let mut last_issue = 0u64;

    while steps_done < total_steps || beats.len() < total_beats {
        while let Some(&(avail, need)) = inflight.front() {
            if avail > cycle {
                break;
            }
            needs.arrive(need);
            inflight.pop_front();
        }

        let mut pick: Option<(usize, (u64, u8))> = None;
        for (si, stream) in streams.iter().enumerate() {
            let Some(b) = stream.get(heads[si]) else { continue };
            if b.rel > steps_done {
                continue;
            }
            // a Y line must have been stored before it is reloaded
            if si == ys && b.tile >= 2 && heads[zs] <= (b.tile - 2) * g.rows + b.row {
                continue;
            }
            let key = (b.need.unwrap_or(u64::MAX), b.kind.rank());
            if pick.is_none_or(|(_, k)| key < k) {
                pick = Some((si, key));
            }
        }
        if let Some((si, _)) = pick {
            let b = streams[si][heads[si]];
            heads[si] += 1;
            inflight.push_back((cycle + 1, b.need));
            beats.push(b);
            ideal_cycle.push(cycle);
            last_issue = cycle;
        }

        if steps_done < total_steps && needs.ready() {
            let gap = if g.is_tile_switch(steps_done) { params.tile_switch_cycles } else { 0 };
            if last_step.is_none_or(|c| cycle >= c + 1 + gap) {
                step_cycle.push(cycle);
                last_step = Some(cycle);
                steps_done += 1;
                needs.advance();
            }
        }
        cycle += 1;
        if cycle > 64 * (total_steps + total_beats as u64) + 1024 {
            return Err(SimError::InvalidConfig(format!("schedule for {cfg} does not make progress")));
        }
    }
    let total = (last_step.unwrap_or(0) + 1).max(last_issue + 1);
    Ok(Schedule { beats, ideal_cycle, ideal_step_cycle: step_cycle, ideal_total_cycles: total })
}

/// Result of one handshake attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handshake {
    /// The beat moved; loads become usable at `avail`.
    Transferred { index: usize, avail: u64 },
    /// The next beat is released but the memory withheld ready/valid.
    Stalled,
    /// Nothing to transfer this cycle.
    Idle,
}

/// Replays a [`Schedule`] against a memory model.
#[derive(Debug, Clone)]
pub struct Streamer {
    schedule: Schedule,
    memory: MemoryModel,
    next: usize,
}

impl Streamer {
    pub fn new(schedule: Schedule, memory: MemoryModel) -> Self {
        Streamer { schedule, memory, next: 0 }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn memory(&self) -> &MemoryModel {
        &self.memory
    }

    pub fn beat(&self, index: usize) -> &Beat {
        &self.schedule.beats[index]
    }

    pub fn is_done(&self) -> bool {
        self.next == self.schedule.beats.len()
    }

    /// Attempts the next beat in schedule order during `cycle`, given the
    /// number of steps the array has completed before this cycle.
    pub fn handshake_step(&mut self, cycle: u64, steps_done: u64) -> Handshake {
        let Some(b) = self.schedule.beats.get(self.next) else { return Handshake::Idle };
        if b.rel > steps_done {
            return Handshake::Idle;
        }
        if self.memory.port_stalled(cycle) {
            return Handshake::Stalled;
        }
        let latency = if b.kind.is_load() { self.memory.load_latency() } else { 0 };
        let index = self.next;
        self.next += 1;
        Handshake::Transferred { index, avail: cycle + 1 + latency }
    }
}

/// One port transfer as observed in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub cycle: u64,
    pub kind: AccessKind,
    pub elems: usize,
    pub addr: u64,
    pub tile: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessTrace {
    pub accesses: Vec<Access>,
}

impl AccessTrace {
    pub fn push(&mut self, a: Access) {
        self.accesses.push(a);
    }

    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn count(&self, kind: AccessKind) -> usize {
        self.accesses.iter().filter(|a| a.kind == kind).count()
    }

    pub fn elems(&self, kind: AccessKind) -> usize {
        self.accesses.iter().filter(|a| a.kind == kind).map(|a| a.elems).sum()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "cycle,kind,elems,addr")?;
        for a in &self.accesses {
            writeln!(out, "{},{},{},{}", a.cycle, a.kind, a.elems, a.addr)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
