//! Event-level timing oracle.
//!
//! Computes the cycle of every beat and step of a run as a max-plus
//! recurrence over the schedule order, without simulating the datapath:
//!
//! * beat `i` issues at the first free port cycle no earlier than one past
//!   beat `i-1` and one past the step that releases it;
//! * step `s` executes no earlier than one past step `s-1` (plus the tile
//!   switch bubble) and no earlier than the arrival of every beat it needs.
//!
//! Release and need thresholds are rederived here from beat identities, so
//! the oracle also cross-checks the streamer's bookkeeping.

use crate::error::{Result, SimError};
use crate::streamer::{AccessKind, Beat, MemoryModel, Schedule, SimParams};
use crate::tiling::TilePlan;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub total_cycles: u64,
    pub issue_cycles: Vec<u64>,
    pub step_cycles: Vec<u64>,
}

struct Shape {
    h: u64,
    q: u64,
    d: u64,
    tiles: u64,
    passes: u64,
    windows: u64,
    depth: u64,
}

impl Shape {
    fn start(&self, t: u64) -> u64 {
        t * self.passes * self.d
    }

    fn w_need(&self, w: u64) -> u64 {
        let per_tile = self.passes * self.h;
        let (t, n) = (w / per_tile, w % per_tile);
        self.start(t) + (n / self.h) * self.d + (n % self.h) * self.q
    }

    fn thresholds(&self, b: &Beat) -> (u64, Option<u64>) {
        let t = b.tile as u64;
        match b.kind {
            AccessKind::LdW => {
                let w = t * self.passes * self.h + b.index as u64;
                let rel = if w >= self.depth { self.w_need(w - self.depth) + 1 } else { 0 };
                (rel, Some(self.w_need(w)))
            }
            AccessKind::LdX => {
                let v = b.index as u64;
                let g = t * self.windows + v;
                let rel = if g >= 2 {
                    let (pt, pv) = ((g - 2) / self.windows, (g - 2) % self.windows);
                    let npass = (self.passes - pv * self.q).min(self.q);
                    self.start(pt) + pv * self.q * self.d + npass * self.d + (self.h - 1) * self.q
                } else {
                    0
                };
                (rel, Some(self.start(t) + v * self.q * self.d))
            }
            AccessKind::LdY => {
                let rel = if t == 0 { 0 } else { self.start(t - 1) + self.d };
                (rel, Some(self.start(t)))
            }
            AccessKind::StZ => {
                let need = (t + 2 <= self.tiles).then(|| self.start(t + 2));
                (self.start(t + 1) + self.d, need)
            }
        }
    }

    fn bubble(&self, s: u64, cycles: u64) -> u64 {
        let spt = self.passes * self.d;
        if s > 0 && s.is_multiple_of(spt) && s < self.start(self.tiles) {
            cycles
        } else {
            0
        }
    }
}

/// Predicts the cycle of every event when `schedule` is replayed against
/// `memory`.
pub fn predict(plan: &TilePlan, schedule: &Schedule, memory: &MemoryModel, params: &SimParams) -> Result<Prediction> {
    let shape = Shape {
        h: plan.cols as u64,
        q: plan.pipe_regs as u64 + 1,
        d: plan.width() as u64,
        tiles: plan.tiles() as u64,
        passes: plan.passes_per_tile as u64,
        windows: plan.windows_per_tile() as u64,
        depth: params.fifo_depth as u64,
    };
    let total_steps = shape.start(shape.tiles) + shape.d;
    let beats = &schedule.beats;
    let thresholds: Vec<_> = beats.iter().map(|b| shape.thresholds(b)).collect();

    let mut remaining = vec![0u32; total_steps as usize];
    for &(_, need) in &thresholds {
        if let Some(n) = need {
            remaining[n as usize] += 1;
        }
    }
    let mut arrival = vec![0u64; total_steps as usize];
    let mut issue = Vec::with_capacity(beats.len());
    let mut steps: Vec<u64> = Vec::with_capacity(total_steps as usize);
    let mut operands_ready = 0u64;
    let latency = memory.load_latency();

    while issue.len() < beats.len() || (steps.len() as u64) < total_steps {
        let before = (issue.len(), steps.len());
        while let Some(b) = beats.get(issue.len()) {
            let (rel, need) = thresholds[issue.len()];
            if rel > steps.len() as u64 {
                break;
            }
            let mut earliest = issue.last().map_or(0, |c| c + 1);
            if rel > 0 {
                earliest = earliest.max(steps[rel as usize - 1] + 1);
            }
            let c = memory.next_free(earliest);
            issue.push(c);
            if let Some(n) = need {
                let avail = c + 1 + if b.kind.is_load() { latency } else { 0 };
                arrival[n as usize] = arrival[n as usize].max(avail);
                remaining[n as usize] -= 1;
            }
        }
        while (steps.len() as u64) < total_steps {
            let s = steps.len() as u64;
            if remaining[s as usize] > 0 {
                break;
            }
            operands_ready = operands_ready.max(arrival[s as usize]);
            let after_prev = steps.last().map_or(0, |c| c + 1 + shape.bubble(s, params.tile_switch_cycles));
            steps.push(after_prev.max(operands_ready));
        }
        if (issue.len(), steps.len()) == before {
            return Err(SimError::InvalidConfig("schedule order deadlocks".into()));
        }
    }
    let total = steps.last().map_or(0, |c| c + 1).max(issue.last().map_or(0, |c| c + 1));
    Ok(Prediction { total_cycles: total, issue_cycles: issue, step_cycles: steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streamer::{issue_schedule, stream_beats, StallPattern};
    use crate::tiling::{plan_tiles, ArrayConfig, Dims};

    fn setup(dims: Dims) -> (TilePlan, Schedule, SimParams) {
        let cfg = ArrayConfig::new(6, 3, 2).with_port_bits(160);
        let plan = plan_tiles(&cfg, dims).unwrap();
        let params = SimParams::default();
        let s = issue_schedule(&cfg, &plan, &params).unwrap();
        (plan, s, params)
    }

    #[test]
    fn thresholds_agree_with_streamer() {
        let cfg = ArrayConfig::new(5, 3, 2).with_port_bits(160);
        let plan = plan_tiles(&cfg, Dims::new(11, 20, 13)).unwrap();
        let params = SimParams { fifo_depth: 3, ..Default::default() };
        let shape = Shape {
            h: 3,
            q: 3,
            d: 9,
            tiles: plan.tiles() as u64,
            passes: plan.passes_per_tile as u64,
            windows: plan.windows_per_tile() as u64,
            depth: 3,
        };
        for b in stream_beats(&cfg, &plan, &params).iter().flatten() {
            assert_eq!(shape.thresholds(b), (b.rel, b.need), "{b:?}");
        }
    }

    #[test]
    fn ideal_prediction_equals_schedule() {
        for dims in [Dims::cube(1), Dims::new(7, 25, 19), Dims::new(13, 4, 30)] {
            let (plan, s, params) = setup(dims);
            let p = predict(&plan, &s, &MemoryModel::Ideal, &params).unwrap();
            assert_eq!(p.total_cycles, s.ideal_total_cycles);
            assert_eq!(p.issue_cycles, s.ideal_cycle);
            assert_eq!(p.step_cycles, s.ideal_step_cycle);
        }
    }

    #[test]
    fn stalls_never_speed_up() {
        let (plan, s, params) = setup(Dims::new(12, 30, 18));
        let base = predict(&plan, &s, &MemoryModel::Ideal, &params).unwrap().total_cycles;
        for start in (0..base).step_by(37) {
            let m = MemoryModel::StallPattern(StallPattern::burst(start, 5));
            let t = predict(&plan, &s, &m, &params).unwrap().total_cycles;
            assert!(t >= base && t <= base + 5, "{start}: {t} vs {base}");
        }
    }
}
