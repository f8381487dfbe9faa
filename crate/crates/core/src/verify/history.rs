//! Per-submesh update histories reconstructed from a trace.

use crate::des::SimTime;
use crate::mesh::Partition;
use crate::physics::{NumericalFlux, State};
use crate::trace::EventTrace;

use super::Violation;

pub(super) struct History<'a> {
    pub trace: &'a EventTrace,
    pub partition: Partition,
    /// Update ticks per submesh, starting with tick 0.
    pub ticks: Vec<Vec<SimTime>>,
    /// Trace index of each update, aligned with `ticks[s][1..]`.
    pub index: Vec<Vec<usize>>,
}

impl<'a> History<'a> {
    pub fn new(trace: &'a EventTrace) -> Result<Self, Violation> {
        let partition = trace.partition().map_err(|e| Violation { tick: 0, submesh: 0, detail: e.to_string() })?;
        let k = partition.n_submeshes();
        let mut ticks = vec![vec![0]; k];
        let mut index = vec![Vec::new(); k];
        for (i, u) in trace.updates.iter().enumerate() {
            let bad = |detail: String| Violation { tick: u.tick, submesh: u.submesh, detail };
            if u.submesh >= k || partition.range(u.submesh) != (u.cell_lo..u.cell_hi) {
                return Err(bad(format!("update covers cells {}..{} which is not a submesh", u.cell_lo, u.cell_hi)));
            }
            let last = *ticks[u.submesh].last().expect("starts with tick 0");
            if u.tick <= last {
                return Err(bad(format!("update times not strictly increasing: {} after {last}", u.tick)));
            }
            ticks[u.submesh].push(u.tick);
            index[u.submesh].push(i);
        }
        Ok(Self { trace, partition, ticks, index })
    }

    pub fn n_cells(&self) -> usize {
        self.trace.n_cells()
    }

    pub fn periodic(&self) -> bool {
        self.trace.header.periodic
    }

    pub fn owner(&self, cell: usize) -> usize {
        self.partition.submesh_of(cell)
    }

    /// Position in `ticks[s]` of the last update at or before `t`.
    fn slot(&self, s: usize, t: SimTime) -> usize {
        self.ticks[s].partition_point(|&x| x <= t) - 1
    }

    pub fn next_tick(&self, s: usize, t: SimTime) -> Option<SimTime> {
        self.ticks[s].get(self.slot(s, t) + 1).copied()
    }

    /// State of `cell` after every update at or before `t`.
    pub fn state(&self, cell: usize, t: SimTime) -> State {
        let s = self.owner(cell);
        match self.slot(s, t) {
            0 => self.trace.initial[cell],
            i => {
                let r = &self.trace.updates[self.index[s][i - 1]];
                r.states[cell - r.cell_lo]
            }
        }
    }

    /// Left neighbor of a cell: wraps on a periodic mesh, the cell itself otherwise.
    pub fn left_of(&self, cell: usize) -> usize {
        match cell {
            0 if self.periodic() => self.n_cells() - 1,
            0 => 0,
            c => c - 1,
        }
    }

    pub fn right_of(&self, cell: usize) -> usize {
        let n = self.n_cells();
        match cell {
            c if c + 1 == n && self.periodic() => 0,
            c if c + 1 == n => c,
            c => c + 1,
        }
    }

    /// Exact integral over `[from, to)` of the flux between `fixed` and the piecewise
    /// constant history of `other`, which sits on the left when `other_left`.
    pub fn face_integral(
        &self,
        flux: &NumericalFlux,
        other: usize,
        fixed: State,
        other_left: bool,
        from: SimTime,
        to: SimTime,
    ) -> crate::Result<State> {
        let s = self.owner(other);
        let dt_min = self.trace.header.dt_min;
        let mut sum = [0.0; 2];
        let mut a = from;
        while a < to {
            let b = self.next_tick(s, a).map_or(to, |x| x.min(to));
            let u = self.state(other, a);
            let f = if other_left { flux.evaluate(&u, &fixed)? } else { flux.evaluate(&fixed, &u)? };
            let dt = (b - a) as f64 * dt_min;
            sum[0] += f[0] * dt;
            sum[1] += f[1] * dt;
            a = b;
        }
        Ok(sum)
    }
}
