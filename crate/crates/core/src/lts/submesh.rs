use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{LtsParams, RecordMode, Side};
use crate::des::SimTime;
use crate::error::{Error, Result};
use crate::physics::{cell_bounds, State};

/// What a submesh knows about one neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceState {
    pub neighbor: usize,
    /// Neighbor's last update as known here.
    pub floor: SimTime,
    /// Last joint update.
    pub t_sync: SimTime,
    /// Neighbor's boundary cell at `floor`.
    pub u: State,
    /// Time integral of the interface flux from the owner's last update to `integrated_to`.
    pub flux_sum: State,
    /// Always the later of the two sides' last updates.
    pub integrated_to: SimTime,
    pub dx: f64,
    /// Bound on the owner's boundary-cell rate since the owner's last update.
    pub k_int: f64,
    /// Bound on the rate coupling to the neighbor since `t_sync`.
    pub k_ext: f64,
    pub k_int_since: SimTime,
    pub k_ext_since: SimTime,
    pub awaiting: bool,
    pub next_hint: SimTime,
}

impl InterfaceState {
    pub fn new(neighbor: usize, u: State, dx: f64) -> Self {
        Self {
            neighbor,
            floor: 0,
            t_sync: 0,
            u,
            flux_sum: [0.0; 2],
            integrated_to: 0,
            dx,
            k_int: 0.0,
            k_ext: 0.0,
            k_int_since: 0,
            k_ext_since: 0,
            awaiting: false,
            next_hint: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Interface(InterfaceState),
    /// Ghost cell copies the boundary cell.
    Transmissive,
    /// Single submesh on a periodic mesh: the ghost is the opposite end.
    Periodic,
}

/// One update as written to the event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub tick: SimTime,
    pub submesh: usize,
    pub cell_lo: usize,
    pub cell_hi: usize,
    pub forced: bool,
    /// Cell states after the update; empty in compact mode.
    pub states: Vec<State>,
    /// Time-integrated fluxes through the left and right faces over the step.
    pub face_integrals: Option<[State; 2]>,
}

#[derive(Debug, Clone)]
pub struct SubmeshState {
    pub id: usize,
    pub params: Arc<LtsParams>,
    pub floor: SimTime,
    pub ceil: SimTime,
    pub first_cell: usize,
    pub u: Vec<State>,
    pub dx: Vec<f64>,
    pub left: Boundary,
    pub right: Boundary,
    /// Ticks with an unforced update of this submesh in the queue.
    pub pending: BTreeSet<SimTime>,
    pub updates: u64,
    pub progress_violations: u64,
}

fn max_steps(k: f64, dt_min: f64, cap: SimTime) -> SimTime {
    if !(k > 0.0) {
        return cap;
    }
    let raw = 0.5 / (k * dt_min);
    if !(raw < cap as f64) {
        return cap;
    }
    // same rounding allowance as the verifiers, so a step of exactly dt_min_bound fits
    let fits = |n: SimTime| n as f64 * dt_min * k <= 0.5 + 1e-12;
    let mut n = raw.floor() as SimTime;
    if fits(n + 1) {
        n += 1;
    }
    while n > 0 && !fits(n) {
        n -= 1;
    }
    n
}

fn pow2_floor(n: SimTime) -> SimTime {
    1 << (63 - n.leading_zeros())
}

impl SubmeshState {
    pub fn new(
        id: usize,
        first_cell: usize,
        u: Vec<State>,
        dx: Vec<f64>,
        left: Boundary,
        right: Boundary,
        params: Arc<LtsParams>,
    ) -> Self {
        debug_assert!(u.len() >= 2 && u.len() == dx.len());
        Self {
            id,
            params,
            floor: 0,
            ceil: 0,
            first_cell,
            u,
            dx,
            left,
            right,
            pending: BTreeSet::new(),
            updates: 0,
            progress_violations: 0,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn cell_range(&self) -> std::ops::Range<usize> {
        self.first_cell..self.first_cell + self.u.len()
    }

    pub fn boundary(&self, side: Side) -> &Boundary {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn interface(&self, side: Side) -> Option<&InterfaceState> {
        match self.boundary(side) {
            Boundary::Interface(n) => Some(n),
            _ => None,
        }
    }

    pub fn interface_mut(&mut self, side: Side) -> Option<&mut InterfaceState> {
        match side {
            Side::Left => match &mut self.left {
                Boundary::Interface(n) => Some(n),
                _ => None,
            },
            Side::Right => match &mut self.right {
                Boundary::Interface(n) => Some(n),
                _ => None,
            },
        }
    }

    fn iface(&mut self, side: Side) -> Result<&mut InterfaceState> {
        let id = self.id;
        self.interface_mut(side)
            .ok_or_else(|| Error::Logic { submesh: id, detail: format!("no interface on the {side:?} side") })
    }

    pub fn boundary_cell(&self, side: Side) -> State {
        match side {
            Side::Left => self.u[0],
            Side::Right => self.u[self.u.len() - 1],
        }
    }

    /// State just outside the given end.
    pub fn ghost(&self, side: Side) -> State {
        match self.boundary(side) {
            Boundary::Interface(n) => n.u,
            Boundary::Transmissive => self.boundary_cell(side),
            Boundary::Periodic => self.boundary_cell(side.opposite()),
        }
    }

    pub fn awaiting_any(&self) -> bool {
        Side::BOTH.iter().any(|&s| self.interface(s).is_some_and(|n| n.awaiting))
    }

    fn face_pair(&self, side: Side) -> (State, State) {
        match side {
            Side::Left => (self.ghost(Side::Left), self.u[0]),
            Side::Right => (self.u[self.u.len() - 1], self.ghost(Side::Right)),
        }
    }

    /// Integrate the interface flux with the stored neighbor value up to `t`.
    pub fn accumulate(&mut self, side: Side, t: SimTime) -> Result<()> {
        let (a, b) = self.face_pair(side);
        let flux = self.params.flux;
        let dt_min = self.params.dt_min;
        let id = self.id;
        let n = self.iface(side)?;
        let from = n.integrated_to;
        if t < from {
            return Err(Error::Logic { submesh: id, detail: format!("accumulate to {t} behind integration point {from}") });
        }
        if t > from {
            let f = flux.evaluate(&a, &b)?;
            let dt = (t - from) as f64 * dt_min;
            n.flux_sum[0] += f[0] * dt;
            n.flux_sum[1] += f[1] * dt;
        }
        n.integrated_to = t;
        Ok(())
    }

    fn boundary_triple(&self, side: Side) -> (State, State, State, f64) {
        let m = self.u.len();
        match side {
            Side::Left => (self.ghost(Side::Left), self.u[0], self.u[1], self.dx[0]),
            Side::Right => (self.u[m - 2], self.u[m - 1], self.ghost(Side::Right), self.dx[m - 1]),
        }
    }

    /// Raise the interface's rate bounds with the current boundary triple, restarting
    /// a window whose reference time moved.
    pub fn update_k_bdry(&mut self, side: Side) -> Result<()> {
        let (a, b, c, dx) = self.boundary_triple(side);
        let (kc, kd) = cell_bounds(&a, &b, &c, dx, &self.params.flux)?;
        // the left cell couples to its left neighbor through C, the right cell through D
        let (k_int, k_ext) = match side {
            Side::Left => (kd, kc),
            Side::Right => (kc, kd),
        };
        let floor = self.floor;
        let n = self.iface(side)?;
        if n.k_int_since != floor {
            n.k_int = k_int;
            n.k_int_since = floor;
        } else {
            n.k_int = n.k_int.max(k_int);
        }
        if n.k_ext_since != n.t_sync {
            n.k_ext = k_ext;
            n.k_ext_since = n.t_sync;
        } else {
            n.k_ext = n.k_ext.max(k_ext);
        }
        Ok(())
    }

    /// Restart both windows of every interface from the current state.
    pub fn init_windows(&mut self) -> Result<()> {
        for side in Side::BOTH {
            if let Some(n) = self.interface_mut(side) {
                n.k_int = 0.0;
                n.k_ext = 0.0;
            }
            if self.interface(side).is_some() {
                self.update_k_bdry(side)?;
            }
        }
        Ok(())
    }

    fn steps(&self, k: f64) -> SimTime {
        max_steps(k, self.params.dt_min, self.params.cap_ticks)
    }

    /// A window measured from our own last update always grants one tick.
    fn steps_after_floor(&mut self, k: f64) -> SimTime {
        let s = self.steps(k);
        if s == 0 {
            self.progress_violations += 1;
            1
        } else {
            s
        }
    }

    /// Latest tick allowed by one interface's CFL windows; at or below `floor`
    /// when the window opened at an older joint update is exhausted.
    pub fn compute_t_next_bdry(&mut self, side: Side) -> Result<SimTime> {
        let floor = self.floor;
        let cap = self.params.cap_ticks;
        let (k_int, k_ext, t_sync) = {
            let n = self.iface(side)?;
            (n.k_int, n.k_ext, n.t_sync)
        };
        let ext = if t_sync == floor { floor + self.steps_after_floor(k_ext) } else { t_sync + self.steps(k_ext) };
        let int = floor + self.steps_after_floor(k_int);
        Ok(ext.min(int).min(floor + cap))
    }

    /// Largest rate bound over cells whose stencil lies inside the submesh.
    fn internal_k(&self) -> Result<f64> {
        let m = self.u.len();
        let lo = usize::from(self.interface(Side::Left).is_some());
        let hi = m - usize::from(self.interface(Side::Right).is_some());
        let mut k = 0.0f64;
        for j in lo..hi {
            let a = if j == 0 { self.ghost(Side::Left) } else { self.u[j - 1] };
            let c = if j + 1 == m { self.ghost(Side::Right) } else { self.u[j + 1] };
            let (kc, kd) = cell_bounds(&a, &self.u[j], &c, self.dx[j], &self.params.flux)?;
            k = k.max(kc).max(kd);
        }
        Ok(k)
    }

    fn bin(&self, raw: SimTime) -> SimTime {
        let floor = self.floor;
        if raw <= floor {
            return floor;
        }
        let step = raw - floor;
        let step = if self.params.binning { pow2_floor(step) } else { step };
        (floor + step).min(self.params.t_end.max(floor))
    }

    /// Next update time from all CFL constraints, binned; `floor` means blocked.
    pub fn compute_t_next(&mut self) -> Result<SimTime> {
        let k = self.internal_k()?;
        let mut raw = self.floor + self.steps_after_floor(k);
        for side in Side::BOTH {
            if self.interface(side).is_some() {
                raw = raw.min(self.compute_t_next_bdry(side)?);
            }
        }
        Ok(self.bin(raw))
    }

    /// Step we could take if every neighbor were synchronized with us now.
    pub(crate) fn synced_raw_step(&mut self) -> Result<SimTime> {
        let mut k = self.internal_k()?;
        for side in Side::BOTH {
            if self.interface(side).is_some() {
                let (a, b, c, dx) = self.boundary_triple(side);
                let (kc, kd) = cell_bounds(&a, &b, &c, dx, &self.params.flux)?;
                k = k.max(kc).max(kd);
            }
        }
        let floor = self.floor;
        Ok(floor + self.steps_after_floor(k).min(self.params.cap_ticks))
    }

    /// One forward Euler step of every cell to `t`, boundary fluxes taken from the
    /// interface integrals.
    pub fn advance(&mut self, t: SimTime, forced: bool) -> Result<UpdateRecord> {
        if t <= self.floor {
            return Err(Error::Logic { submesh: self.id, detail: format!("advance to {t} from {}", self.floor) });
        }
        for side in Side::BOTH {
            if self.interface(side).is_some() {
                self.accumulate(side, t)?;
            }
        }
        let m = self.u.len();
        let dt = (t - self.floor) as f64 * self.params.dt_min;
        let flux = self.params.flux;
        let mut faces = Vec::with_capacity(m + 1);
        faces.push(match &self.left {
            Boundary::Interface(n) => n.flux_sum,
            _ => scale(flux.evaluate(&self.ghost(Side::Left), &self.u[0])?, dt),
        });
        for j in 1..m {
            faces.push(scale(flux.evaluate(&self.u[j - 1], &self.u[j])?, dt));
        }
        faces.push(match &self.right {
            Boundary::Interface(n) => n.flux_sum,
            _ => scale(flux.evaluate(&self.u[m - 1], &self.ghost(Side::Right))?, dt),
        });
        let law = flux.law;
        for j in 0..m {
            let inv = 1.0 / self.dx[j];
            let u = &mut self.u[j];
            u[0] += (faces[j][0] - faces[j + 1][0]) * inv;
            u[1] += (faces[j][1] - faces[j + 1][1]) * inv;
            if !law.admissible(u) {
                return Err(Error::Inadmissible { cell: self.first_cell + j, detail: format!("{u:?} at tick {t}") });
            }
        }
        self.floor = t;
        self.updates += 1;
        for side in Side::BOTH {
            if let Some(n) = self.interface_mut(side) {
                n.flux_sum = [0.0; 2];
            }
            if self.interface(side).is_some() {
                self.update_k_bdry(side)?;
            }
        }
        let states = match self.params.record {
            RecordMode::Full => self.u.clone(),
            RecordMode::Compact => Vec::new(),
        };
        Ok(UpdateRecord {
            tick: t,
            submesh: self.id,
            cell_lo: self.first_cell,
            cell_hi: self.first_cell + m,
            forced,
            states,
            face_integrals: Some([faces[0], faces[m]]),
        })
    }
}

fn scale(f: State, dt: f64) -> State {
    [f[0] * dt, f[1] * dt]
}
