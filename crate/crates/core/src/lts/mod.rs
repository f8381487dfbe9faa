//! Adaptive local timestepping: submeshes as actors exchanging push fluxes.
//!
//! Each submesh advances its cells with one forward Euler step per update and
//! integrates the flux across each interface in time, so neighbors with
//! different steps still exchange exactly conservative fluxes. Steps obey a CFL
//! window measured from the last joint update with each neighbor.

mod handlers;
mod submesh;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use submesh::{Boundary, InterfaceState, SubmeshState, UpdateRecord};

use crate::des::{EventKey, Message, Monitor, Sequential, SimTime};
use crate::error::{Error, Result};
use crate::mesh::{Mesh1D, Partition};
use crate::parallel::{run_optimistic, OptimisticConfig, WorkerStats};
use crate::physics::{NumericalFlux, State};
use crate::trace::EventTrace;

/// Default bound on a single step when every Lipschitz bound vanishes.
pub const DEFAULT_CAP_TICKS: SimTime = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordMode {
    /// Cell states with every update.
    Full,
    /// Update times only.
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtsParams {
    pub flux: NumericalFlux,
    /// Seconds per tick.
    pub dt_min: f64,
    pub cap_ticks: SimTime,
    pub t_end: SimTime,
    /// Round step increments down to powers of two.
    pub binning: bool,
    /// Hold further updates after a forced push flux until the neighbor replies.
    pub await_replies: bool,
    /// Force a neighbor whose CFL window halves the step we could take in sync.
    pub force_ratio: bool,
    pub record: RecordMode,
}

impl LtsParams {
    pub fn new(flux: NumericalFlux, dt_min: f64, t_end: SimTime) -> Self {
        Self {
            flux,
            dt_min,
            cap_ticks: DEFAULT_CAP_TICKS,
            t_end,
            binning: true,
            await_replies: true,
            force_ratio: true,
            record: RecordMode::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushFlux {
    /// Receiving side at the destination.
    pub side: Side,
    pub state: State,
    pub floor: SimTime,
    pub forced: bool,
    /// Sender's planned next update, a speculation hint for optimistic executors.
    pub next_hint: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LtsMsg {
    Update { forced: bool },
    PushFlux(PushFlux),
}

pub const RANK_PUSH_FLUX: u8 = 0;
pub const RANK_UPDATE: u8 = 1;

impl Message for LtsMsg {
    fn rank(&self) -> u8 {
        match self {
            LtsMsg::PushFlux(_) => RANK_PUSH_FLUX,
            LtsMsg::Update { .. } => RANK_UPDATE,
        }
    }
}

/// One actor per submesh, wired to its neighbors. A single periodic submesh wraps onto itself.
pub fn build_submeshes(mesh: &Mesh1D, partition: &Partition, init: &[State], params: LtsParams) -> Result<Vec<SubmeshState>> {
    let n = mesh.n_cells();
    if partition.n_cells() != n || init.len() != n {
        return Err(Error::Config(format!(
            "mesh has {n} cells, partition {}, initial data {}",
            partition.n_cells(),
            init.len()
        )));
    }
    let law = params.flux.law;
    if let Some(j) = init.iter().position(|u| !law.admissible(u)) {
        return Err(Error::Inadmissible { cell: j, detail: format!("initial state {:?}", init[j]) });
    }
    if !(params.dt_min > 0.0) || params.cap_ticks == 0 {
        return Err(Error::Config("dt_min and cap_ticks must be positive".into()));
    }
    let params = Arc::new(params);
    let k = partition.n_submeshes();
    let dx = mesh.cell_sizes();
    let iface = |neighbor: usize, cell: usize| Boundary::Interface(InterfaceState::new(neighbor, init[cell], dx[cell]));
    let mut out = Vec::with_capacity(k);
    for s in 0..k {
        let r = partition.range(s);
        let left = if s > 0 {
            iface(s - 1, r.start - 1)
        } else if mesh.is_periodic() && k > 1 {
            iface(k - 1, n - 1)
        } else if mesh.is_periodic() {
            Boundary::Periodic
        } else {
            Boundary::Transmissive
        };
        let right = if s + 1 < k {
            iface(s + 1, r.end)
        } else if mesh.is_periodic() && k > 1 {
            iface(0, 0)
        } else if mesh.is_periodic() {
            Boundary::Periodic
        } else {
            Boundary::Transmissive
        };
        out.push(SubmeshState::new(s, r.start, init[r.clone()].to_vec(), dx[r].to_vec(), left, right, params.clone()));
    }
    // neighbors' first update times seed the speculation hints
    let mut first = Vec::with_capacity(k);
    for s in out.iter_mut() {
        s.init_windows()?;
        first.push(s.compute_t_next()?);
    }
    for s in out.iter_mut() {
        for side in Side::BOTH {
            if let Some(n) = s.interface_mut(side) {
                n.next_hint = first[n.neighbor].max(1);
            }
        }
    }
    Ok(out)
}

/// Per-tick event count above which a run is treated as livelocked. Well above the
/// `3 n_sbmsh` a correct run can reach, so exceeding it signals a bug.
pub fn livelock_bound(n_sbmsh: usize) -> usize {
    8 * n_sbmsh + 16
}

#[derive(Debug, Clone)]
pub struct LtsRun {
    pub trace: EventTrace,
    pub submeshes: Vec<SubmeshState>,
    pub processed: Vec<EventKey>,
    pub max_events_per_tick: usize,
    pub progress_violations: u64,
}

impl LtsRun {
    pub fn final_states(&self) -> Vec<State> {
        self.submeshes.iter().flat_map(|s| s.u.iter().copied()).collect()
    }
}

/// Runs the algorithm to `params.t_end` on the sequential executor.
pub fn run_sequential(
    mesh: &Mesh1D,
    partition: &Partition,
    init: &[State],
    params: LtsParams,
    monitor: &mut impl Monitor<SubmeshState>,
) -> Result<LtsRun> {
    let t_end = params.t_end;
    let actors = build_submeshes(mesh, partition, init, params.clone())?;
    let k = actors.len();
    let out = Sequential::new(actors).with_tick_bound(livelock_bound(k)).run(t_end, monitor)?;
    let initial = if params.record == RecordMode::Full { init.to_vec() } else { Vec::new() };
    Ok(LtsRun {
        trace: EventTrace::new(mesh, partition, &params, initial, out.records),
        progress_violations: out.actors.iter().map(|s| s.progress_violations).sum(),
        submeshes: out.actors,
        processed: out.processed,
        max_events_per_tick: out.max_events_per_tick,
    })
}

/// Runs the algorithm on the optimistic executor, submesh `i` on worker `assignment[i]`.
/// The committed trace matches [`run_sequential`] exactly.
pub fn run_parallel(
    mesh: &Mesh1D,
    partition: &Partition,
    init: &[State],
    params: LtsParams,
    assignment: &[usize],
    cfg: &OptimisticConfig,
) -> Result<(LtsRun, Vec<WorkerStats>)> {
    let actors = build_submeshes(mesh, partition, init, params.clone())?;
    let out = run_optimistic(actors, assignment, cfg, params.t_end)?;
    let initial = if params.record == RecordMode::Full { init.to_vec() } else { Vec::new() };
    let run = LtsRun {
        trace: EventTrace::new(mesh, partition, &params, initial, out.records),
        progress_violations: out.actors.iter().map(|s| s.progress_violations).sum(),
        submeshes: out.actors,
        processed: out.processed,
        max_events_per_tick: out.max_events_per_tick,
    };
    Ok((run, out.stats))
}
