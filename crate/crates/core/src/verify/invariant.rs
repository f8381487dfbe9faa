//! Live check of the loop invariant: local ordering, CFL, correctness, consistency
//! and progress, evaluated for the submeshes an event touched.

use crate::des::{EventKey, EventQueue, Monitor, SimTime};
use crate::lts::{Boundary, InterfaceState, LtsMsg, Side, SubmeshState};
use crate::physics::{harten_coefficients, NumericalFlux, State};

use super::Report;

const TOL: f64 = 1e-12;

fn close(a: &State, b: &State) -> bool {
    (0..2).all(|i| (a[i] - b[i]).abs() <= TOL * a[i].abs().max(b[i].abs()).max(1.0))
}

#[derive(Debug, Clone, Copy, Default)]
struct Window {
    since: SimTime,
    max: f64,
}

impl Window {
    fn observe(&mut self, since: SimTime, value: f64) {
        if since != self.since {
            *self = Window { since, max: value };
        } else {
            self.max = self.max.max(value);
        }
    }
}

/// Boundary-cell history of one submesh: `(tick, [first cell, last cell])`.
type Trail = Vec<(SimTime, [State; 2])>;

#[derive(Debug)]
pub struct InvariantMonitor {
    trails: Vec<Trail>,
    /// Shadow maxima of the K windows, `[side][int, ext]`.
    windows: Vec<[[Window; 2]; 2]>,
    before: Option<(SimTime, Vec<State>)>,
    pub report: Report,
    pub checks: u64,
}

impl Default for InvariantMonitor {
    fn default() -> Self {
        Self { trails: Vec::new(), windows: Vec::new(), before: None, report: Report::new("invariant", true), checks: 0 }
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

/// Value of a neighbor's boundary cell at `t` from its trail.
fn trail_at(trail: &Trail, t: SimTime, cell: usize) -> State {
    let i = trail.partition_point(|e| e.0 <= t) - 1;
    trail[i].1[cell]
}

/// Integral over `[from, to)` of the flux between a fixed own value and a neighbor's
/// piecewise constant boundary value.
#[allow(clippy::too_many_arguments)]
fn integrate(flux: &NumericalFlux, trail: &Trail, cell: usize, own: State, neighbor_left: bool, from: SimTime, to: SimTime, dt_min: f64) -> crate::Result<State> {
    let mut sum = [0.0; 2];
    let mut a = from;
    while a < to {
        let next = trail.get(trail.partition_point(|e| e.0 <= a)).map_or(to, |e| e.0.min(to));
        let u = trail_at(trail, a, cell);
        let f = if neighbor_left { flux.evaluate(&u, &own)? } else { flux.evaluate(&own, &u)? };
        let dt = (next - a) as f64 * dt_min;
        sum[0] += f[0] * dt;
        sum[1] += f[1] * dt;
        a = next;
    }
    Ok(sum)
}

fn pf_queued(queue: &EventQueue<LtsMsg>, tau: SimTime, pred: impl Fn(&EventKey, &crate::lts::PushFlux) -> bool) -> bool {
    queue.at_tick(tau).any(|(k, m)| matches!(m, LtsMsg::PushFlux(pf) if pred(k, pf)))
}

impl InvariantMonitor {
    /// Evaluates the invariant for every submesh at `tau`.
    pub fn check_all(&mut self, tau: SimTime, actors: &[SubmeshState], queue: &EventQueue<LtsMsg>) {
        if self.trails.len() != actors.len() {
            self.reset(actors);
        }
        for s in actors {
            self.check_one(s, tau, actors, queue);
        }
    }

    fn reset(&mut self, actors: &[SubmeshState]) {
        self.trails = actors.iter().map(|s| vec![(s.floor, [s.u[0], s.u[s.u.len() - 1]])]).collect();
        self.windows = vec![[[Window::default(); 2]; 2]; actors.len()];
    }

    fn fail(&mut self, tau: SimTime, s: usize, what: &str, detail: String) {
        self.report.fail(tau, s, format!("{what}: {detail}"));
    }

    fn check_one(&mut self, s: &SubmeshState, tau: SimTime, actors: &[SubmeshState], queue: &EventQueue<LtsMsg>) {
        self.checks += 1;
        let id = s.id;
        let p = &s.params;
        let dt = p.dt_min;
        let scalar = p.flux.law.is_scalar();
        let m = s.u.len();
        for side in Side::BOTH {
            let Some(n) = s.interface(side) else { continue };
            // local ordering
            if !(s.floor == n.t_sync || n.floor == n.t_sync) {
                self.fail(tau, id, "LO", format!("{side:?}: floor {} neighbor floor {} t_sync {}", s.floor, n.floor, n.t_sync));
            }
            // CFL at the interface
            let ext = (s.ceil as f64 - n.t_sync as f64) * dt * n.k_ext;
            let int = (s.ceil as f64 - s.floor as f64) * dt * n.k_int;
            if ext > 0.5 + TOL || int > 0.5 + TOL {
                self.fail(tau, id, "CFL", format!("{side:?}: ext {ext:.6e} int {int:.6e} for ceil {}", s.ceil));
            }
            // flux integral
            let to = n.floor.max(s.floor);
            let trail = &self.trails[n.neighbor];
            let (cell, own, left) = match side {
                Side::Left => (1, s.u[0], true),
                Side::Right => (0, s.u[m - 1], false),
            };
            match integrate(&p.flux, trail, cell, own, left, s.floor, to, dt) {
                Ok(want) if close(&want, &n.flux_sum) && n.integrated_to == to => {}
                Ok(want) => self.fail(tau, id, "CR", format!("{side:?} flux integral {:?} to {}, expected {want:?} to {to}", n.flux_sum, n.integrated_to)),
                Err(e) => self.fail(tau, id, "CR", e.to_string()),
            }
            // rate bounds
            if scalar {
                let (a, b, c, dx) = match side {
                    Side::Left => (n.u, s.u[0], s.u[1], s.dx[0]),
                    Side::Right => (s.u[m - 2], s.u[m - 1], n.u, s.dx[m - 1]),
                };
                if let Ok((cc, dd)) = harten_coefficients(&a, &b, &c, dx, &p.flux) {
                    let (int_v, ext_v) = match side {
                        Side::Left => (dd, -cc),
                        Side::Right => (-cc, dd),
                    };
                    let w = &mut self.windows[id][side_index(side)];
                    w[0].observe(s.floor, int_v);
                    w[1].observe(n.t_sync, ext_v);
                    let (wi, we) = (w[0].max, w[1].max);
                    if n.k_int < wi * (1.0 - TOL) - TOL || n.k_ext < we * (1.0 - TOL) - TOL {
                        self.fail(tau, id, "CR", format!("{side:?} K int {} ext {} below observed {wi} {we}", n.k_int, n.k_ext));
                    }
                }
            }
            // consistency with the neighbor's copy of us
            let other = &actors[n.neighbor];
            let Some(mine) = other.interface(side.opposite()) else {
                self.fail(tau, id, "CI", format!("neighbor {} has no {:?} interface", n.neighbor, side.opposite()));
                continue;
            };
            let boundary = s.boundary_cell(side);
            let to_neighbor = |k: &EventKey, pf: &crate::lts::PushFlux| k.source == id && k.dest == other.id && pf.side == side.opposite();
            let from_neighbor = |k: &EventKey, pf: &crate::lts::PushFlux| k.source == other.id && k.dest == id && pf.side == side;
            let ci1 = mine.u == boundary && mine.floor == s.floor;
            let ci2 = pf_queued(queue, tau, |k, pf| to_neighbor(k, pf) && pf.state == boundary);
            let ci3 = n.t_sync == mine.t_sync;
            let ci4 = n.t_sync == tau && pf_queued(queue, tau, to_neighbor);
            let ci5 = mine.t_sync == tau && pf_queued(queue, tau, from_neighbor);
            if !(ci1 || ci2) || !(ci3 || ci4 || ci5) {
                self.fail(
                    tau,
                    id,
                    "CI",
                    format!("{side:?} with {}: copy {:?}@{} vs {boundary:?}@{}, t_sync {} vs {}", other.id, mine.u, mine.floor, s.floor, n.t_sync, mine.t_sync),
                );
            }
        }
        // internal CFL
        if scalar {
            let lo = usize::from(matches!(s.left, Boundary::Interface(_)));
            let hi = m - usize::from(matches!(s.right, Boundary::Interface(_)));
            let steps = s.ceil as f64 - s.floor as f64;
            for j in lo..hi {
                let a = if j == 0 { s.ghost(Side::Left) } else { s.u[j - 1] };
                let c = if j + 1 == m { s.ghost(Side::Right) } else { s.u[j + 1] };
                if let Ok((cc, dd)) = harten_coefficients(&a, &s.u[j], &c, s.dx[j], &p.flux) {
                    let v = steps * dt * (-cc).max(dd);
                    if v > 0.5 + TOL {
                        self.fail(tau, id, "CFL", format!("cell {}: step {steps} ticks gives {v:.6e}", s.first_cell + j));
                        break;
                    }
                }
            }
        }
        // progress
        let done = s.floor >= p.t_end;
        let p2 = s.ceil >= tau
            && s.ceil > s.floor
            && queue.at_tick(s.ceil).any(|(k, m)| k.dest == id && matches!(m, LtsMsg::Update { forced: false }));
        let p3 = pf_queued(queue, tau, |k, _| k.dest == id);
        let p4 = pf_queued(queue, tau, |k, pf| k.source == id && pf.forced);
        if !(done || p2 || p3 || p4) {
            self.fail(tau, id, "P", format!("no update queued at ceil {} (floor {}) and no push flux at {tau}", s.ceil, s.floor));
        }
    }

    fn check_update(&mut self, s: &SubmeshState, t0: SimTime, prev: &[State]) {
        let p = &s.params;
        let dt_min = p.dt_min;
        let t = s.floor;
        let m = prev.len();
        let dt = (t - t0) as f64 * dt_min;
        let scaled = |f: State| [f[0] * dt, f[1] * dt];
        let face = |side: Side| -> crate::Result<State> {
            let b = s.boundary(side);
            match (side, b) {
                (Side::Left, Boundary::Interface(n)) => integrate(&p.flux, &self.trails[n.neighbor], 1, prev[0], true, t0, t, dt_min),
                (Side::Right, Boundary::Interface(n)) => integrate(&p.flux, &self.trails[n.neighbor], 0, prev[m - 1], false, t0, t, dt_min),
                (Side::Left, Boundary::Transmissive) => Ok(scaled(p.flux.evaluate(&prev[0], &prev[0])?)),
                (Side::Right, Boundary::Transmissive) => Ok(scaled(p.flux.evaluate(&prev[m - 1], &prev[m - 1])?)),
                (_, Boundary::Periodic) => Ok(scaled(p.flux.evaluate(&prev[m - 1], &prev[0])?)),
            }
        };
        let result = (|| -> crate::Result<Option<usize>> {
            let mut faces = vec![face(Side::Left)?];
            for j in 1..m {
                faces.push(scaled(p.flux.evaluate(&prev[j - 1], &prev[j])?));
            }
            faces.push(face(Side::Right)?);
            Ok((0..m).find(|&j| {
                let inv = 1.0 / s.dx[j];
                let want = [prev[j][0] + (faces[j][0] - faces[j + 1][0]) * inv, prev[j][1] + (faces[j][1] - faces[j + 1][1]) * inv];
                !close(&want, &s.u[j])
            }))
        })();
        match result {
            Ok(None) => {}
            Ok(Some(j)) => self.fail(t, s.id, "CR", format!("cell {} does not follow the update rule", s.first_cell + j)),
            Err(e) => self.fail(t, s.id, "CR", e.to_string()),
        }
    }
}

fn neighbors(s: &SubmeshState) -> impl Iterator<Item = usize> + '_ {
    Side::BOTH.into_iter().filter_map(|side| s.interface(side).map(|n: &InterfaceState| n.neighbor))
}

impl Monitor<SubmeshState> for InvariantMonitor {
    fn started(&mut self, actors: &[SubmeshState], queue: &EventQueue<LtsMsg>) {
        self.reset(actors);
        self.check_all(0, actors, queue);
    }

    fn before(&mut self, key: &EventKey, _msg: &LtsMsg, actors: &[SubmeshState], _queue: &EventQueue<LtsMsg>) {
        let s = &actors[key.dest];
        self.before = Some((s.floor, s.u.clone()));
    }

    fn after(&mut self, key: &EventKey, _msg: &LtsMsg, actors: &[SubmeshState], queue: &EventQueue<LtsMsg>) {
        let tau = key.tick;
        let s = &actors[key.dest];
        if let Some((floor, u)) = self.before.take() {
            if s.floor != floor {
                self.check_update(s, floor, &u);
                self.trails[s.id].push((s.floor, [s.u[0], s.u[s.u.len() - 1]]));
            } else if s.u != u {
                self.fail(tau, s.id, "CR", "cells changed without an update".into());
            }
        }
        self.check_one(s, tau, actors, queue);
        let ids: Vec<usize> = neighbors(s).filter(|&n| n != s.id).collect();
        for n in ids {
            self.check_one(&actors[n], tau, actors, queue);
        }
    }
}
