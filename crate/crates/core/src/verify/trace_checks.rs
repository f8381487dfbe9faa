use std::collections::BTreeSet;

use crate::des::SimTime;
use crate::physics::{harten_coefficients, State};
use crate::trace::EventTrace;

use super::history::History;
use super::Report;

fn history<'a>(trace: &'a EventTrace, report: &mut Report) -> Option<History<'a>> {
    match History::new(trace) {
        Ok(h) => Some(h),
        Err(v) => {
            report.fail(v.tick, v.submesh, v.detail);
            None
        }
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Whether two sorted tick sets both step strictly inside some interval between
/// consecutive common ticks. Returns the offending interval.
pub fn straddles(a: &[SimTime], b: &[SimTime]) -> Option<(SimTime, Option<SimTime>)> {
    let sa: BTreeSet<_> = a.iter().copied().collect();
    let sb: BTreeSet<_> = b.iter().copied().collect();
    let common: Vec<SimTime> = sa.intersection(&sb).copied().collect();
    let inside = |set: &BTreeSet<SimTime>, lo: SimTime, hi: Option<SimTime>| match hi {
        Some(hi) => set.range(lo + 1..hi).next().is_some(),
        None => set.range(lo + 1..).next().is_some(),
    };
    let first = *common.first()?;
    if sa.range(..first).next().is_some() && sb.range(..first).next().is_some() {
        return Some((0, Some(first)));
    }
    (0..common.len()).map(|i| (common[i], common.get(i + 1).copied())).find(|&(lo, hi)| inside(&sa, lo, hi) && inside(&sb, lo, hi))
}

/// Between consecutive joint updates of two neighboring cells at most one of them steps.
pub fn check_locally_ordered(trace: &EventTrace) -> Report {
    let mut report = Report::new("locally_ordered", true);
    let Some(h) = history(trace, &mut report) else { return report };
    let k = h.partition.n_submeshes();
    // cells of one submesh share their timestamps, so only interfaces matter
    let pairs: Vec<(usize, usize)> = (0..k.saturating_sub(1)).map(|s| (s, s + 1)).chain((h.periodic() && k > 2).then_some((k - 1, 0))).collect();
    for (a, b) in pairs {
        if let Some((lo, hi)) = straddles(&h.ticks[a], &h.ticks[b]) {
            let hi = hi.map_or("end".to_string(), |t| t.to_string());
            report.fail(lo, b, format!("submeshes {a} and {b} both step inside ({lo}, {hi})"));
        }
    }
    report
}

/// Calls `visit(tick, states)` with the states after all updates of each tick.
fn tick_states(trace: &EventTrace, mut visit: impl FnMut(SimTime, &[State])) {
    let mut snaps = trace.snapshots();
    let mut pending: Option<SimTime> = None;
    let mut last: Vec<State> = Vec::new();
    while let Some((t, u)) = snaps.next_snapshot() {
        if let Some(p) = pending.filter(|&p| p != t) {
            visit(p, &last);
        }
        pending = Some(t);
        last.clear();
        last.extend_from_slice(u);
    }
    if let Some(p) = pending {
        visit(p, &last);
    }
}

fn tv(u: &[State], periodic: bool) -> f64 {
    let inner: f64 = u.windows(2).map(|w| (w[1][0] - w[0][0]).abs()).sum();
    match (periodic, u.first(), u.last()) {
        (true, Some(a), Some(b)) => inner + (a[0] - b[0]).abs(),
        _ => inner,
    }
}

/// Total variation of the (first) component never exceeds its initial value.
pub fn check_tvd(trace: &EventTrace) -> Report {
    if !trace.has_states() {
        return Report::skip("tvd", "compact trace has no states");
    }
    let mut report = Report::new("tvd", trace.header.law.is_scalar());
    let periodic = trace.header.periodic;
    let tv0 = tv(&trace.initial, periodic);
    let tol = 1e-11 * tv0 + 1e-14;
    tick_states(trace, |t, u| {
        let now = tv(u, periodic);
        if now > tv0 + tol {
            report.fail(t, usize::MAX, format!("TV {now:.17e} exceeds initial {tv0:.17e}"));
        }
    });
    report
}

/// Every cell stays within the largest initial magnitude.
pub fn check_max_principle(trace: &EventTrace) -> Report {
    if !trace.has_states() {
        return Report::skip("max_principle", "compact trace has no states");
    }
    let mut report = Report::new("max_principle", trace.header.law.is_scalar());
    let bound = trace.initial.iter().map(|u| u[0].abs()).fold(0.0, f64::max);
    let limit = bound * (1.0 + 1e-12);
    let partition = trace.partition().ok();
    tick_states(trace, |t, u| {
        if let Some((j, x)) = u.iter().enumerate().find(|(_, x)| x[0].abs() > limit) {
            let s = partition.as_ref().map_or(usize::MAX, |p| p.submesh_of(j));
            report.fail(t, s, format!("|U_{j}| = {:.17e} above {bound:.17e}", x[0].abs()));
        }
    });
    report
}

/// The timestep restriction behind the TVD theorem, evaluated with the realized next
/// update times for every pair of neighboring cells between their joint updates.
pub fn check_cfl(trace: &EventTrace) -> Report {
    if !trace.header.law.is_scalar() {
        return Report::skip("cfl", "Harten coefficients need a scalar law");
    }
    if !trace.has_states() {
        return Report::skip("cfl", "compact trace has no states");
    }
    let mut report = Report::new("cfl", true);
    let Some(h) = history(trace, &mut report) else { return report };
    let flux = match trace.flux() {
        Ok(f) => f,
        Err(e) => {
            report.fail(0, 0, e.to_string());
            return report;
        }
    };
    let dx: Vec<f64> = trace.header.nodes.windows(2).map(|w| w[1] - w[0]).collect();
    let dt_min = trace.header.dt_min;
    let n = h.n_cells();
    let last_pair = if h.periodic() { n } else { n - 1 };
    for j in 0..last_pair {
        let j1 = (j + 1) % n;
        let (jm, j2) = (h.left_of(j), h.right_of(j1));
        let (a, b) = (h.owner(j), h.owner(j1));
        let mut owners = vec![h.owner(jm), a, b, h.owner(j2)];
        owners.sort_unstable();
        owners.dedup();
        let mut timeline: Vec<SimTime> = owners.iter().flat_map(|&s| h.ticks[s].iter().copied()).collect();
        timeline.sort_unstable();
        timeline.dedup();
        let common: Vec<SimTime> = if a == b {
            h.ticks[a].clone()
        } else {
            let sb: BTreeSet<_> = h.ticks[b].iter().copied().collect();
            h.ticks[a].iter().copied().filter(|t| sb.contains(t)).collect()
        };
        for &t in &timeline {
            let (Some(ca), Some(cb)) = (h.next_tick(a, t), h.next_tick(b, t)) else { break };
            let s = common[common.partition_point(|&x| x <= t) - 1];
            let coeffs = harten_coefficients(&h.state(jm, t), &h.state(j, t), &h.state(j1, t), dx[j], &flux)
                .and_then(|(_, d)| harten_coefficients(&h.state(j, t), &h.state(j1, t), &h.state(j2, t), dx[j1], &flux).map(|(c, _)| (c, d)));
            let (c1, d0) = match coeffs {
                Ok(x) => x,
                Err(e) => {
                    report.fail(t, a, e.to_string());
                    return report;
                }
            };
            let value = 1.0 + (cb - s) as f64 * dt_min * c1 - (ca - s) as f64 * dt_min * d0;
            if value < -1e-12 {
                report.fail(
                    t,
                    a,
                    format!("cells {j},{j1}: 1 + ({cb}-{s})dt C - ({ca}-{s})dt D = {value:.6e} with C = {c1:.6e}, D = {d0:.6e}"),
                );
                break;
            }
        }
    }
    report
}

/// Re-integrates every update from the recorded neighbor histories and compares the
/// post-states and face integrals with the trace.
pub fn replay_oracle(trace: &EventTrace) -> Report {
    if !trace.has_states() {
        return Report::skip("replay", "compact trace has no states");
    }
    let mut report = Report::new("replay", true);
    let Some(h) = history(trace, &mut report) else { return report };
    let flux = match trace.flux() {
        Ok(f) => f,
        Err(e) => {
            report.fail(0, 0, e.to_string());
            return report;
        }
    };
    let dx: Vec<f64> = trace.header.nodes.windows(2).map(|w| w[1] - w[0]).collect();
    let dt_min = trace.header.dt_min;
    let k = h.partition.n_submeshes();
    for s in 0..k {
        let range = h.partition.range(s);
        let (lo, hi) = (range.start, range.end);
        for (i, &idx) in h.index[s].iter().enumerate() {
            let r = &trace.updates[idx];
            let (t0, t) = (h.ticks[s][i], r.tick);
            let prev: Vec<State> = (lo..hi).map(|c| h.state(c, t0)).collect();
            let dt = (t - t0) as f64 * dt_min;
            let scaled = |f: State| [f[0] * dt, f[1] * dt];
            let step = || -> crate::Result<Vec<State>> {
                let m = hi - lo;
                let mut faces = Vec::with_capacity(m + 1);
                let left = h.left_of(lo);
                faces.push(if h.owner(left) != s {
                    h.face_integral(&flux, left, prev[0], true, t0, t)?
                } else if left == lo {
                    scaled(flux.evaluate(&prev[0], &prev[0])?)
                } else {
                    scaled(flux.evaluate(&prev[left - lo], &prev[0])?)
                });
                for j in 1..m {
                    faces.push(scaled(flux.evaluate(&prev[j - 1], &prev[j])?));
                }
                let right = h.right_of(hi - 1);
                faces.push(if h.owner(right) != s {
                    h.face_integral(&flux, right, prev[m - 1], false, t0, t)?
                } else if right == hi - 1 {
                    scaled(flux.evaluate(&prev[m - 1], &prev[m - 1])?)
                } else {
                    scaled(flux.evaluate(&prev[m - 1], &prev[right - lo])?)
                });
                if let Some([fl, fr]) = r.face_integrals {
                    for (name, got, want) in [("left", fl, faces[0]), ("right", fr, faces[m])] {
                        if !(close(got[0], want[0], 1e-12) && close(got[1], want[1], 1e-12)) {
                            return Err(crate::Error::Logic { submesh: s, detail: format!("{name} face integral {got:?}, replay gives {want:?}") });
                        }
                    }
                }
                Ok((0..m)
                    .map(|j| {
                        let inv = 1.0 / dx[lo + j];
                        [prev[j][0] + (faces[j][0] - faces[j + 1][0]) * inv, prev[j][1] + (faces[j][1] - faces[j + 1][1]) * inv]
                    })
                    .collect())
            };
            match step() {
                Ok(want) => {
                    if let Some(j) = (0..want.len()).find(|&j| !(close(r.states[j][0], want[j][0], 1e-12) && close(r.states[j][1], want[j][1], 1e-12))) {
                        report.fail(t, s, format!("cell {}: recorded {:?}, replay gives {:?}", lo + j, r.states[j], want[j]));
                    }
                }
                Err(e) => report.fail(t, s, e.to_string()),
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straddling_examples() {
        // fully synchronous
        assert_eq!(straddles(&[0, 2, 4, 6], &[0, 2, 4, 6]), None);
        // one side refines between joint updates
        assert_eq!(straddles(&[0, 1, 2, 8, 9, 10], &[0, 2, 10]), None);
        // both step inside (2, 10)
        assert_eq!(straddles(&[0, 2, 5, 10], &[0, 2, 7, 10]), Some((2, Some(10))));
        // no final joint update
        assert_eq!(straddles(&[0, 3], &[0, 4]), Some((0, None)));
    }
}
