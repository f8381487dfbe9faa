//! Work model for local timestepping: binned per-cell steps, iterative submesh
//! partitioning, submesh-to-rank assignment and speed-up estimates.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{partition_balanced, Mesh1D, Partition};

/// Quadrature windows over `[0, t_end]` used by default.
pub const DEFAULT_WINDOWS: usize = 100;

/// Binned step of a cell with size `dx` under wave speed `speed`: the largest
/// power-of-two multiple of `dt_min` within half the cell's CFL step, and never
/// below `dt_min` or above `cap`.
pub fn cell_timestep_estimate(dx: f64, speed: f64, dt_min: f64, cap: f64) -> f64 {
    if speed == 0.0 {
        return cap;
    }
    // the solver's step binning allows the same relative rounding
    let ratio = dx / (2.0 * speed.abs() * dt_min) * (1.0 + 1e-12);
    let e = ratio.log2().floor().max(0.0);
    (dt_min * e.exp2()).min(cap)
}

/// Work rates of each submesh sampled at the midpoints of uniform time windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkProfile {
    pub t_end: f64,
    pub partition: Partition,
    /// `work[w][s]`: cell updates per unit time of submesh `s` in window `w`.
    pub work: Vec<Vec<f64>>,
}

impl WorkProfile {
    /// Samples `speed(t, x)` at cell midpoints; a submesh steps with the smallest
    /// binned step among its cells.
    pub fn build(
        mesh: &Mesh1D,
        partition: &Partition,
        dt_min: f64,
        cap: f64,
        t_end: f64,
        windows: usize,
        speed: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if !(t_end > 0.0 && dt_min > 0.0) || windows == 0 {
            return Err(Error::Config(format!("work profile needs t_end, dt_min > 0 and windows > 0, got {t_end}, {dt_min}, {windows}")));
        }
        if partition.n_cells() != mesh.n_cells() {
            return Err(Error::Config(format!("partition covers {} cells, mesh has {}", partition.n_cells(), mesh.n_cells())));
        }
        let dx = mesh.cell_sizes();
        let len = t_end / windows as f64;
        let work = (0..windows)
            .map(|w| {
                let t = (w as f64 + 0.5) * len;
                (0..partition.n_submeshes())
                    .map(|s| {
                        let r = partition.range(s);
                        let dt = r.clone().map(|j| cell_timestep_estimate(dx[j], speed(t, mesh.midpoint(j)), dt_min, cap)).fold(f64::INFINITY, f64::min);
                        r.len() as f64 / dt
                    })
                    .collect()
            })
            .collect();
        Ok(Self { t_end, partition: partition.clone(), work })
    }

    pub fn windows(&self) -> usize {
        self.work.len()
    }

    pub fn window_len(&self) -> f64 {
        self.t_end / self.windows() as f64
    }

    pub fn window_start(&self, w: usize) -> f64 {
        w as f64 * self.window_len()
    }

    /// Integrated work per submesh.
    pub fn submesh_totals(&self) -> Vec<f64> {
        let len = self.window_len();
        (0..self.partition.n_submeshes()).map(|s| self.work.iter().map(|row| row[s]).sum::<f64>() * len).collect()
    }

    /// Cell updates over the whole run.
    pub fn total_work(&self) -> f64 {
        self.submesh_totals().iter().sum()
    }

    /// Work of each rank in each window under `ranks`.
    pub fn rank_loads(&self, ranks: &[usize], n_ranks: usize) -> Vec<Vec<f64>> {
        self.work
            .iter()
            .map(|row| {
                let mut load = vec![0.0; n_ranks];
                for (s, w) in row.iter().enumerate() {
                    load[ranks[s]] += w;
                }
                load
            })
            .collect()
    }

    /// CSV `window_start,rank,work` with each rank's integrated work per window.
    pub fn write_csv(&self, assignment: &RankAssignment, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window_start", "rank", "work"])?;
        let len = self.window_len();
        for (i, load) in self.rank_loads(&assignment.ranks, assignment.n_ranks).iter().enumerate() {
            for (r, l) in load.iter().enumerate() {
                w.serialize((self.window_start(i), r, l * len))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Every iterate of the partitioner with its heaviest submesh.
#[derive(Debug, Clone)]
pub struct PartitionSearch {
    pub best: Partition,
    pub max_loads: Vec<f64>,
}

/// Weights of each cell when it steps with the smallest step of its submesh.
fn submesh_weights(dt: &[f64], p: &Partition) -> Vec<f64> {
    let mut w = vec![0.0; dt.len()];
    for s in 0..p.n_submeshes() {
        let r = p.range(s);
        let m = dt[r.clone()].iter().copied().fold(f64::INFINITY, f64::min);
        w[r].fill(1.0 / m);
    }
    w
}

/// Alternates balanced partitioning with reweighting for up to `n_iter` rounds,
/// assuming unit wave speed and `dt_min = dx_min / 4`, and keeps the partition with
/// the lightest heaviest submesh. Stops early at a fixed point.
pub fn iterate_partition(mesh: &Mesh1D, n_sbmsh: usize, n_iter: usize) -> Result<PartitionSearch> {
    let dt_min = 0.25 * mesh.dx_min();
    let dt: Vec<f64> = mesh.cell_sizes().iter().map(|&dx| cell_timestep_estimate(dx, 1.0, dt_min, f64::INFINITY)).collect();
    let mut weights: Vec<f64> = dt.iter().map(|d| 1.0 / d).collect();
    let mut best: Option<(f64, Partition)> = None;
    let mut max_loads = Vec::new();
    let mut last: Option<Partition> = None;
    for _ in 0..n_iter.max(1) {
        let p = partition_balanced(&weights, n_sbmsh)?;
        if last.as_ref() == Some(&p) {
            break;
        }
        weights = submesh_weights(&dt, &p);
        let load = p.max_load(&weights);
        max_loads.push(load);
        if best.as_ref().is_none_or(|(b, _)| load < *b) {
            best = Some((load, p.clone()));
        }
        last = Some(p);
    }
    let (_, best) = best.expect("at least one iterate");
    Ok(PartitionSearch { best, max_loads })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankAssignment {
    pub ranks: Vec<usize>,
    pub n_ranks: usize,
    /// Estimated wall-clock time: integrated work of the busiest rank per window.
    pub estimate: f64,
}

impl RankAssignment {
    /// CSV `submesh_id,rank`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["submesh_id", "rank"])?;
        for (s, r) in self.ranks.iter().enumerate() {
            w.serialize((s, r))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum over windows of the busiest rank's load times the window length.
pub fn makespan(work: &[Vec<f64>], window_len: f64, ranks: &[usize], n_ranks: usize) -> f64 {
    let mut load = vec![0.0; n_ranks];
    work.iter()
        .map(|row| {
            load.fill(0.0);
            for (s, w) in row.iter().enumerate() {
                load[ranks[s]] += w;
            }
            load.iter().copied().fold(0.0, f64::max)
        })
        .sum::<f64>()
        * window_len
}

/// Longest-processing-time placement followed by single moves and pairwise swaps
/// until neither lowers the estimated wall-clock time.
pub fn assign_ranks(profile: &WorkProfile, n_ranks: usize) -> Result<RankAssignment> {
    let k = profile.partition.n_submeshes();
    if n_ranks == 0 {
        return Err(Error::Config("at least one rank is required".into()));
    }
    let len = profile.window_len();
    let work = &profile.work;
    let cost = |r: &[usize]| makespan(work, len, r, n_ranks);
    let totals = profile.submesh_totals();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));

    // greedy placement against the windowed objective of the submeshes placed so far
    let mut ranks = vec![usize::MAX; k];
    let mut loads = vec![vec![0.0; n_ranks]; work.len()];
    for &s in &order {
        let r = (0..n_ranks)
            .map(|r| {
                let c: f64 = loads
                    .iter()
                    .zip(work)
                    .map(|(l, row)| l.iter().enumerate().map(|(q, &x)| if q == r { x + row[s] } else { x }).fold(0.0, f64::max))
                    .sum();
                (c, r)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, r)| r)
            .expect("n_ranks > 0");
        ranks[s] = r;
        for (l, row) in loads.iter_mut().zip(work) {
            l[r] += row[s];
        }
    }

    let mut best = cost(&ranks);
    let better = |c: f64, best: f64| c < best * (1.0 - 1e-12);
    loop {
        let mut improved = false;
        for s in 0..k {
            for r in 0..n_ranks {
                if ranks[s] == r {
                    continue;
                }
                let old = ranks[s];
                ranks[s] = r;
                let c = cost(&ranks);
                if better(c, best) {
                    best = c;
                    improved = true;
                } else {
                    ranks[s] = old;
                }
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                if ranks[a] == ranks[b] {
                    continue;
                }
                ranks.swap(a, b);
                let c = cost(&ranks);
                if better(c, best) {
                    best = c;
                    improved = true;
                } else {
                    ranks.swap(a, b);
                }
            }
        }
        if !improved {
            break;
        }
    }
    Ok(RankAssignment { ranks, n_ranks, estimate: best })
}

/// Synchronous work (every cell at `dt_ref`) over modelled local-timestepping work.
pub fn theoretical_speedup(profile: &WorkProfile, dt_ref: f64) -> f64 {
    let w_sync = profile.partition.n_cells() as f64 * profile.t_end / dt_ref;
    w_sync / profile.total_work()
}

/// Ratio of committed cell updates of a synchronous run to a local-timestepping run.
pub fn work_speedup(sync_updates: u64, lts_updates: u64) -> Result<f64> {
    if lts_updates == 0 {
        return Err(Error::Config("work speed-up of a run without updates".into()));
    }
    Ok(sync_updates as f64 / lts_updates as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Warp};

    #[test]
    fn binned_steps() {
        assert_eq!(cell_timestep_estimate(0.02, 1.0, 0.005, 1.0), 0.01);
        assert_eq!(cell_timestep_estimate(0.01, 1.0, 0.005, 1.0), 0.005);
        assert_eq!(cell_timestep_estimate(0.0299, 1.0, 0.005, 1.0), 0.01);
        assert_eq!(cell_timestep_estimate(0.02, 0.0, 0.005, 7.0), 7.0);
        // a step below dt_min is never proposed
        assert_eq!(cell_timestep_estimate(0.001, 1.0, 0.005, 1.0), 0.005);
    }

    #[test]
    fn uniform_mesh_is_a_fixed_point() {
        let mesh = build_mesh(100, Warp::Uniform, (-1.0, 1.0), false).unwrap();
        let s = iterate_partition(&mesh, 20, 100).unwrap();
        assert_eq!(s.best, Partition::uniform(100, 20).unwrap());
        assert_eq!(s.max_loads.len(), 1);
    }

    #[test]
    fn coarse_submeshes_hold_more_cells() {
        let mesh = build_mesh(100, Warp::polynomial(), (-1.0, 1.0), false).unwrap();
        let p = iterate_partition(&mesh, 20, 100).unwrap().best;
        let sizes: Vec<usize> = (0..20).map(|s| p.range(s).len()).collect();
        assert!(sizes[0] > sizes[10] && sizes[19] > sizes[9], "{sizes:?}");
        assert!(sizes.iter().all(|&c| c >= 2));
    }

    fn profile(work: Vec<Vec<f64>>, t_end: f64) -> WorkProfile {
        let k = work[0].len();
        WorkProfile { t_end, partition: Partition::uniform(2 * k, k).unwrap(), work }
    }

    #[test]
    fn lpt_on_constant_work() {
        let p = profile(vec![vec![3.0, 3.0, 2.0, 2.0]], 2.0);
        let a = assign_ranks(&p, 2).unwrap();
        assert_eq!(a.estimate, 10.0);
        assert_ne!(a.ranks[0], a.ranks[1]);
        let p = profile(vec![vec![1.0; 6]; 4], 1.0);
        let a = assign_ranks(&p, 3).unwrap();
        assert!((a.estimate - 2.0).abs() < 1e-12);
        for r in 0..3 {
            assert_eq!(a.ranks.iter().filter(|&&x| x == r).count(), 2);
        }
    }

    #[test]
    fn time_varying_work_beats_averages() {
        // by average work every submesh looks alike; pairing the phases is optimal
        let p = profile(vec![vec![2.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 2.0, 2.0]], 2.0);
        let a = assign_ranks(&p, 2).unwrap();
        assert_eq!(a.estimate, 4.0);
        assert_ne!(a.ranks[0], a.ranks[1]);
    }

    #[test]
    fn csv_exports() {
        let p = profile(vec![vec![3.0, 1.0], vec![1.0, 1.0]], 2.0);
        let a = RankAssignment { ranks: vec![0, 1], n_ranks: 2, estimate: 0.0 };
        let mut buf = Vec::new();
        p.write_csv(&a, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "window_start,rank,work\n0.0,0,3.0\n0.0,1,1.0\n1.0,0,1.0\n1.0,1,1.0\n");
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "submesh_id,rank\n0,0\n1,1\n");
    }

    #[test]
    fn work_speedup_definition() {
        assert_eq!(work_speedup(200, 100).unwrap(), 2.0);
        assert_eq!(work_speedup(7, 7).unwrap(), 1.0);
        assert!(work_speedup(1, 0).is_err());
    }
}
