use proptest::prelude::*;

use tvd_lts::mesh::{build_mesh, Partition, Warp};
use tvd_lts::perfmodel::{assign_ranks, cell_timestep_estimate, makespan, theoretical_speedup, work_speedup, RankAssignment, WorkProfile};

/// Doubles from `dt_min` while the next step still fits in half the CFL step.
fn binned_step(dx: f64, speed: f64, dt_min: f64, cap: f64) -> f64 {
    let limit = dx / (2.0 * speed) * (1.0 + 1e-12);
    let mut dt = dt_min;
    while 2.0 * dt <= limit && 2.0 * dt <= cap {
        dt *= 2.0;
    }
    dt.min(cap)
}

fn profile(work: Vec<Vec<f64>>) -> WorkProfile {
    let k = work[0].len();
    WorkProfile { t_end: work.len() as f64, partition: Partition::uniform(2 * k, k).unwrap(), work }
}

/// Every assignment of `k` submeshes to ranks, rank 0 fixed for submesh 0.
fn optimum(p: &WorkProfile, n_ranks: usize) -> f64 {
    let k = p.work[0].len();
    let mut best = f64::INFINITY;
    let mut ranks = vec![0; k];
    for code in 0..n_ranks.pow(k as u32 - 1) {
        let mut c = code;
        for r in ranks.iter_mut().skip(1) {
            *r = c % n_ranks;
            c /= n_ranks;
        }
        best = best.min(makespan(&p.work, p.window_len(), &ranks, n_ranks));
    }
    best
}

fn locally_optimal(p: &WorkProfile, a: &RankAssignment) -> bool {
    let cost = |r: &[usize]| makespan(&p.work, p.window_len(), r, a.n_ranks);
    let base = cost(&a.ranks);
    let k = a.ranks.len();
    let mut r = a.ranks.clone();
    for s in 0..k {
        for q in 0..a.n_ranks {
            let old = r[s];
            r[s] = q;
            if cost(&r) < base * (1.0 - 1e-9) {
                return false;
            }
            r[s] = old;
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            r.swap(i, j);
            if cost(&r) < base * (1.0 - 1e-9) {
                return false;
            }
            r.swap(i, j);
        }
    }
    true
}

#[test]
fn twelve_cell_toy() {
    // dx = 1/6; speed 1 on the left gives a step of 4 dt_min, speed 1/4 on the right 16 dt_min
    let mesh = build_mesh(12, Warp::Uniform, (-1.0, 1.0), false).unwrap();
    let part = Partition::from_bounds(vec![0, 4, 8, 12]).unwrap();
    let p = WorkProfile::build(&mesh, &part, 1.0 / 48.0, 1.0, 1.0, 4, |_, x| if x < 0.0 { 1.0 } else { 0.25 }).unwrap();
    for row in &p.work {
        assert_eq!(row, &[48.0, 48.0, 12.0]);
    }
    assert_eq!(p.total_work(), 108.0);
    assert_eq!(theoretical_speedup(&p, 1.0 / 12.0), 144.0 / 108.0);
}

#[test]
fn speedup_of_empty_run_is_an_error() {
    assert!(work_speedup(10, 0).is_err());
    assert_eq!(work_speedup(30, 10).unwrap(), 3.0);
}

#[test]
fn csv_headers() {
    let p = profile(vec![vec![3.0, 1.0, 2.0]; 2]);
    let a = assign_ranks(&p, 2).unwrap();
    let mut ranks = Vec::new();
    a.write_csv(&mut ranks).unwrap();
    let ranks = String::from_utf8(ranks).unwrap();
    assert_eq!(ranks.lines().next(), Some("submesh_id,rank"));
    assert_eq!(ranks.lines().count(), 4);
    let mut loads = Vec::new();
    p.write_csv(&a, &mut loads).unwrap();
    let loads = String::from_utf8(loads).unwrap();
    assert_eq!(loads.lines().next(), Some("window_start,rank,work"));
    assert_eq!(loads.lines().count(), 1 + 2 * 2);
}

proptest! {
    #[test]
    fn binned_step_matches_doubling(dx in 1e-4f64..1.0, speed in 1e-3f64..10.0, dt_min in 1e-6f64..1e-2, cap_pow in 0u32..12) {
        let cap = dt_min * f64::from(1u32 << cap_pow);
        let got = cell_timestep_estimate(dx, speed, dt_min, cap);
        let want = binned_step(dx, speed, dt_min, cap);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn assignment_is_locally_optimal(
        work in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 2..=8), 1..5),
    ) {
        let k = work.iter().map(Vec::len).min().unwrap();
        let work: Vec<Vec<f64>> = work.into_iter().map(|mut r| { r.truncate(k); r }).collect();
        let windows = work.len();
        let p = profile(work);
        let a = assign_ranks(&p, 2).unwrap();
        let best = optimum(&p, 2);
        prop_assert_eq!(a.estimate, makespan(&p.work, p.window_len(), &a.ranks, 2));
        prop_assert!(a.estimate >= best * (1.0 - 1e-12));
        if windows == 1 {
            prop_assert!(a.estimate <= best * 7.0 / 6.0 * (1.0 + 1e-12));
        }
        prop_assert!(locally_optimal(&p, &a));
    }
}
