use proptest::prelude::*;

use tvd_lts::app::{Ics, Problem, RunConfig, Setup};
use tvd_lts::des::NoMonitor;
use tvd_lts::lts::{run_parallel, run_sequential, LtsParams, LtsRun};
use tvd_lts::mesh::{build_mesh, Partition, Warp};
use tvd_lts::parallel::{block_assignment, OptimisticConfig};
use tvd_lts::physics::{dt_min_bound, ConservationLaw, FluxKind, NumericalFlux, State};
use tvd_lts::verify::check_trace;

fn trace_bytes(run: &LtsRun) -> Vec<u8> {
    let mut out = Vec::new();
    run.trace.write_to(&mut out).unwrap();
    out
}

fn assert_same(seq: &LtsRun, par: &LtsRun, what: &str) {
    assert!(trace_bytes(seq) == trace_bytes(par), "trace differs: {what}");
    assert_eq!(seq.processed, par.processed, "{what}");
    assert_eq!(seq.max_events_per_tick, par.max_events_per_tick, "{what}");
}

#[test]
fn dam_break_on_eight_workers() {
    let cfg = RunConfig {
        problem: Problem::Swe,
        ics: Ics::Dambreak,
        flux: FluxKind::Llf,
        mesh: Warp::polynomial(),
        cells: 400,
        submeshes: 24,
        ..Default::default()
    };
    let setup = Setup::new(&cfg).unwrap();
    let seq = run_sequential(&setup.mesh, &setup.partition, &setup.init, setup.params.clone(), &mut NoMonitor).unwrap();
    let k = setup.partition.n_submeshes();
    // round robin puts every interface across two workers
    let assignment: Vec<usize> = (0..k).map(|i| i % 8).collect();
    let (par, stats) = run_parallel(&setup.mesh, &setup.partition, &setup.init, setup.params.clone(), &assignment, &OptimisticConfig::with_workers(8)).unwrap();
    assert_same(&seq, &par, "dam break");
    assert_eq!(stats.len(), 8);
    assert_eq!(stats.iter().map(|s| s.committed).sum::<u64>(), seq.processed.len() as u64);
    for r in check_trace(&par.trace) {
        assert!(r.passed(), "{r}");
    }
}

#[test]
fn single_worker_never_rolls_back() {
    let setup = Setup::new(&RunConfig { cells: 200, mesh: Warp::polynomial(), ..Default::default() }).unwrap();
    let k = setup.partition.n_submeshes();
    let (_, stats) =
        run_parallel(&setup.mesh, &setup.partition, &setup.init, setup.params.clone(), &vec![0; k], &OptimisticConfig::with_workers(1)).unwrap();
    assert_eq!(stats[0].rollbacks, 0);
}

fn scalar_case(values: &[f64], n: usize, k: usize, godunov: bool, periodic: bool, t_end: u64) -> (tvd_lts::mesh::Mesh1D, Partition, Vec<State>, LtsParams) {
    let mesh = build_mesh(n, Warp::polynomial(), (-1.0, 1.0), periodic).unwrap();
    let part = Partition::uniform(n, k).unwrap();
    let init: Vec<State> = (0..n).map(|j| [values[j * values.len() / n], 0.0]).collect();
    let kind = if godunov { FluxKind::Godunov } else { FluxKind::Llf };
    let flux = NumericalFlux::new(ConservationLaw::Burgers, kind).unwrap();
    let speed = init.iter().map(|u| u[0].abs()).fold(0.1, f64::max);
    let params = LtsParams::new(flux, dt_min_bound(&flux, mesh.dx_min(), speed), t_end);
    (mesh, part, init, params)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// Every worker count, epoch length, snapshot interval and gating choice commits
    /// the sequential trace bit for bit.
    #[test]
    fn optimistic_runs_match_sequential(
        values in prop::collection::vec(-1.0f64..1.0, 2..5),
        n in 24usize..64,
        k in 2usize..12,
        godunov in any::<bool>(),
        periodic in any::<bool>(),
        t_end in 16u64..120,
        shuffle in any::<u64>(),
    ) {
        let (mesh, part, init, params) = scalar_case(&values, n, k, godunov, periodic, t_end);
        let seq = run_sequential(&mesh, &part, &init, params.clone(), &mut NoMonitor).unwrap();
        for workers in [1, 2, 4, 8] {
            for epoch in [1, 7, 64] {
                for snapshot_every in [1, 3] {
                    for gate_premature in [true, false] {
                        let cfg = OptimisticConfig { workers, epoch, snapshot_every, gate_premature, ..Default::default() };
                        let assignment: Vec<usize> = if shuffle % 2 == 0 {
                            block_assignment(k, workers)
                        } else {
                            (0..k).map(|i| (i as u64 ^ shuffle) as usize % workers).collect()
                        };
                        let (par, _) = run_parallel(&mesh, &part, &init, params.clone(), &assignment, &cfg).unwrap();
                        let what = format!("{cfg:?}");
                        prop_assert!(trace_bytes(&seq) == trace_bytes(&par), "trace differs: {}", what);
                        prop_assert_eq!(&seq.processed, &par.processed);
                    }
                }
            }
        }
    }
}
