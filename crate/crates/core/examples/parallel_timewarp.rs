//! Optimistic parallel execution commits exactly the sequential trace.
use tvd_lts::app::{initial_conditions, RunConfig, Setup};
use tvd_lts::des::NoMonitor;
use tvd_lts::lts::{run_parallel, run_sequential};
use tvd_lts::mesh::Warp;
use tvd_lts::parallel::{block_assignment, OptimisticConfig};

fn main() -> tvd_lts::error::Result<()> {
    let cfg = RunConfig { cells: 800, submeshes: 32, mesh: Warp::polynomial(), ..Default::default() };
    let setup = Setup::new(&cfg)?;
    let init = initial_conditions(&cfg, &setup.mesh)?;
    let seq = run_sequential(&setup.mesh, &setup.partition, &init, setup.params.clone(), &mut NoMonitor)?;
    for workers in [1, 2, 4] {
        for gate in [true, false] {
            let oc = OptimisticConfig { workers, gate_premature: gate, ..Default::default() };
            let t = std::time::Instant::now();
            let (par, stats) = run_parallel(&setup.mesh, &setup.partition, &init, setup.params.clone(), &block_assignment(32, workers), &oc)?;
            let rollbacks: u64 = stats.iter().map(|s| s.rollbacks).sum();
            let undone: u64 = stats.iter().map(|s| s.rolled_back_events).sum();
            println!(
                "workers {workers} gating {gate:>5}: identical {} rollbacks {rollbacks:>5} undone events {undone:>6} in {:?}",
                par.trace.updates == seq.trace.updates,
                t.elapsed()
            );
        }
    }
    Ok(())
}
