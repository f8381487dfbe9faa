//! Work model: theoretical speed-up of the lake at rest on the polynomial mesh,
//! from desk scale up to half a million cells, and a rank assignment.
use tvd_lts::app::{Ics, Problem, RunConfig, Setup};
use tvd_lts::mesh::{build_mesh, Warp};
use tvd_lts::perfmodel::{assign_ranks, iterate_partition, theoretical_speedup, WorkProfile};
use tvd_lts::physics::FluxKind;

fn main() -> tvd_lts::error::Result<()> {
    for (cells, submeshes) in [(1_000, 20), (10_000, 48), (500_000, 288)] {
        let mesh = build_mesh(cells, Warp::polynomial(), (-1.0, 1.0), false)?;
        let part = iterate_partition(&mesh, submeshes, 100)?.best;
        let dt_ref = 0.5 * mesh.dx_min();
        let profile = WorkProfile::build(&mesh, &part, 0.5 * dt_ref, f64::INFINITY, 1.0, 1, |_, _| 1.0)?;
        println!("lake at rest, {cells} cells / {submeshes} submeshes: S_th = {:.4}", theoretical_speedup(&profile, dt_ref));
    }
    let cfg = RunConfig { problem: Problem::Swe, ics: Ics::Dambreak, flux: FluxKind::Llf, cells: 1000, submeshes: 24, mesh: Warp::polynomial(), ..Default::default() };
    let setup = Setup::new(&cfg)?;
    let profile = setup.work_profile().expect("dam break has an exact solution");
    let a = assign_ranks(&profile, 4)?;
    let ideal = profile.total_work() / 4.0;
    println!("dam break on 4 ranks: estimated makespan {:.0} cell updates, ideal {ideal:.0}", a.estimate);
    let mut csv = Vec::new();
    a.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}
