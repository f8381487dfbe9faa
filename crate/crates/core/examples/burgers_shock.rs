//! Burgers shock on a refined mesh: local timestepping against the exact solution
//! and the synchronous reference.
use tvd_lts::app::{run, CheckMode, RunConfig};
use tvd_lts::mesh::Warp;

fn main() -> tvd_lts::error::Result<()> {
    for warp in [Warp::Uniform, Warp::polynomial()] {
        let cfg = RunConfig { cells: 400, submeshes: 20, mesh: warp, reference: true, check: CheckMode::Diagnostic, ..Default::default() };
        let out = run(&cfg)?;
        let s = &out.summary;
        println!("{warp:?}: {} cell updates, L1 error {:.2e}, S_work {:.2}, S_th {:.2}", s.cell_updates, s.l1_error.unwrap(), s.s_work.unwrap(), s.s_th.unwrap());
        for r in &out.reports {
            println!("  {r}");
        }
    }
    Ok(())
}
