//! Shallow water dam break: submeshes ahead of the waves step four times coarser
//! than the upstream ones until the shock arrives.
use tvd_lts::app::{run, CheckMode, Ics, Partitioner, Problem, RunConfig};
use tvd_lts::physics::FluxKind;

fn main() -> tvd_lts::error::Result<()> {
    let cfg = RunConfig {
        problem: Problem::Swe,
        ics: Ics::Dambreak,
        flux: FluxKind::Llf,
        partitioner: Partitioner::Uniform,
        check: CheckMode::Off,
        reference: true,
        spacetime_out: Some(std::env::temp_dir().join("dam_break_spacetime.csv")),
        ..Default::default()
    };
    let out = run(&cfg)?;
    let trace = &out.trace;
    println!("submesh  first steps (ticks)");
    for s in (0..trace.n_submeshes()).step_by(3) {
        let ticks = trace.update_ticks(s);
        let steps: Vec<u64> = ticks.windows(2).take(6).map(|w| w[1] - w[0]).collect();
        println!("{s:>7}  {steps:?}");
    }
    let s = &out.summary;
    println!("S_work {:.2}, S_th {:.2}", s.s_work.unwrap(), s.s_th.unwrap());
    println!("space-time segments in {}", cfg.spacetime_out.unwrap().display());
    Ok(())
}
