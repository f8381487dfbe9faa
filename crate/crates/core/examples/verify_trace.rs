//! Write a trace, read it back, and run the checkers on it and on a corrupted copy.
use tvd_lts::app::{run, CheckMode, RunConfig};
use tvd_lts::trace::EventTrace;
use tvd_lts::verify::check_trace;

fn main() -> tvd_lts::error::Result<()> {
    let dir = std::env::temp_dir();
    let path = dir.join("verify_trace_example.csv");
    let cfg = RunConfig { ics: tvd_lts::app::Ics::Rarefaction, check: CheckMode::Off, trace_out: Some(path.clone()), ..Default::default() };
    run(&cfg)?;
    let trace = EventTrace::read(&path)?;
    println!("{} updates read from {}", trace.updates.len(), path.display());
    for r in check_trace(&trace) {
        println!("{r}");
    }
    let mut bad = trace.clone();
    let rec = bad.updates.iter_mut().find(|u| u.tick > 10).expect("updates after tick 10");
    rec.states[0][0] += 1e-6;
    println!("after nudging one state by 1e-6:");
    for r in check_trace(&bad) {
        println!("{r}");
    }
    Ok(())
}
