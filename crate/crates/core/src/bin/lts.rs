use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvd_lts::app::{parse_warp, run, CheckMode, Ics, Mode, Partitioner, Problem, RunConfig};
use tvd_lts::error::Result;
use tvd_lts::lts::RecordMode;
use tvd_lts::mesh::Warp;
use tvd_lts::physics::FluxKind;
use tvd_lts::trace::EventTrace;
use tvd_lts::verify::check_trace;

/// Adaptive local timestepping for 1D conservation laws.
///
/// Every run flag can also be set through an environment variable named after it
/// with an `LTS_` prefix, e.g. `LTS_CELLS=400`. Flags win over the environment, which
/// wins over `--config`.
#[derive(Parser)]
#[command(name = "lts", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trace checker on a trace file.
    Check { trace: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration used as the base for every other flag.
    #[arg(long, env = "LTS_CONFIG")]
    config: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long, env = "LTS_PROBLEM", value_parser = parse_with::<Problem>)]
    problem: Option<Problem>,
    #[arg(long, env = "LTS_ICS", value_parser = parse_with::<Ics>)]
    ics: Option<Ics>,
    /// uniform, polynomial or polynomial:<epsilon>
    #[arg(long, env = "LTS_MESH", value_parser = parse_warp_arg)]
    mesh: Option<Warp>,
    #[arg(long, env = "LTS_CELLS")]
    cells: Option<usize>,
    #[arg(long, env = "LTS_SUBMESHES")]
    submeshes: Option<usize>,
    /// Final time in seconds.
    #[arg(long, env = "LTS_T_END")]
    t_end: Option<f64>,
    /// Seconds per tick.
    #[arg(long, env = "LTS_DT_MIN")]
    dt_min: Option<f64>,
    /// lts-seq, lts-par or sync
    #[arg(long, env = "LTS_MODE", value_parser = parse_with::<Mode>)]
    mode: Option<Mode>,
    #[arg(long, env = "LTS_WORKERS")]
    workers: Option<usize>,
    /// llf or godunov
    #[arg(long, env = "LTS_FLUX", value_parser = parse_flux)]
    flux: Option<FluxKind>,
    #[arg(long, env = "LTS_CAP_TICKS")]
    cap_ticks: Option<u64>,
    #[arg(long, env = "LTS_PERIODIC")]
    periodic: Option<bool>,
    #[arg(long, env = "LTS_CONSTANT")]
    constant: Option<f64>,
    /// uniform or iterative
    #[arg(long, env = "LTS_PARTITIONER", value_parser = parse_with::<Partitioner>)]
    partitioner: Option<Partitioner>,
    /// File with one interior splitter per line; overrides the partitioner.
    #[arg(long, env = "LTS_SPLITTERS")]
    splitters: Option<PathBuf>,
    #[arg(long, env = "LTS_SYNC_TICKS")]
    sync_ticks: Option<u64>,
    /// Also run the synchronous reference and report the work speed-up.
    #[arg(long, env = "LTS_REFERENCE")]
    reference: Option<bool>,
    /// on, off or diagnostic
    #[arg(long, env = "LTS_CHECK", value_parser = parse_with::<CheckMode>)]
    check: Option<CheckMode>,
    /// full or compact
    #[arg(long, env = "LTS_RECORD", value_parser = parse_record)]
    record: Option<RecordMode>,
    #[arg(long, env = "LTS_TRACE_OUT")]
    trace_out: Option<PathBuf>,
    #[arg(long, env = "LTS_STATS_OUT")]
    stats_out: Option<PathBuf>,
    #[arg(long, env = "LTS_SPACETIME_OUT")]
    spacetime_out: Option<PathBuf>,
}

fn parse_with<T: std::str::FromStr<Err = tvd_lts::error::Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: tvd_lts::error::Error| e.to_string())
}

fn parse_warp_arg(s: &str) -> std::result::Result<Warp, String> {
    parse_warp(s).map_err(|e| e.to_string())
}

fn parse_flux(s: &str) -> std::result::Result<FluxKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown flux `{s}`"))
}

fn parse_record(s: &str) -> std::result::Result<RecordMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown record mode `{s}`"))
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { c.$f = v; } )*};
        }
        macro_rules! set_opt {
            ($($f:ident),*) => {$( if self.$f.is_some() { c.$f = self.$f; } )*};
        }
        set!(problem, ics, mesh, cells, submeshes, t_end, mode, workers, flux, cap_ticks, periodic, constant, partitioner, reference, check, record);
        set_opt!(dt_min, splitters, sync_ticks, trace_out, stats_out, spacetime_out);
        c.validate()?;
        Ok(c)
    }
}

fn check_file(path: &Path) -> Result<ExitCode> {
    let trace = EventTrace::read(path)?;
    let reports = check_trace(&trace);
    for r in &reports {
        println!("{r}");
    }
    Ok(if reports.iter().all(|r| r.passed()) { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_cli(args: RunArgs) -> Result<ExitCode> {
    let print = args.print_config;
    let cfg = args.resolve()?;
    if print {
        print!("{}", cfg.to_toml()?);
        return Ok(ExitCode::SUCCESS);
    }
    let out = run(&cfg)?;
    let s = &out.summary;
    println!("mode={:?} problem={:?} ics={:?} cells={} submeshes={} workers={}", s.mode, s.problem, s.ics, s.cells, s.submeshes, s.workers);
    println!("dt_min={:e} dt_ref={:e} t_end={} ticks={}", s.dt_min, s.dt_ref, s.t_end, s.t_end_ticks);
    println!(
        "events={} submesh_updates={} cell_updates={} max_events_per_tick={} bound={} rollbacks={}",
        s.events, s.submesh_updates, s.cell_updates, s.max_events_per_tick, s.event_bound, s.rollbacks
    );
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
    println!("l1_error={} s_th={} s_work={}", opt(s.l1_error), opt(s.s_th), opt(s.s_work));
    for r in &out.reports {
        println!("{r}");
    }
    println!("elapsed_us={}", s.wall_us);
    let failed = cfg.check == CheckMode::On && !out.failed_checks().is_empty();
    Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Check { trace }) => check_file(&trace),
        None => run_cli(cli.run),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
