//! Problem setup and run orchestration: configuration, initial data, exact
//! solutions, the synchronous reference solver and run summaries.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::des::{NoMonitor, SimTime};
use crate::error::{Error, Result};
use crate::lts::{run_parallel, run_sequential, LtsParams, LtsRun, RecordMode, UpdateRecord};
use crate::mesh::{build_mesh, Mesh1D, Partition, Warp};
use crate::parallel::{block_assignment, OptimisticConfig, WorkerStats};
use crate::perfmodel::{iterate_partition, theoretical_speedup, work_speedup, WorkProfile, DEFAULT_WINDOWS};
use crate::physics::{dt_min_bound, ConservationLaw, FluxKind, NumericalFlux, State, G};
use crate::trace::EventTrace;
use crate::verify::{check_trace, FsmMonitor, InvariantMonitor, Report};

/// Every problem lives on this interval.
pub const DOMAIN: (f64, f64) = (-1.0, 1.0);

/// Downstream depth of the dam break.
pub const DAM_BREAK_DOWNSTREAM: f64 = 1.0 / 16.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    Burgers,
    Swe,
}

impl Problem {
    pub fn law(self) -> ConservationLaw {
        match self {
            Problem::Burgers => ConservationLaw::Burgers,
            Problem::Swe => ConservationLaw::ShallowWater,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ics {
    Shockwave,
    Rarefaction,
    Constant,
    Dambreak,
    LakeAtRest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LtsSeq,
    LtsPar,
    Sync,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    /// Run the checkers; mandatory failures fail the run.
    On,
    Off,
    /// Run and report, never fail.
    Diagnostic,
}

impl Default for CheckMode {
    fn default() -> Self {
        if cfg!(debug_assertions) {
            CheckMode::On
        } else {
            CheckMode::Off
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partitioner {
    Uniform,
    Iterative,
}

macro_rules! kebab_from_str {
    ($($t:ty),*) => {$(
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                serde_json::from_value(serde_json::Value::String(s.to_string()))
                    .map_err(|_| Error::Config(format!("unknown {} `{s}`", stringify!($t).to_lowercase())))
            }
        }
    )*};
}
kebab_from_str!(Problem, Ics, Mode, CheckMode, Partitioner);

/// `uniform`, `polynomial` or `polynomial:<epsilon>`.
pub fn parse_warp(s: &str) -> Result<Warp> {
    match s.split_once(':') {
        None if s == "uniform" => Ok(Warp::Uniform),
        None if s == "polynomial" => Ok(Warp::polynomial()),
        Some(("polynomial", eps)) => {
            let epsilon = eps.parse().map_err(|_| Error::Config(format!("bad warp parameter `{eps}`")))?;
            Ok(Warp::Polynomial { epsilon })
        }
        _ => Err(Error::Config(format!("unknown mesh `{s}`, expected uniform or polynomial[:eps]"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub ics: Ics,
    pub cells: usize,
    pub submeshes: usize,
    /// Seconds.
    pub t_end: f64,
    /// Seconds per tick; derived from the reference step when absent.
    pub dt_min: Option<f64>,
    pub mode: Mode,
    pub workers: usize,
    pub flux: FluxKind,
    pub cap_ticks: SimTime,
    pub periodic: bool,
    /// Value of the constant initial data (velocity for Burgers, depth for shallow water).
    pub constant: f64,
    pub partitioner: Partitioner,
    pub splitters: Option<PathBuf>,
    /// Step of the synchronous reference in ticks; derived when absent.
    pub sync_ticks: Option<SimTime>,
    /// Also run the synchronous reference and report the work speed-up.
    pub reference: bool,
    pub check: CheckMode,
    pub record: RecordMode,
    pub trace_out: Option<PathBuf>,
    pub stats_out: Option<PathBuf>,
    pub spacetime_out: Option<PathBuf>,
    pub mesh: Warp,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Burgers,
            ics: Ics::Shockwave,
            cells: 100,
            submeshes: 20,
            t_end: 0.5,
            dt_min: None,
            mode: Mode::LtsSeq,
            workers: 2,
            flux: FluxKind::Godunov,
            cap_ticks: crate::lts::DEFAULT_CAP_TICKS,
            periodic: false,
            constant: 0.5,
            partitioner: Partitioner::Iterative,
            splitters: None,
            sync_ticks: None,
            reference: false,
            check: CheckMode::default(),
            record: RecordMode::Full,
            trace_out: None,
            stats_out: None,
            spacetime_out: None,
            mesh: Warp::Uniform,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if let Some(dt) = self.dt_min {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt_min must be positive, got {dt}"));
            }
        }
        if self.submeshes == 0 || 2 * self.submeshes > self.cells {
            return bad(format!("{} cells cannot form {} submeshes of two or more cells", self.cells, self.submeshes));
        }
        if self.flux == FluxKind::Godunov && self.problem != Problem::Burgers {
            return bad("the godunov flux is only available for burgers".into());
        }
        let ok = match self.ics {
            Ics::Shockwave | Ics::Rarefaction => self.problem == Problem::Burgers,
            Ics::Dambreak | Ics::LakeAtRest => self.problem == Problem::Swe,
            Ics::Constant => self.problem == Problem::Burgers || self.constant > 0.0,
        };
        if !ok {
            return bad(format!("initial condition {:?} does not apply to {:?}", self.ics, self.problem));
        }
        if self.workers == 0 || self.cap_ticks == 0 || self.sync_ticks == Some(0) {
            return bad("workers, cap_ticks and sync_ticks must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.to_path_buf(), detail: e.to_string() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?, path)
    }

    pub fn flux(&self) -> Result<NumericalFlux> {
        NumericalFlux::new(self.problem.law(), self.flux)
    }
}

/// Exact solution of the shallow water Riemann problem with `h > 0` on both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannSwe {
    pub left: (f64, f64),
    pub right: (f64, f64),
    pub h_star: f64,
    pub u_star: f64,
}

fn wave_function(h: f64, hk: f64) -> f64 {
    if h <= hk {
        2.0 * ((G * h).sqrt() - (G * hk).sqrt())
    } else {
        (h - hk) * (0.5 * G * (h + hk) / (h * hk)).sqrt()
    }
}

/// Speed of a shock joining depth `hk` to the star depth, relative to the fluid.
fn shock_factor(h_star: f64, hk: f64) -> f64 {
    (G * hk).sqrt() * (0.5 * (h_star / hk) * (h_star / hk + 1.0)).sqrt()
}

impl RiemannSwe {
    /// `left` and `right` are `(h, u)`.
    pub fn solve(left: (f64, f64), right: (f64, f64)) -> Result<Self> {
        let (hl, ul) = left;
        let (hr, ur) = right;
        if !(hl > 0.0 && hr > 0.0) {
            return Err(Error::Config("the exact Riemann solver needs wet states".into()));
        }
        if ur - ul >= 2.0 * ((G * hl).sqrt() + (G * hr).sqrt()) {
            return Err(Error::Config("Riemann data produce a dry middle state".into()));
        }
        let f = |h: f64| wave_function(h, hl) + wave_function(h, hr) + ur - ul;
        let (mut lo, mut hi) = (0.0, 2.0 * hl.max(hr));
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h_star = 0.5 * (lo + hi);
        let u_star = 0.5 * (ul + ur) + 0.5 * (wave_function(h_star, hr) - wave_function(h_star, hl));
        Ok(Self { left, right, h_star, u_star })
    }

    pub fn dam_break() -> Self {
        Self::solve((1.0, 0.0), (DAM_BREAK_DOWNSTREAM, 0.0)).expect("wet dam break")
    }

    /// Positions `x / t` where the solution has a jump or a kink.
    pub fn wave_edges(&self) -> Vec<f64> {
        let (hl, ul) = self.left;
        let (hr, ur) = self.right;
        let c_star = (G * self.h_star).sqrt();
        let mut e = Vec::new();
        if self.h_star > hl {
            e.push(ul - shock_factor(self.h_star, hl));
        } else {
            e.extend([ul - (G * hl).sqrt(), self.u_star - c_star]);
        }
        if self.h_star > hr {
            e.push(ur + shock_factor(self.h_star, hr));
        } else {
            e.extend([self.u_star + c_star, ur + (G * hr).sqrt()]);
        }
        e
    }

    /// `(h, u)` at similarity coordinate `xi = x / t`.
    pub fn sample(&self, xi: f64) -> (f64, f64) {
        let (hl, ul) = self.left;
        let (hr, ur) = self.right;
        let (cl, cr) = ((G * hl).sqrt(), (G * hr).sqrt());
        let c_star = (G * self.h_star).sqrt();
        let star = (self.h_star, self.u_star);
        if xi <= self.u_star {
            if self.h_star > hl {
                return if xi < ul - shock_factor(self.h_star, hl) { self.left } else { star };
            }
            if xi <= ul - cl {
                self.left
            } else if xi >= self.u_star - c_star {
                star
            } else {
                let c = (ul + 2.0 * cl - xi) / 3.0;
                (c * c / G, (ul + 2.0 * cl + 2.0 * xi) / 3.0)
            }
        } else {
            if self.h_star > hr {
                return if xi > ur + shock_factor(self.h_star, hr) { self.right } else { star };
            }
            if xi >= ur + cr {
                self.right
            } else if xi <= self.u_star + c_star {
                star
            } else {
                let c = (-ur + 2.0 * cr + xi) / 3.0;
                (c * c / G, (ur - 2.0 * cr + 2.0 * xi) / 3.0)
            }
        }
    }

    /// Largest `|u| + c` anywhere in the solution; attained at a constant state.
    pub fn max_wave_speed(&self) -> f64 {
        [self.left, (self.h_star, self.u_star), self.right].iter().map(|&(h, u)| u.abs() + (G * h).sqrt()).fold(0.0, f64::max)
    }
}

/// Pointwise exact solution where one is known: everything on a transmissive mesh
/// (before waves reach the boundary), and constant data on a periodic one.
pub fn exact_state(cfg: &RunConfig, t: f64, x: f64) -> Option<State> {
    let steady = matches!(cfg.ics, Ics::Constant | Ics::LakeAtRest);
    if cfg.periodic && !steady {
        return None;
    }
    Some(match cfg.ics {
        Ics::Shockwave => [if x < 0.5 * t { 1.0 } else { 0.0 }, 0.0],
        Ics::Rarefaction if t == 0.0 => [if x < 0.0 { 0.0 } else { 1.0 }, 0.0],
        Ics::Rarefaction => [(x / t).clamp(0.0, 1.0), 0.0],
        Ics::Constant => [cfg.constant, 0.0],
        Ics::LakeAtRest => [1.0, 0.0],
        Ics::Dambreak => {
            let r = RiemannSwe::dam_break();
            let (h, u) = if t == 0.0 {
                if x < 0.0 { r.left } else { r.right }
            } else {
                r.sample(x / t)
            };
            [h, h * u]
        }
    })
}

/// Wave speed of the exact solution, for work models.
pub fn exact_wave_speed(cfg: &RunConfig, t: f64, x: f64) -> Option<f64> {
    exact_state(cfg, t, x).and_then(|u| cfg.problem.law().wave_speed(&u).ok())
}

/// Upper bound of the wave speed over the whole run, from the exact solution.
pub fn max_wave_speed(cfg: &RunConfig) -> f64 {
    match cfg.ics {
        Ics::Shockwave | Ics::Rarefaction => 1.0,
        Ics::Constant => match cfg.problem {
            Problem::Burgers => cfg.constant.abs(),
            Problem::Swe => (G * cfg.constant).sqrt(),
        },
        Ics::LakeAtRest => G.sqrt(),
        Ics::Dambreak => RiemannSwe::dam_break().max_wave_speed(),
    }
}

fn breakpoints(cfg: &RunConfig, t: f64) -> Vec<f64> {
    match cfg.ics {
        Ics::Shockwave => vec![0.5 * t],
        Ics::Rarefaction => vec![0.0, t],
        Ics::Dambreak if t > 0.0 => RiemannSwe::dam_break().wave_edges().into_iter().map(|s| s * t).collect(),
        Ics::Dambreak => vec![0.0],
        Ics::Constant | Ics::LakeAtRest => vec![],
    }
}

/// Exact cell averages, integrating piecewise between the solution's kinks with
/// three-point Gauss quadrature (exact for the piecewise quadratic data here).
pub fn exact_cell_averages(cfg: &RunConfig, mesh: &Mesh1D, t: f64) -> Option<Vec<State>> {
    exact_state(cfg, t, 0.0)?;
    let cuts = breakpoints(cfg, t);
    let gauss = [(-(0.6f64.sqrt()), 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.6f64.sqrt(), 5.0 / 9.0)];
    let cells = (0..mesh.n_cells())
        .map(|j| {
            let (a, b) = mesh.cell_bounds(j);
            let mut pts: Vec<f64> = cuts.iter().copied().filter(|&c| c > a && c < b).collect();
            pts.insert(0, a);
            pts.push(b);
            let mut acc = [0.0; 2];
            for w in pts.windows(2) {
                let (m, r) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                for (g, wt) in gauss {
                    let u = exact_state(cfg, t, m + g * r).expect("checked above");
                    acc[0] += wt * r * u[0];
                    acc[1] += wt * r * u[1];
                }
            }
            let dx = b - a;
            [acc[0] / dx, acc[1] / dx]
        })
        .collect();
    Some(cells)
}

/// Cell averages of the initial data.
pub fn initial_conditions(cfg: &RunConfig, mesh: &Mesh1D) -> Result<Vec<State>> {
    if cfg.periodic && !matches!(cfg.ics, Ics::Constant | Ics::LakeAtRest) {
        // the data are the same; only the later exact solution is unknown
        let open = RunConfig { periodic: false, ..cfg.clone() };
        return initial_conditions(&open, mesh);
    }
    let mut u = exact_cell_averages(cfg, mesh, 0.0).ok_or_else(|| Error::Config("no initial data".into()))?;
    // averages of data that are constant on a cell must reproduce the value exactly
    if let Some(v) = exact_state(cfg, 0.0, 0.0) {
        for (j, c) in u.iter_mut().enumerate() {
            let (a, b) = mesh.cell_bounds(j);
            if !(a < 0.0 && b > 0.0) {
                *c = exact_state(cfg, 0.0, 0.5 * (a + b)).unwrap_or(v);
            }
        }
    }
    Ok(u)
}

/// L1 distance of the first component from the exact cell averages.
pub fn l1_error(cfg: &RunConfig, mesh: &Mesh1D, states: &[State], t: f64) -> Option<f64> {
    let exact = exact_cell_averages(cfg, mesh, t)?;
    Some(states.iter().zip(&exact).zip(mesh.cell_sizes()).map(|((u, e), dx)| (u[0] - e[0]).abs() * dx).sum())
}

/// Everything a run needs, derived from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: RunConfig,
    pub mesh: Mesh1D,
    pub partition: Partition,
    pub init: Vec<State>,
    /// Step of the synchronous reference in seconds: half the smallest CFL step.
    pub dt_ref: f64,
    pub sync_ticks: SimTime,
    pub params: LtsParams,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let flux = cfg.flux()?;
        let mesh = build_mesh(cfg.cells, cfg.mesh, DOMAIN, cfg.periodic)?;
        let partition = match (&cfg.splitters, cfg.partitioner) {
            (Some(path), _) => Partition::read_splitters(path, cfg.cells)?,
            (None, Partitioner::Uniform) => Partition::uniform(cfg.cells, cfg.submeshes)?,
            (None, Partitioner::Iterative) => iterate_partition(&mesh, cfg.submeshes, 100)?.best,
        };
        let init = initial_conditions(cfg, &mesh)?;
        let speed = max_wave_speed(cfg);
        let dx_min = mesh.dx_min();
        let dt_ref = if speed > 0.0 { 0.5 * dx_min / speed } else { 0.5 * dx_min };
        let dt_min = match cfg.dt_min {
            Some(dt) => dt,
            None if speed > 0.0 => (0.5 * dt_ref).min(dt_min_bound(&flux, dx_min, speed)),
            None => 0.5 * dt_ref,
        };
        let sync_ticks = cfg.sync_ticks.unwrap_or_else(|| ((dt_ref / dt_min) * (1.0 + 1e-12)).floor().max(1.0) as SimTime);
        let steps = (cfg.t_end / (dt_min * sync_ticks as f64) - 1e-9).ceil().max(1.0) as SimTime;
        let mut params = LtsParams::new(flux, dt_min, steps * sync_ticks);
        params.cap_ticks = cfg.cap_ticks;
        params.record = cfg.record;
        Ok(Self { config: cfg.clone(), mesh, partition, init, dt_ref, sync_ticks, params })
    }

    /// End time actually simulated: `t_end` rounded up to whole reference steps.
    pub fn t_end_seconds(&self) -> f64 {
        self.params.t_end as f64 * self.params.dt_min
    }

    /// Work model from the exact wave speeds, when the exact solution is known.
    pub fn work_profile(&self) -> Option<WorkProfile> {
        exact_wave_speed(&self.config, 0.0, 0.0)?;
        let cap = self.params.cap_ticks as f64 * self.params.dt_min;
        let cfg = &self.config;
        WorkProfile::build(&self.mesh, &self.partition, self.params.dt_min, cap, self.t_end_seconds(), DEFAULT_WINDOWS, |t, x| {
            exact_wave_speed(cfg, t, x).unwrap_or(0.0)
        })
        .ok()
    }

    /// Modelled speed-up over the synchronous reference.
    pub fn theoretical_speedup(&self) -> Option<f64> {
        self.work_profile().map(|p| theoretical_speedup(&p, self.sync_ticks as f64 * self.params.dt_min))
    }
}

/// Fixed-step first-order finite volumes over the whole mesh, recorded per submesh so
/// the trace tools apply unchanged. The arithmetic mirrors a local-timestepping
/// update step for step.
pub fn run_sync(mesh: &Mesh1D, partition: &Partition, init: &[State], params: &LtsParams, step: SimTime) -> Result<EventTrace> {
    let n = mesh.n_cells();
    if init.len() != n || partition.n_cells() != n {
        return Err(Error::Config(format!("mesh has {n} cells, partition {}, data {}", partition.n_cells(), init.len())));
    }
    if step == 0 || !params.t_end.is_multiple_of(step) {
        return Err(Error::Config(format!("t_end {} is not a multiple of the step {step}", params.t_end)));
    }
    let flux = params.flux;
    let law = flux.law;
    let dx = mesh.cell_sizes();
    let dt = step as f64 * params.dt_min;
    let mut u = init.to_vec();
    let mut faces = vec![[0.0; 2]; n + 1];
    let mut updates = Vec::with_capacity(partition.n_submeshes() * (params.t_end / step) as usize);
    let mut t = 0;
    while t < params.t_end {
        t += step;
        let (gl, gr) = if mesh.is_periodic() { (u[n - 1], u[0]) } else { (u[0], u[n - 1]) };
        for (j, f) in faces.iter_mut().enumerate() {
            let (a, b) = match j {
                0 => (gl, u[0]),
                _ if j == n => (u[n - 1], gr),
                _ => (u[j - 1], u[j]),
            };
            let v = flux.evaluate(&a, &b)?;
            *f = [v[0] * dt, v[1] * dt];
        }
        for j in 0..n {
            let inv = 1.0 / dx[j];
            u[j][0] += (faces[j][0] - faces[j + 1][0]) * inv;
            u[j][1] += (faces[j][1] - faces[j + 1][1]) * inv;
            if !law.admissible(&u[j]) {
                return Err(Error::Inadmissible { cell: j, detail: format!("{:?} at tick {t}", u[j]) });
            }
        }
        for s in 0..partition.n_submeshes() {
            let r = partition.range(s);
            updates.push(UpdateRecord {
                tick: t,
                submesh: s,
                cell_lo: r.start,
                cell_hi: r.end,
                forced: false,
                states: if params.record == RecordMode::Full { u[r.clone()].to_vec() } else { Vec::new() },
                face_integrals: Some([faces[r.start], faces[r.end]]),
            });
        }
    }
    let initial = if params.record == RecordMode::Full { init.to_vec() } else { Vec::new() };
    Ok(EventTrace::new(mesh, partition, params, initial, updates))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub status: &'static str,
    pub violations: usize,
    pub first: Option<String>,
}

impl From<&Report> for CheckLine {
    fn from(r: &Report) -> Self {
        let status = match (&r.skipped, r.clean(), r.mandatory) {
            (Some(_), _, _) => "skip",
            (None, true, _) => "pass",
            (None, false, true) => "fail",
            (None, false, false) => "warn",
        };
        let first = r.first().map(|v| format!("t={} submesh={} {}", v.tick, v.submesh, v.detail)).or_else(|| r.skipped.clone());
        Self { name: r.name.to_string(), status, violations: r.count, first }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub problem: Problem,
    pub ics: Ics,
    pub cells: usize,
    pub submeshes: usize,
    pub workers: usize,
    pub dt_min: f64,
    pub dt_ref: f64,
    pub t_end_ticks: SimTime,
    pub t_end: f64,
    pub events: usize,
    pub submesh_updates: usize,
    pub cell_updates: u64,
    pub max_events_per_tick: usize,
    pub event_bound: usize,
    pub progress_violations: u64,
    pub rollbacks: u64,
    pub rolled_back_events: u64,
    pub worker_stats: Vec<WorkerStats>,
    pub wall_us: u128,
    pub l1_error: Option<f64>,
    pub s_th: Option<f64>,
    pub reference_cell_updates: Option<u64>,
    pub s_work: Option<f64>,
    pub checks: Vec<CheckLine>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub setup: Setup,
    pub trace: EventTrace,
    pub final_states: Vec<State>,
    pub reports: Vec<Report>,
    pub summary: RunSummary,
}

impl RunOutcome {
    /// Mandatory checks that failed; empty when checks were off.
    pub fn failed_checks(&self) -> Vec<&Report> {
        self.reports.iter().filter(|r| !r.passed()).collect()
    }
}

fn optimistic_config(workers: usize) -> OptimisticConfig {
    OptimisticConfig { workers, ..OptimisticConfig::default() }
}

/// Runs a configuration end to end and writes the requested artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let setup = Setup::new(cfg)?;
    let (mesh, part, params) = (&setup.mesh, &setup.partition, setup.params.clone());
    let k = part.n_submeshes();
    let scalar = params.flux.law.is_scalar();
    let checking = cfg.check != CheckMode::Off;
    let mut reports = Vec::new();
    let mut stats = Vec::new();

    let started = Instant::now();
    let (trace, events, max_per_tick, progress_violations) = match cfg.mode {
        Mode::LtsSeq if checking && scalar => {
            let mut mon = (FsmMonitor::default(), InvariantMonitor::default());
            let run = run_sequential(mesh, part, &setup.init, params.clone(), &mut mon)?;
            reports.push(mon.0.report);
            reports.push(mon.1.report);
            unpack(run)
        }
        Mode::LtsSeq => unpack(run_sequential(mesh, part, &setup.init, params.clone(), &mut NoMonitor)?),
        Mode::LtsPar => {
            let (run, s) = run_parallel(mesh, part, &setup.init, params.clone(), &block_assignment(k, cfg.workers), &optimistic_config(cfg.workers))?;
            stats = s;
            unpack(run)
        }
        Mode::Sync => {
            let trace = run_sync(mesh, part, &setup.init, &params, setup.sync_ticks)?;
            let events = trace.updates.len();
            (trace, events, k, 0)
        }
    };
    let wall_us = started.elapsed().as_micros();
    let mut trace = trace;
    trace.header.config = serde_json::to_value(cfg).map_err(|e| Error::Config(e.to_string()))?;

    if checking {
        reports.extend(check_trace(&trace));
    }
    let final_states = if trace.has_states() { trace.final_states() } else { Vec::new() };
    let t_end = setup.t_end_seconds();
    let l1 = if final_states.is_empty() { None } else { l1_error(cfg, mesh, &final_states, t_end) };

    let cell_updates = trace.cell_updates();
    let reference_cell_updates = if cfg.reference && cfg.mode != Mode::Sync {
        let mut p = params.clone();
        p.record = RecordMode::Compact;
        Some(run_sync(mesh, part, &setup.init, &p, setup.sync_ticks)?.cell_updates())
    } else {
        None
    };
    let s_work = reference_cell_updates.map(|r| work_speedup(r, cell_updates)).transpose()?;
    let totals = stats.iter().fold(WorkerStats::default(), |mut a: WorkerStats, s| {
        a.rollbacks += s.rollbacks;
        a.rolled_back_events += s.rolled_back_events;
        a
    });
    let summary = RunSummary {
        mode: cfg.mode,
        problem: cfg.problem,
        ics: cfg.ics,
        cells: cfg.cells,
        submeshes: k,
        workers: if cfg.mode == Mode::LtsPar { cfg.workers } else { 1 },
        dt_min: params.dt_min,
        dt_ref: setup.dt_ref,
        t_end_ticks: params.t_end,
        t_end,
        events,
        submesh_updates: trace.updates.len(),
        cell_updates,
        max_events_per_tick: max_per_tick,
        event_bound: 3 * k,
        progress_violations,
        rollbacks: totals.rollbacks,
        rolled_back_events: totals.rolled_back_events,
        worker_stats: stats,
        wall_us,
        l1_error: l1,
        s_th: setup.theoretical_speedup(),
        reference_cell_updates,
        s_work,
        checks: reports.iter().map(CheckLine::from).collect(),
    };

    if let Some(p) = &cfg.trace_out {
        trace.write(p)?;
    }
    if let Some(p) = &cfg.spacetime_out {
        trace.write_spacetime(fs::File::create(p)?)?;
    }
    if let Some(p) = &cfg.stats_out {
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(p, json + "\n")?;
    }
    Ok(RunOutcome { setup, trace, final_states, reports, summary })
}

fn unpack(run: LtsRun) -> (EventTrace, usize, usize, u64) {
    (run.trace, run.processed.len(), run.max_events_per_tick, run.progress_violations)
}
