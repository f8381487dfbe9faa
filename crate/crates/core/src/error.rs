use std::path::PathBuf;

use crate::des::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("infeasible partition: {cells} cells cannot form {parts} submeshes of at least 2 cells")]
    Partition { cells: usize, parts: usize },

    #[error("inadmissible state at cell {cell}: {detail}")]
    Inadmissible { cell: usize, detail: String },

    #[error("godunov flux is only defined for scalar laws")]
    GodunovOnSystem,

    #[error("event scheduled at tick {at} while the clock reads {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("livelock guard: {count} events at tick {tick} exceed the bound {bound}")]
    Livelock { tick: SimTime, count: usize, bound: usize },

    #[error("logic error in submesh {submesh}: {detail}")]
    Logic { submesh: usize, detail: String },

    #[error("rollback of logical process {lp} to {target:?} exceeds the retained history")]
    RollbackBeyondHistory { lp: usize, target: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
