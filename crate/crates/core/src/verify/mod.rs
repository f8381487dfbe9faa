//! Checkers for the stability theorems and loop invariants.
//!
//! Trace checkers are pure functions of an [`EventTrace`]. The invariant and
//! state-machine monitors observe a live sequential run through the kernel's
//! [`Monitor`](crate::des::Monitor) hooks.

mod fsm;
mod history;
mod invariant;
mod trace_checks;

use std::fmt;

pub use fsm::{classify_state, FsmMonitor, FsmState, Transition};
pub use invariant::InvariantMonitor;
pub use trace_checks::{check_cfl, check_locally_ordered, check_max_principle, check_tvd, replay_oracle, straddles};

use crate::des::SimTime;
use crate::trace::EventTrace;

/// How many violations a report keeps in full; the rest are only counted.
const KEEP: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub tick: SimTime,
    pub submesh: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: &'static str,
    /// Diagnostic reports print their findings but never fail.
    pub mandatory: bool,
    pub violations: Vec<Violation>,
    pub count: usize,
    /// Reason the check could not run on this input.
    pub skipped: Option<String>,
}

impl Report {
    pub fn new(name: &'static str, mandatory: bool) -> Self {
        Self { name, mandatory, violations: Vec::new(), count: 0, skipped: None }
    }

    pub fn skip(name: &'static str, reason: impl Into<String>) -> Self {
        Self { skipped: Some(reason.into()), ..Self::new(name, false) }
    }

    pub fn fail(&mut self, tick: SimTime, submesh: usize, detail: impl Into<String>) {
        self.count += 1;
        if self.violations.len() < KEEP {
            self.violations.push(Violation { tick, submesh, detail: detail.into() });
        }
    }

    pub fn clean(&self) -> bool {
        self.count == 0
    }

    /// False only for a mandatory check with violations.
    pub fn passed(&self) -> bool {
        !self.mandatory || self.clean()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn merge(&mut self, other: Report) {
        self.count += other.count;
        let room = KEEP.saturating_sub(self.violations.len());
        self.violations.extend(other.violations.into_iter().take(room));
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(why) = &self.skipped {
            return write!(f, "CHECK {} SKIP detail={why}", self.name);
        }
        if self.clean() {
            return write!(f, "CHECK {} PASS", self.name);
        }
        let verdict = if self.mandatory { "FAIL" } else { "WARN" };
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "CHECK {} {verdict} t={} submesh={} detail={}", self.name, v.tick, v.submesh, v.detail)?;
        }
        if self.count > self.violations.len() {
            write!(f, "\nCHECK {} {verdict} ... {} more", self.name, self.count - self.violations.len())?;
        }
        Ok(())
    }
}

/// All five trace checkers. Systems run TVD and maximum principle as diagnostics and
/// skip the CFL check, whose coefficients are only defined for scalar laws.
pub fn check_trace(trace: &EventTrace) -> Vec<Report> {
    vec![check_locally_ordered(trace), check_tvd(trace), check_max_principle(trace), check_cfl(trace), replay_oracle(trace)]
}
