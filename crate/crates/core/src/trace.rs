//! Event traces: every update of every submesh, with enough context to replay it.
//!
//! File form is one JSON header line followed by headerless CSV rows
//! `kind,tick,submesh,cell_lo,cell_hi,values...`. Kinds are `init` (tick 0 states),
//! `update` and `forced` (post-update states) and `flux` (the time-integrated left
//! and right face fluxes of the preceding update). Compact traces keep only the
//! update rows with no values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::des::SimTime;
use crate::error::{Error, Result};
use crate::lts::{LtsParams, RecordMode, UpdateRecord};
use crate::mesh::{Mesh1D, Partition};
use crate::physics::{ConservationLaw, FluxKind, NumericalFlux, State};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub law: ConservationLaw,
    pub flux: FluxKind,
    pub dt_min: f64,
    pub t_end: SimTime,
    pub periodic: bool,
    pub nodes: Vec<f64>,
    pub bounds: Vec<usize>,
    pub compact: bool,
    /// Free-form run description, e.g. the configuration that produced the trace.
    #[serde(default)]
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub header: TraceHeader,
    pub initial: Vec<State>,
    pub updates: Vec<UpdateRecord>,
}

impl EventTrace {
    pub fn new(mesh: &Mesh1D, partition: &Partition, params: &LtsParams, initial: Vec<State>, updates: Vec<UpdateRecord>) -> Self {
        let header = TraceHeader {
            law: params.flux.law,
            flux: params.flux.kind,
            dt_min: params.dt_min,
            t_end: params.t_end,
            periodic: mesh.is_periodic(),
            nodes: mesh.nodes().to_vec(),
            bounds: partition.bounds().to_vec(),
            compact: params.record == RecordMode::Compact,
            config: serde_json::Value::Null,
        };
        Self { header, initial, updates }
    }

    pub fn flux(&self) -> Result<NumericalFlux> {
        NumericalFlux::new(self.header.law, self.header.flux)
    }

    pub fn mesh(&self) -> Result<Mesh1D> {
        Mesh1D::from_nodes(self.header.nodes.clone(), self.header.periodic)
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::from_bounds(self.header.bounds.clone())
    }

    pub fn n_cells(&self) -> usize {
        self.header.nodes.len().saturating_sub(1)
    }

    pub fn n_submeshes(&self) -> usize {
        self.header.bounds.len().saturating_sub(1)
    }

    pub fn has_states(&self) -> bool {
        !self.header.compact
    }

    /// Orders updates by (tick, submesh). Within a tick each submesh updates at most
    /// once, so this is the comparison order for traces from different executors.
    pub fn canonical_sort(&mut self) {
        self.updates.sort_by_key(|u| (u.tick, u.submesh));
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonical_sort();
        self
    }

    /// Update ticks of one submesh, including the initial tick 0.
    pub fn update_ticks(&self, submesh: usize) -> Vec<SimTime> {
        std::iter::once(0).chain(self.updates.iter().filter(|u| u.submesh == submesh).map(|u| u.tick)).collect()
    }

    /// Total number of cell updates.
    pub fn cell_updates(&self) -> u64 {
        self.updates.iter().map(|u| (u.cell_hi - u.cell_lo) as u64).sum()
    }

    /// Cell states after every update in trace order, starting from the initial data.
    pub fn snapshots(&self) -> Snapshots<'_> {
        Snapshots { trace: self, current: self.initial.clone(), next: 0, started: false }
    }

    /// Final cell states.
    pub fn final_states(&self) -> Vec<State> {
        let mut u = self.initial.clone();
        for r in &self.updates {
            if !r.states.is_empty() {
                u[r.cell_lo..r.cell_hi].copy_from_slice(&r.states);
            }
        }
        u
    }

    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.header)?;
        writeln!(w)?;
        let mut out = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(w);
        let n_vars = self.header.law.n_vars();
        let mut row: Vec<String> = Vec::new();
        let mut push_row = |out: &mut csv::Writer<_>, kind: &str, tick: SimTime, s: usize, lo: usize, hi: usize, vals: &[State]| {
            row.clear();
            row.extend([kind.to_string(), tick.to_string(), s.to_string(), lo.to_string(), hi.to_string()]);
            for v in vals {
                row.extend(v[..n_vars].iter().map(|x| x.to_string()));
            }
            out.write_record(&row)
        };
        if !self.header.compact {
            for s in 0..self.n_submeshes() {
                let (lo, hi) = (self.header.bounds[s], self.header.bounds[s + 1]);
                push_row(&mut out, "init", 0, s, lo, hi, &self.initial[lo..hi])?;
            }
        }
        for r in &self.updates {
            let kind = if r.forced { "forced" } else { "update" };
            push_row(&mut out, kind, r.tick, r.submesh, r.cell_lo, r.cell_hi, &r.states)?;
            if let (false, Some(f)) = (self.header.compact, r.face_integrals) {
                push_row(&mut out, "flux", r.tick, r.submesh, r.cell_lo, r.cell_hi, &f)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn read_from(r: impl Read, origin: &Path) -> Result<Self> {
        let parse_err = |detail: String| Error::Parse { path: origin.to_path_buf(), detail };
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first)?;
        let header: TraceHeader = serde_json::from_str(first.trim()).map_err(|e| parse_err(format!("header: {e}")))?;
        let n_vars = header.law.n_vars();
        let n = header.nodes.len().saturating_sub(1);
        let mut initial = if header.compact { Vec::new() } else { vec![[0.0; 2]; n] };
        let mut updates: Vec<UpdateRecord> = Vec::new();
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let at = |detail: &str| parse_err(format!("record {}: {detail}", line + 1));
            if rec.len() < 5 {
                return Err(at("fewer than five fields"));
            }
            let int = |i: usize| rec[i].parse::<u64>().map_err(|e| at(&e.to_string()));
            let (tick, s, lo, hi) = (int(1)?, int(2)? as usize, int(3)? as usize, int(4)? as usize);
            if lo > hi || hi > n {
                return Err(at("cell range outside the mesh"));
            }
            let vals = rec.iter().skip(5).map(|x| x.parse::<f64>().map_err(|e| at(&e.to_string()))).collect::<Result<Vec<_>>>()?;
            if vals.len() % n_vars != 0 {
                return Err(at("value count is not a multiple of the state size"));
            }
            let states: Vec<State> =
                vals.chunks(n_vars).map(|c| if n_vars == 1 { [c[0], 0.0] } else { [c[0], c[1]] }).collect();
            match &rec[0] {
                "init" => {
                    if states.len() != hi - lo {
                        return Err(at("init row needs one state per cell"));
                    }
                    initial[lo..hi].copy_from_slice(&states);
                }
                kind @ ("update" | "forced") => {
                    if !(states.is_empty() || states.len() == hi - lo) {
                        return Err(at("update row needs one state per cell or none"));
                    }
                    updates.push(UpdateRecord {
                        tick,
                        submesh: s,
                        cell_lo: lo,
                        cell_hi: hi,
                        forced: kind == "forced",
                        states,
                        face_integrals: None,
                    });
                }
                "flux" => {
                    let last = updates.last_mut().filter(|u| u.tick == tick && u.submesh == s).ok_or_else(|| at("flux row without its update"))?;
                    if states.len() != 2 {
                        return Err(at("flux row needs two states"));
                    }
                    last.face_integrals = Some([states[0], states[1]]);
                }
                other => return Err(at(&format!("unknown kind {other:?}"))),
            }
        }
        Ok(Self { header, initial, updates })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(File::open(path)?, path)
    }

    /// One `t,x_left,x_right,submesh` row per update.
    pub fn write_spacetime(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x_left", "x_right", "submesh"])?;
        let nodes = &self.header.nodes;
        for r in &self.updates {
            out.write_record([
                (r.tick as f64 * self.header.dt_min).to_string(),
                nodes[r.cell_lo].to_string(),
                nodes[r.cell_hi].to_string(),
                r.submesh.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Iterator over `(tick, states)` after the initial data and after each update.
pub struct Snapshots<'a> {
    trace: &'a EventTrace,
    current: Vec<State>,
    next: usize,
    started: bool,
}

impl Snapshots<'_> {
    /// Advances and returns the tick and states; a lending iterator by hand.
    pub fn next_snapshot(&mut self) -> Option<(SimTime, &[State])> {
        if !self.started {
            self.started = true;
            return Some((0, &self.current));
        }
        let r = self.trace.updates.get(self.next)?;
        self.next += 1;
        if !r.states.is_empty() {
            self.current[r.cell_lo..r.cell_hi].copy_from_slice(&r.states);
        }
        Some((r.tick, &self.current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, Warp};

    fn sample(compact: bool) -> EventTrace {
        let mesh = build_mesh(4, Warp::Uniform, (-1.0, 1.0), true).unwrap();
        let part = Partition::uniform(4, 2).unwrap();
        let flux = NumericalFlux::new(ConservationLaw::ShallowWater, FluxKind::Llf).unwrap();
        let mut params = LtsParams::new(flux, 0.1, 8);
        if compact {
            params.record = RecordMode::Compact;
        }
        let init = vec![[1.0, 0.0], [1.0, 0.25], [0.5, -0.125], [1.0 / 16.1, 0.0]];
        let states = |v: f64| if compact { vec![] } else { vec![[v, 0.1], [v + 1.0, 1e-17]] };
        let ups = vec![
            UpdateRecord { tick: 2, submesh: 1, cell_lo: 2, cell_hi: 4, forced: false, states: states(0.3), face_integrals: (!compact).then_some([[0.1, 0.2], [0.3, 1.0 / 3.0]]) },
            UpdateRecord { tick: 2, submesh: 0, cell_lo: 0, cell_hi: 2, forced: true, states: states(0.7), face_integrals: None },
        ];
        EventTrace::new(&mesh, &part, &params, if compact { vec![] } else { init }, ups)
    }

    #[test]
    fn file_round_trip_is_lossless() {
        for compact in [false, true] {
            let t = sample(compact);
            let mut buf = Vec::new();
            t.write_to(&mut buf).unwrap();
            let back = EventTrace::read_from(&buf[..], Path::new("mem")).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn canonical_order_and_snapshots() {
        let t = sample(false).canonicalized();
        assert_eq!(t.updates.iter().map(|u| u.submesh).collect::<Vec<_>>(), vec![0, 1]);
        let mut snaps = t.snapshots();
        assert_eq!(snaps.next_snapshot().unwrap().1[3], [1.0 / 16.1, 0.0]);
        let (tick, u) = snaps.next_snapshot().unwrap();
        assert_eq!((tick, u[0][0], u[3][0]), (2, 0.7, 1.0 / 16.1));
        assert_eq!(snaps.next_snapshot().unwrap().1[3][0], 1.3);
        assert!(snaps.next_snapshot().is_none());
        assert_eq!(t.cell_updates(), 4);
        assert_eq!(t.update_ticks(1), vec![0, 2]);
    }

    #[test]
    fn spacetime_rows_match_updates() {
        let t = sample(true);
        let mut buf = Vec::new();
        t.write_spacetime(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 1 + t.updates.len());
        assert_eq!(lines[1], "0.2,0,1,1");
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let t = sample(false);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let bad = text.replace("update,2,1,2,4", "update,2,1,2,9");
        assert!(EventTrace::read_from(bad.as_bytes(), Path::new("mem")).is_err());
        let bad = text.replace("forced", "teleport");
        assert!(EventTrace::read_from(bad.as_bytes(), Path::new("mem")).is_err());
    }
}
