//! Optimistic parallel execution in the TimeWarp style.
//!
//! Each worker owns a set of logical processes (actors) and runs their events
//! speculatively in key order. An event arriving with a key below one an actor
//! already processed rolls that actor back to a snapshot, re-executes up to the
//! straggler, and retracts the outputs of the undone events with anti-messages.
//! Workers meet at an epoch barrier to agree on global virtual time (GVT), the
//! smallest key any future event can have; everything below it is committed.
//!
//! Keys generated by an event are always larger than the event's own key, which
//! makes the committed history equal to the sequential executor's event for event.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Barrier, Mutex};

use serde::Serialize;

use crate::des::{Actor, Context, EventKey, SimTime};
use crate::error::{Error, Result};

/// What travels between workers.
#[derive(Debug, Clone)]
pub enum Wire<M> {
    Event(EventKey, M),
    Anti(EventKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptimisticConfig {
    pub workers: usize,
    /// Snapshot the actor before every `snapshot_every`-th event.
    pub snapshot_every: usize,
    /// Events a worker runs between GVT rounds.
    pub epoch: usize,
    /// Uncommitted snapshots kept per actor; a rollback past the oldest one aborts.
    pub max_snapshots: usize,
    /// Hold back events the actor flags as premature until GVT reaches them.
    pub gate_premature: bool,
}

impl Default for OptimisticConfig {
    fn default() -> Self {
        Self { workers: 2, snapshot_every: 1, epoch: 64, max_snapshots: 1 << 20, gate_premature: true }
    }
}

impl OptimisticConfig {
    pub fn with_workers(workers: usize) -> Self {
        Self { workers, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct WorkerStats {
    pub processed: u64,
    pub committed: u64,
    pub rollbacks: u64,
    pub rolled_back_events: u64,
    pub anti_messages: u64,
    pub coast_forward_events: u64,
}

impl WorkerStats {
    fn add(&mut self, o: &WorkerStats) {
        self.processed += o.processed;
        self.committed += o.committed;
        self.rollbacks += o.rollbacks;
        self.rolled_back_events += o.rolled_back_events;
        self.anti_messages += o.anti_messages;
        self.coast_forward_events += o.coast_forward_events;
    }
}

#[derive(Debug, Clone)]
pub struct OptimisticOutcome<A: Actor> {
    pub actors: Vec<A>,
    /// Committed records in event-key order.
    pub records: Vec<A::Record>,
    /// Committed event keys in order.
    pub processed: Vec<EventKey>,
    pub stats: Vec<WorkerStats>,
    pub gvt_history: Vec<Option<EventKey>>,
    pub max_events_per_tick: usize,
}

impl<A: Actor> OptimisticOutcome<A> {
    pub fn totals(&self) -> WorkerStats {
        let mut t = WorkerStats::default();
        self.stats.iter().for_each(|s| t.add(s));
        t
    }
}

struct Done<A: Actor> {
    key: EventKey,
    msg: A::Msg,
    sent: Vec<EventKey>,
    records: Vec<A::Record>,
    /// A handler error is only real once the event commits; until then the actor
    /// stops and waits for a rollback.
    failure: Option<Error>,
}

struct Snap<A> {
    /// Absolute index of the first event not reflected in the snapshot.
    pos: usize,
    actor: A,
    seq: u64,
}

struct Lp<A: Actor> {
    actor: A,
    seq: u64,
    pending: BTreeMap<EventKey, A::Msg>,
    done: VecDeque<Done<A>>,
    /// Absolute index of `done[0]`.
    base: usize,
    snaps: VecDeque<Snap<A>>,
    /// Absolute index of the first uncommitted event.
    committed: usize,
}

impl<A: Actor> Lp<A> {
    fn new(actor: A, seq: u64) -> Self {
        let snaps = VecDeque::from([Snap { pos: 0, actor: actor.clone(), seq }]);
        Self { actor, seq, pending: BTreeMap::new(), done: VecDeque::new(), base: 0, snaps, committed: 0 }
    }

    fn end(&self) -> usize {
        self.base + self.done.len()
    }

    fn failed(&self) -> bool {
        self.done.back().is_some_and(|d| d.failure.is_some())
    }

    /// Absolute index of the first processed event with key at or above `key`.
    fn first_at_or_after(&self, key: &EventKey) -> usize {
        self.base + self.done.partition_point(|d| d.key < *key)
    }
}

/// Single-threaded optimistic engine over a set of actors: the core of every worker,
/// and directly usable to script speculative interleavings.
pub struct Cluster<A: Actor> {
    lps: BTreeMap<usize, Lp<A>>,
    snapshot_every: usize,
    max_snapshots: usize,
    stats: WorkerStats,
    /// Messages for actors outside this cluster.
    outbox: Vec<(usize, Wire<A::Msg>)>,
}

enum Action<M> {
    Deliver(EventKey, M),
    Cancel(EventKey),
}

impl<A: Actor> Cluster<A> {
    /// Actors with their kernel sequence counters, keyed by id.
    pub fn new(actors: impl IntoIterator<Item = (usize, A, u64)>, snapshot_every: usize) -> Self {
        Self {
            lps: actors.into_iter().map(|(id, a, seq)| (id, Lp::new(a, seq))).collect(),
            snapshot_every: snapshot_every.max(1),
            max_snapshots: usize::MAX,
            stats: WorkerStats::default(),
            outbox: Vec::new(),
        }
    }

    pub fn with_max_snapshots(mut self, n: usize) -> Self {
        self.max_snapshots = n.max(1);
        self
    }

    pub fn stats(&self) -> WorkerStats {
        self.stats
    }

    pub fn actor(&self, id: usize) -> Option<&A> {
        self.lps.get(&id).map(|lp| &lp.actor)
    }

    pub fn owns(&self, id: usize) -> bool {
        self.lps.contains_key(&id)
    }

    pub fn pending_keys(&self, id: usize) -> Vec<EventKey> {
        self.lps.get(&id).map_or_else(Vec::new, |lp| lp.pending.keys().copied().collect())
    }

    /// Keys an actor processed and has not committed yet.
    pub fn speculative_keys(&self, id: usize) -> Vec<EventKey> {
        self.lps.get(&id).map_or_else(Vec::new, |lp| lp.done.iter().skip(lp.committed - lp.base).map(|d| d.key).collect())
    }

    pub fn min_pending(&self) -> Option<EventKey> {
        self.lps.values().filter_map(|lp| lp.pending.keys().next().copied()).min()
    }

    pub fn take_outbox(&mut self) -> Vec<(usize, Wire<A::Msg>)> {
        std::mem::take(&mut self.outbox)
    }

    /// Accepts an event or anti-message addressed to one of our actors.
    pub fn receive(&mut self, wire: Wire<A::Msg>) -> Result<()> {
        let action = match wire {
            Wire::Event(k, m) => Action::Deliver(k, m),
            Wire::Anti(k) => Action::Cancel(k),
        };
        self.apply(VecDeque::from([action]))
    }

    pub fn deliver(&mut self, key: EventKey, msg: A::Msg) -> Result<()> {
        self.receive(Wire::Event(key, msg))
    }

    fn apply(&mut self, mut work: VecDeque<Action<A::Msg>>) -> Result<()> {
        while let Some(action) = work.pop_front() {
            match action {
                Action::Deliver(key, msg) => {
                    if !self.owns(key.dest) {
                        self.outbox.push((key.dest, Wire::Event(key, msg)));
                        continue;
                    }
                    self.rollback(key.dest, &key, &mut work)?;
                    let lp = self.lps.get_mut(&key.dest).expect("owned");
                    if lp.pending.insert(key, msg).is_some() {
                        return Err(Error::Logic { submesh: key.dest, detail: format!("duplicate event key {key:?}") });
                    }
                }
                Action::Cancel(key) => {
                    if !self.owns(key.dest) {
                        self.stats.anti_messages += 1;
                        self.outbox.push((key.dest, Wire::Anti(key)));
                        continue;
                    }
                    self.rollback(key.dest, &key, &mut work)?;
                    let lp = self.lps.get_mut(&key.dest).expect("owned");
                    if lp.pending.remove(&key).is_none() {
                        return Err(Error::Logic { submesh: key.dest, detail: format!("anti-message for unknown event {key:?}") });
                    }
                }
            }
        }
        Ok(())
    }

    /// Undoes every processed event of `id` with key at or above `key`.
    fn rollback(&mut self, id: usize, key: &EventKey, work: &mut VecDeque<Action<A::Msg>>) -> Result<()> {
        let lp = self.lps.get_mut(&id).expect("owned");
        let first = lp.first_at_or_after(key);
        if first == lp.end() {
            return Ok(());
        }
        if first < lp.committed {
            return Err(Error::RollbackBeyondHistory { lp: id, target: format!("{key:?} is committed") });
        }
        let si = lp.snaps.partition_point(|s| s.pos <= first);
        if si == 0 {
            return Err(Error::RollbackBeyondHistory { lp: id, target: format!("{key:?}") });
        }
        lp.snaps.truncate(si);
        let snap = &lp.snaps[si - 1];
        lp.actor = snap.actor.clone();
        lp.seq = snap.seq;
        let from = snap.pos;
        let undone: Vec<Done<A>> = lp.done.drain(first - lp.base..).collect();
        self.stats.rollbacks += 1;
        self.stats.rolled_back_events += undone.len() as u64;
        // coast forward to the rollback point; outputs were already sent
        let (mut out, mut recs) = (Vec::new(), Vec::new());
        for i in from..first {
            let d = &lp.done[i - lp.base];
            let mut cx = Context::new(d.key, id, &mut lp.seq, &mut out, &mut recs);
            lp.actor.handle(&d.msg, &mut cx)?;
            out.clear();
            recs.clear();
            self.stats.coast_forward_events += 1;
        }
        let mut retract = Vec::new();
        for d in undone {
            lp.pending.insert(d.key, d.msg);
            retract.extend(d.sent);
        }
        // smallest first, so each downstream actor rolls back once
        retract.sort_unstable();
        work.extend(retract.into_iter().map(Action::Cancel));
        Ok(())
    }

    /// Runs the smallest pending event of `id` regardless of what else is pending.
    pub fn process_next(&mut self, id: usize) -> Result<Option<EventKey>> {
        let every = self.snapshot_every;
        let max_snaps = self.max_snapshots;
        let lp = self.lps.get_mut(&id).ok_or_else(|| Error::Logic { submesh: id, detail: "not in this cluster".into() })?;
        let Some((key, msg)) = lp.pending.pop_first() else { return Ok(None) };
        let pos = lp.end();
        if pos - lp.snaps.back().map_or(0, |s| s.pos) >= every {
            lp.snaps.push_back(Snap { pos, actor: lp.actor.clone(), seq: lp.seq });
            if lp.snaps.len() > max_snaps {
                lp.snaps.pop_front();
            }
        }
        let (mut out, mut records) = (Vec::new(), Vec::new());
        let mut cx = Context::new(key, id, &mut lp.seq, &mut out, &mut records);
        let result = catch_unwind(AssertUnwindSafe(|| lp.actor.handle(&msg, &mut cx)))
            .unwrap_or_else(|_| Err(Error::Logic { submesh: id, detail: format!("handler panicked at {key:?}") }));
        self.stats.processed += 1;
        if let Err(e) = result {
            lp.done.push_back(Done { key, msg, sent: Vec::new(), records: Vec::new(), failure: Some(e) });
            return Ok(Some(key));
        }
        let sent = out.iter().map(|(k, _)| *k).collect();
        lp.done.push_back(Done { key, msg, sent, records, failure: None });
        self.apply(out.into_iter().map(|(k, m)| Action::Deliver(k, m)).collect())?;
        Ok(Some(key))
    }

    /// Actor whose smallest pending event is the smallest eligible one here.
    pub fn candidate(&self, t_end: SimTime, safe_below: Option<&EventKey>, gate: bool) -> Option<usize> {
        self.lps
            .iter()
            .filter_map(|(&id, lp)| {
                if lp.failed() {
                    return None;
                }
                let key = lp.pending.keys().next()?;
                let safe = safe_below.is_some_and(|g| key <= g);
                (key.tick <= t_end && (!gate || safe || !lp.actor.premature(key))).then_some((*key, id))
            })
            .min()
            .map(|(_, id)| id)
    }

    /// Commits every processed event with key below `gvt` (all of them for `None`)
    /// and drops history no rollback can reach. Returned in key order. Fails with the
    /// handler error of a committed event.
    pub fn commit(&mut self, gvt: Option<&EventKey>) -> Result<Vec<(EventKey, Vec<A::Record>)>> {
        let mut out = Vec::new();
        for lp in self.lps.values_mut() {
            let upto = gvt.map_or(lp.end(), |g| lp.first_at_or_after(g));
            for i in lp.committed..upto {
                let d = &mut lp.done[i - lp.base];
                if let Some(e) = d.failure.take() {
                    return Err(e);
                }
                out.push((d.key, std::mem::take(&mut d.records)));
            }
            self.stats.committed += (upto - lp.committed) as u64;
            lp.committed = upto;
            let keep = lp.snaps.partition_point(|s| s.pos <= upto).saturating_sub(1);
            lp.snaps.drain(..keep);
            let drop_to = lp.snaps.front().map_or(upto, |s| s.pos.min(upto));
            lp.done.drain(..drop_to - lp.base);
            lp.base = drop_to;
        }
        out.sort_by_key(|(k, _)| *k);
        Ok(out)
    }

    fn into_actors(self) -> impl Iterator<Item = (usize, A)> {
        self.lps.into_iter().map(|(id, lp)| (id, lp.actor))
    }
}

type Initial<M> = (Vec<(EventKey, M)>, Vec<u64>);

/// Runs the `start` hooks in id order and returns the initial events with the
/// advanced sequence counters.
fn start_all<A: Actor>(actors: &mut [A]) -> Result<Initial<A::Msg>> {
    let mut out = Vec::new();
    let mut records = Vec::new();
    let mut seqs = vec![0; actors.len()];
    for (id, a) in actors.iter_mut().enumerate() {
        let mut cx = Context::new(EventKey::origin(id), id, &mut seqs[id], &mut out, &mut records);
        a.start(&mut cx)?;
    }
    Ok((out, seqs))
}

fn max_per_tick(keys: &[EventKey]) -> usize {
    let mut best = 0;
    let mut i = 0;
    while i < keys.len() {
        let j = i + keys[i..].partition_point(|k| k.tick == keys[i].tick);
        best = best.max(j - i);
        i = j;
    }
    best
}

struct Shared {
    barrier: Barrier,
    in_transit: Mutex<BTreeMap<EventKey, usize>>,
    slots: Mutex<Vec<(Option<EventKey>, bool)>>,
    abort: AtomicBool,
}

struct Worker<A: Actor> {
    id: usize,
    cluster: Cluster<A>,
    owner: Vec<usize>,
    rx: Receiver<Wire<A::Msg>>,
    tx: Vec<Sender<Wire<A::Msg>>>,
    committed: Vec<(EventKey, Vec<A::Record>)>,
    gvt_history: Vec<Option<EventKey>>,
}

fn wire_key<M>(w: &Wire<M>) -> EventKey {
    match w {
        Wire::Event(k, _) | Wire::Anti(k) => *k,
    }
}

impl<A: Actor> Worker<A> {
    fn ship(&mut self, shared: &Shared) {
        let out = self.cluster.take_outbox();
        if out.is_empty() {
            return;
        }
        {
            let mut t = shared.in_transit.lock().expect("in-transit table");
            for (_, w) in &out {
                *t.entry(wire_key(w)).or_insert(0) += 1;
            }
        }
        for (dest, w) in out {
            // receivers outlive every sender inside the scope
            let _ = self.tx[self.owner[dest]].send(w);
        }
    }

    fn drain(&mut self, shared: &Shared) -> Result<()> {
        while let Ok(w) = self.rx.try_recv() {
            let key = wire_key(&w);
            self.cluster.receive(w)?;
            let mut t = shared.in_transit.lock().expect("in-transit table");
            if let Some(c) = t.get_mut(&key) {
                *c -= 1;
                if *c == 0 {
                    t.remove(&key);
                }
            }
        }
        self.ship(shared);
        Ok(())
    }

    fn run(&mut self, shared: &Shared, cfg: &OptimisticConfig, t_end: SimTime) -> Result<()> {
        let gate = cfg.gate_premature && cfg.workers > 1;
        let mut gvt: Option<EventKey> = None;
        let mut failure: Option<Error> = None;
        loop {
            if failure.is_none() {
                let mut epoch = || -> Result<()> {
                    for _ in 0..cfg.epoch {
                        self.drain(shared)?;
                        let Some(lp) = self.cluster.candidate(t_end, gvt.as_ref(), gate) else { break };
                        self.cluster.process_next(lp)?;
                        self.ship(shared);
                    }
                    Ok(())
                };
                if let Err(e) = epoch() {
                    shared.abort.store(true, Ordering::SeqCst);
                    failure = Some(e);
                }
            }
            // settle every message in flight, including rollback cascades
            loop {
                shared.barrier.wait();
                if failure.is_none() {
                    if let Err(e) = self.drain(shared) {
                        shared.abort.store(true, Ordering::SeqCst);
                        failure = Some(e);
                    }
                }
                shared.barrier.wait();
                let quiet = shared.abort.load(Ordering::SeqCst) || shared.in_transit.lock().expect("in-transit table").is_empty();
                shared.barrier.wait();
                if quiet {
                    break;
                }
            }
            shared.slots.lock().expect("gvt slots")[self.id] = (self.cluster.min_pending(), failure.is_some());
            shared.barrier.wait();
            let (next, failed) = {
                let slots = shared.slots.lock().expect("gvt slots");
                (slots.iter().filter_map(|s| s.0).min(), slots.iter().any(|s| s.1))
            };
            let stop = failed || shared.abort.load(Ordering::SeqCst);
            shared.barrier.wait();
            if stop {
                return match failure {
                    Some(e) => Err(e),
                    None => Ok(()),
                };
            }
            debug_assert!(gvt.is_none() || next.is_none() || next >= gvt, "GVT moved backwards");
            self.gvt_history.push(next);
            match next {
                Some(g) if g.tick <= t_end => {
                    // the failing worker still has to meet the others at the next barrier
                    match self.cluster.commit(Some(&g)) {
                        Ok(c) => self.committed.extend(c),
                        Err(e) => {
                            shared.abort.store(true, Ordering::SeqCst);
                            failure = Some(e);
                        }
                    }
                    gvt = Some(g);
                }
                _ => {
                    self.committed.extend(self.cluster.commit(None)?);
                    return Ok(());
                }
            }
        }
    }
}

/// Runs `actors` to `t_end` on `cfg.workers` threads, actor `i` on worker `assignment[i]`.
pub fn run_optimistic<A: Actor>(mut actors: Vec<A>, assignment: &[usize], cfg: &OptimisticConfig, t_end: SimTime) -> Result<OptimisticOutcome<A>>
where
    A::Record: Send,
{
    let n = actors.len();
    let w = cfg.workers;
    if w == 0 || assignment.len() != n || assignment.iter().any(|&r| r >= w) {
        return Err(Error::Config(format!("assignment of {n} actors onto {w} workers is not total")));
    }
    let (initial, seqs) = start_all(&mut actors)?;
    let mut clusters: Vec<Vec<(usize, A, u64)>> = (0..w).map(|_| Vec::new()).collect();
    for (id, a) in actors.into_iter().enumerate() {
        clusters[assignment[id]].push((id, a, seqs[id]));
    }
    let mut clusters: Vec<Cluster<A>> =
        clusters.into_iter().map(|c| Cluster::new(c, cfg.snapshot_every).with_max_snapshots(cfg.max_snapshots)).collect();
    for (k, m) in initial {
        clusters[assignment[k.dest]].deliver(k, m)?;
    }
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..w).map(|_| channel()).unzip();
    let mut workers: Vec<Worker<A>> = clusters
        .into_iter()
        .zip(rxs)
        .enumerate()
        .map(|(id, (cluster, rx))| Worker {
            id,
            cluster,
            owner: assignment.to_vec(),
            rx,
            tx: txs.clone(),
            committed: Vec::new(),
            gvt_history: Vec::new(),
        })
        .collect();
    drop(txs);
    let shared = Shared {
        barrier: Barrier::new(w),
        in_transit: Mutex::new(BTreeMap::new()),
        slots: Mutex::new(vec![(None, false); w]),
        abort: AtomicBool::new(false),
    };
    let results: Vec<Result<()>> = std::thread::scope(|s| {
        let handles: Vec<_> = workers.iter_mut().map(|wk| s.spawn(|| wk.run(&shared, cfg, t_end))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::Logic { submesh: usize::MAX, detail: "worker panicked".into() }))).collect()
    });
    for r in results {
        r?;
    }
    let gvt_history = workers[0].gvt_history.clone();
    let stats = workers.iter().map(|wk| wk.cluster.stats()).collect();
    let mut committed: Vec<(EventKey, Vec<A::Record>)> = workers.iter_mut().flat_map(|wk| std::mem::take(&mut wk.committed)).collect();
    committed.sort_by_key(|(k, _)| *k);
    let mut by_id: Vec<Option<A>> = (0..n).map(|_| None).collect();
    for wk in workers {
        for (id, a) in wk.cluster.into_actors() {
            by_id[id] = Some(a);
        }
    }
    let processed: Vec<EventKey> = committed.iter().map(|(k, _)| *k).collect();
    Ok(OptimisticOutcome {
        actors: by_id.into_iter().map(|a| a.expect("every actor is owned by one worker")).collect(),
        max_events_per_tick: max_per_tick(&processed),
        records: committed.into_iter().flat_map(|(_, r)| r).collect(),
        processed,
        stats,
        gvt_history,
    })
}

/// Contiguous blocks of actors per worker.
pub fn block_assignment(n_actors: usize, workers: usize) -> Vec<usize> {
    let w = workers.max(1);
    (0..n_actors).map(|i| i * w / n_actors.max(1)).collect()
}
