//! Deterministic discrete-event kernel with integer time.
//!
//! Actors exchange messages through a queue ordered by [`EventKey`]. The key is a
//! strict total order, so a run is a pure function of its initial state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation time in ticks of the minimum timestep.
pub type SimTime = u64;

/// Total order on events.
///
/// `depth` counts same-tick causal generations: an event scheduled for the tick
/// it was created in sits one generation below its creator. Ordering on it first
/// makes every same-tick effect follow its cause, which keeps optimistic
/// re-execution identical to the sequential order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventKey {
    pub tick: SimTime,
    pub depth: u32,
    pub rank: u8,
    pub dest: usize,
    pub source: usize,
    pub seq: u64,
}

impl EventKey {
    /// Key under which an actor's `start` hook runs.
    pub fn origin(id: usize) -> Self {
        Self { tick: 0, depth: 0, rank: 0, dest: id, source: id, seq: 0 }
    }
}

pub trait Message: Clone + Send + std::fmt::Debug + 'static {
    /// Tie-break rank among events at the same tick and depth; lower runs first.
    fn rank(&self) -> u8;
}

pub trait Actor: Clone + Send + 'static {
    type Msg: Message;
    type Record: Clone + Send + std::fmt::Debug + 'static;

    fn start(&mut self, cx: &mut Context<'_, Self::Msg, Self::Record>) -> Result<()>;

    fn handle(&mut self, msg: &Self::Msg, cx: &mut Context<'_, Self::Msg, Self::Record>) -> Result<()>;

    /// Runs `msg` to completion inside the current handler without queueing it.
    fn schedule_inline(&mut self, msg: &Self::Msg, cx: &mut Context<'_, Self::Msg, Self::Record>) -> Result<()> {
        self.handle(msg, cx)
    }

    /// Whether executing `key` now is likely to be undone by a message not yet received.
    /// Only optimistic executors consult this.
    fn premature(&self, _key: &EventKey) -> bool {
        false
    }
}

/// Handle given to a running event body.
pub struct Context<'a, M, R> {
    key: EventKey,
    id: usize,
    seq: &'a mut u64,
    out: &'a mut Vec<(EventKey, M)>,
    records: &'a mut Vec<R>,
}

impl<'a, M: Message, R> Context<'a, M, R> {
    pub fn new(key: EventKey, id: usize, seq: &'a mut u64, out: &'a mut Vec<(EventKey, M)>, records: &'a mut Vec<R>) -> Self {
        Self { key, id, seq, out, records }
    }

    pub fn now(&self) -> SimTime {
        self.key.tick
    }

    pub fn key(&self) -> &EventKey {
        &self.key
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn schedule(&mut self, at: SimTime, dest: usize, msg: M) -> Result<EventKey> {
        if at < self.key.tick {
            return Err(Error::ScheduleInPast { at, now: self.key.tick });
        }
        let depth = if at == self.key.tick { self.key.depth + 1 } else { 0 };
        *self.seq += 1;
        let key = EventKey { tick: at, depth, rank: msg.rank(), dest, source: self.id, seq: *self.seq };
        self.out.push((key, msg));
        Ok(key)
    }

    pub fn emit(&mut self, record: R) {
        self.records.push(record);
    }
}

/// Pending events in key order.
#[derive(Debug, Clone)]
pub struct EventQueue<M> {
    pending: BTreeMap<EventKey, M>,
    last_tick: SimTime,
}

impl<M> Default for EventQueue<M> {
    fn default() -> Self {
        Self { pending: BTreeMap::new(), last_tick: 0 }
    }
}

impl<M> EventQueue<M> {
    pub fn push(&mut self, key: EventKey, msg: M) -> Result<()> {
        if key.tick < self.last_tick {
            return Err(Error::ScheduleInPast { at: key.tick, now: self.last_tick });
        }
        if self.pending.insert(key, msg).is_some() {
            return Err(Error::Logic { submesh: key.dest, detail: format!("duplicate event key {key:?}") });
        }
        Ok(())
    }

    pub fn pop(&mut self) -> Option<(EventKey, M)> {
        let (key, msg) = self.pending.pop_first()?;
        debug_assert!(key.tick >= self.last_tick);
        self.last_tick = key.tick;
        Some((key, msg))
    }

    pub fn peek(&self) -> Option<(&EventKey, &M)> {
        self.pending.first_key_value()
    }

    pub fn remove(&mut self, key: &EventKey) -> Option<M> {
        self.pending.remove(key)
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EventKey, &M)> {
        self.pending.iter()
    }

    /// Pending events at exactly `tick`.
    pub fn at_tick(&self, tick: SimTime) -> impl Iterator<Item = (&EventKey, &M)> {
        let lo = EventKey { tick, depth: 0, rank: 0, dest: 0, source: 0, seq: 0 };
        self.pending.range(lo..).take_while(move |(k, _)| k.tick == tick)
    }
}

/// Observer hooks for the sequential executor.
pub trait Monitor<A: Actor> {
    fn started(&mut self, _actors: &[A], _queue: &EventQueue<A::Msg>) {}
    fn before(&mut self, _key: &EventKey, _msg: &A::Msg, _actors: &[A], _queue: &EventQueue<A::Msg>) {}
    fn after(&mut self, _key: &EventKey, _msg: &A::Msg, _actors: &[A], _queue: &EventQueue<A::Msg>) {}
    fn tick_end(&mut self, _tick: SimTime, _actors: &[A], _queue: &EventQueue<A::Msg>) {}
}

pub struct NoMonitor;

impl<A: Actor> Monitor<A> for NoMonitor {}

impl<A: Actor, M1: Monitor<A>, M2: Monitor<A>> Monitor<A> for (M1, M2) {
    fn started(&mut self, actors: &[A], queue: &EventQueue<A::Msg>) {
        self.0.started(actors, queue);
        self.1.started(actors, queue);
    }
    fn before(&mut self, key: &EventKey, msg: &A::Msg, actors: &[A], queue: &EventQueue<A::Msg>) {
        self.0.before(key, msg, actors, queue);
        self.1.before(key, msg, actors, queue);
    }
    fn after(&mut self, key: &EventKey, msg: &A::Msg, actors: &[A], queue: &EventQueue<A::Msg>) {
        self.0.after(key, msg, actors, queue);
        self.1.after(key, msg, actors, queue);
    }
    fn tick_end(&mut self, tick: SimTime, actors: &[A], queue: &EventQueue<A::Msg>) {
        self.0.tick_end(tick, actors, queue);
        self.1.tick_end(tick, actors, queue);
    }
}

#[derive(Debug, Clone)]
pub struct Outcome<A: Actor> {
    pub actors: Vec<A>,
    pub records: Vec<A::Record>,
    pub processed: Vec<EventKey>,
    pub max_events_per_tick: usize,
}

pub struct Sequential<A: Actor> {
    actors: Vec<A>,
    seqs: Vec<u64>,
    queue: EventQueue<A::Msg>,
    records: Vec<A::Record>,
    processed: Vec<EventKey>,
    tick_bound: Option<usize>,
    started: bool,
}

impl<A: Actor> Sequential<A> {
    pub fn new(actors: Vec<A>) -> Self {
        let n = actors.len();
        Self {
            actors,
            seqs: vec![0; n],
            queue: EventQueue::default(),
            records: Vec::new(),
            processed: Vec::new(),
            tick_bound: None,
            started: false,
        }
    }

    /// Abort when more than `bound` queued events execute at a single tick.
    pub fn with_tick_bound(mut self, bound: usize) -> Self {
        self.tick_bound = Some(bound);
        self
    }

    pub fn actors(&self) -> &[A] {
        &self.actors
    }

    pub fn queue(&self) -> &EventQueue<A::Msg> {
        &self.queue
    }

    pub fn queue_mut(&mut self) -> &mut EventQueue<A::Msg> {
        &mut self.queue
    }

    pub fn start(&mut self) -> Result<()> {
        let mut out = Vec::new();
        for id in 0..self.actors.len() {
            let mut cx = Context::new(EventKey::origin(id), id, &mut self.seqs[id], &mut out, &mut self.records);
            self.actors[id].start(&mut cx)?;
        }
        for (key, msg) in out {
            self.queue.push(key, msg)?;
        }
        self.started = true;
        Ok(())
    }

    /// Runs until the queue drains or every pending event lies beyond `t_end`.
    pub fn run(mut self, t_end: SimTime, monitor: &mut impl Monitor<A>) -> Result<Outcome<A>> {
        if !self.started {
            self.start()?;
        }
        monitor.started(&self.actors, &self.queue);
        let mut current: Option<SimTime> = None;
        let mut count = 0usize;
        let mut max_count = 0usize;
        let mut out = Vec::new();
        while let Some((key, _)) = self.queue.peek() {
            if key.tick > t_end {
                break;
            }
            let (key, msg) = self.queue.pop().expect("peeked");
            if current != Some(key.tick) {
                if let Some(t) = current {
                    monitor.tick_end(t, &self.actors, &self.queue);
                }
                current = Some(key.tick);
                count = 0;
            }
            count += 1;
            max_count = max_count.max(count);
            if let Some(bound) = self.tick_bound {
                if count > bound {
                    return Err(Error::Livelock { tick: key.tick, count, bound });
                }
            }
            monitor.before(&key, &msg, &self.actors, &self.queue);
            let id = key.dest;
            let mut cx = Context::new(key, id, &mut self.seqs[id], &mut out, &mut self.records);
            self.actors[id].handle(&msg, &mut cx)?;
            for (k, m) in out.drain(..) {
                self.queue.push(k, m)?;
            }
            self.processed.push(key);
            monitor.after(&key, &msg, &self.actors, &self.queue);
        }
        if let Some(t) = current {
            monitor.tick_end(t, &self.actors, &self.queue);
        }
        Ok(Outcome { actors: self.actors, records: self.records, processed: self.processed, max_events_per_tick: max_count })
    }
}
