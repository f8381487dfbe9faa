//! The per-tick state machine of a submesh.
//!
//! A submesh's state at tick `tau` is a row of six booleans:
//! `b1 = floor < tau`, `b2 = ceil > tau`, and for the left then right interface
//! `neighbor floor < tau` and `t_sync <= neighbor floor`. A submesh whose first push
//! flux of the tick arrives from the right is mirrored so that it arrives from the left.

use crate::des::{EventKey, EventQueue, Monitor, SimTime};
use crate::lts::{LtsMsg, Side, SubmeshState};

use super::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmState {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
}

impl FsmState {
    pub fn accepting(self) -> bool {
        use FsmState::*;
        matches!(self, A | B | C | G | H | J | K)
    }

    pub fn name(self) -> &'static str {
        use FsmState::*;
        match self {
            A => "q_a",
            B => "q_b",
            C => "q_c",
            D => "q_d",
            E => "q_e",
            F => "q_f",
            G => "q_g",
            H => "q_h",
            I => "q_i",
            J => "q_j",
            K => "q_k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    Update,
    LeftPush,
    RightPush,
}

/// Row lookup; `None` when no row matches.
pub fn classify_state(b: [bool; 6]) -> Option<FsmState> {
    use FsmState::*;
    let [b1, b2, b3, b4, b5, b6] = b;
    Some(match (b1, b3, b4, b5, b6) {
        (true, true, true, true, true) => {
            if b2 {
                A
            } else {
                B
            }
        }
        (false, true, true, true, true) if b2 => C,
        (false, true, false, true, true) => D,
        (false, true, true, true, false) => E,
        (false, true, false, true, false) => F,
        (true, false, true, true, true) if b2 => G,
        (false, false, true, true, true) if b2 => H,
        (false, false, true, true, false) => I,
        (true, false, true, false, true) if b2 => J,
        (false, false, true, false, true) if b2 => K,
        _ => return None,
    })
}

/// Whether `from --via--> to` is an edge of the transition diagram.
pub fn is_edge(from: FsmState, via: Transition, to: FsmState) -> bool {
    use FsmState::*;
    use Transition::*;
    match (from, via) {
        (A, LeftPush) => matches!(to, G | H | I),
        (B, Update) => matches!(to, C | D | E | F),
        (B, LeftPush) => matches!(to, H | I),
        (C | D, LeftPush) => to == H,
        (E | F, LeftPush) => to == I,
        (G, RightPush) => matches!(to, J | K),
        (H | I, RightPush) => to == K,
        _ => false,
    }
}

/// The six booleans of `s` at `tau`, mirrored on request. A side without a neighbor
/// behaves like a neighbor that never updates.
pub fn booleans(s: &SubmeshState, tau: SimTime, mirrored: bool) -> [bool; 6] {
    let side = |side: Side| match s.interface(side) {
        Some(n) => (n.floor < tau, n.t_sync <= n.floor),
        None => (true, true),
    };
    let (mut l, mut r) = (side(Side::Left), side(Side::Right));
    if mirrored {
        std::mem::swap(&mut l, &mut r);
    }
    // a submesh that reached the final time has nothing left to schedule
    let b2 = s.ceil > tau || s.floor >= s.params.t_end;
    [s.floor < tau, b2, l.0, l.1, r.0, r.1]
}

/// Records every observed transition and checks it against the diagram, and that
/// each tick ends with all submeshes in accepting states.
#[derive(Debug)]
pub struct FsmMonitor {
    tick: Option<SimTime>,
    mirrored: Vec<Option<bool>>,
    pre: Option<Option<FsmState>>,
    pub report: Report,
    pub transitions: u64,
    pub edges_seen: std::collections::BTreeSet<(&'static str, &'static str, &'static str)>,
}

impl Default for FsmMonitor {
    fn default() -> Self {
        Self {
            tick: None,
            mirrored: Vec::new(),
            pre: None,
            report: Report::new("fsm", true),
            transitions: 0,
            edges_seen: Default::default(),
        }
    }
}

impl FsmMonitor {
    fn classify(&self, s: &SubmeshState, tau: SimTime) -> Option<FsmState> {
        classify_state(booleans(s, tau, self.mirrored.get(s.id).copied().flatten().unwrap_or(false)))
    }
}

impl Monitor<SubmeshState> for FsmMonitor {
    fn started(&mut self, actors: &[SubmeshState], _queue: &EventQueue<LtsMsg>) {
        self.mirrored = vec![None; actors.len()];
    }

    fn before(&mut self, key: &EventKey, msg: &LtsMsg, actors: &[SubmeshState], _queue: &EventQueue<LtsMsg>) {
        if self.tick != Some(key.tick) {
            self.tick = Some(key.tick);
            self.mirrored.iter_mut().for_each(|m| *m = None);
        }
        if let LtsMsg::PushFlux(pf) = msg {
            self.mirrored[key.dest].get_or_insert(pf.side == Side::Right);
        }
        self.pre = Some(self.classify(&actors[key.dest], key.tick));
    }

    fn after(&mut self, key: &EventKey, msg: &LtsMsg, actors: &[SubmeshState], _queue: &EventQueue<LtsMsg>) {
        let s = &actors[key.dest];
        let pre = self.pre.take().flatten();
        let post = self.classify(s, key.tick);
        let mirrored = self.mirrored[key.dest].unwrap_or(false);
        let via = match msg {
            LtsMsg::Update { .. } => Transition::Update,
            LtsMsg::PushFlux(pf) if (pf.side == Side::Left) != mirrored => Transition::LeftPush,
            LtsMsg::PushFlux(_) => Transition::RightPush,
        };
        self.transitions += 1;
        match (pre, post) {
            (Some(a), Some(b)) if a == b && via == Transition::Update => {}
            (Some(a), Some(b)) if is_edge(a, via, b) => {
                self.edges_seen.insert((a.name(), via_name(via), b.name()));
            }
            (a, b) => {
                let name = |x: Option<FsmState>| x.map_or("unreachable", FsmState::name);
                self.report.fail(key.tick, key.dest, format!("{} --{}--> {} is not an edge", name(a), via_name(via), name(b)));
            }
        }
    }

    fn tick_end(&mut self, tick: SimTime, actors: &[SubmeshState], _queue: &EventQueue<LtsMsg>) {
        for s in actors {
            match self.classify(s, tick) {
                Some(q) if q.accepting() => {}
                q => {
                    let name = q.map_or("unreachable", FsmState::name);
                    self.report.fail(tick, s.id, format!("tick ends in {name}"));
                }
            }
        }
    }
}

fn via_name(via: Transition) -> &'static str {
    match via {
        Transition::Update => "update",
        Transition::LeftPush => "left push flux",
        Transition::RightPush => "right push flux",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FsmState::*;

    #[test]
    fn table_rows() {
        let t = true;
        let f = false;
        assert_eq!(classify_state([t, t, t, t, t, t]), Some(A));
        assert_eq!(classify_state([t, f, t, t, t, t]), Some(B));
        assert_eq!(classify_state([f, t, t, t, t, t]), Some(C));
        assert_eq!(classify_state([f, f, t, f, t, t]), Some(D));
        assert_eq!(classify_state([f, t, t, t, t, f]), Some(E));
        assert_eq!(classify_state([f, f, t, f, t, f]), Some(F));
        assert_eq!(classify_state([t, t, f, t, t, t]), Some(G));
        assert_eq!(classify_state([f, t, f, t, t, t]), Some(H));
        assert_eq!(classify_state([f, f, f, t, t, f]), Some(I));
        assert_eq!(classify_state([t, t, f, t, f, t]), Some(J));
        assert_eq!(classify_state([f, t, f, t, f, t]), Some(K));
        assert_eq!(classify_state([f, f, t, t, t, t]), None);
        assert_eq!(classify_state([t, t, t, t, f, t]), None);
    }

    #[test]
    fn diagram_edges() {
        assert!(is_edge(B, Transition::Update, C));
        assert!(is_edge(B, Transition::Update, F));
        assert!(is_edge(C, Transition::LeftPush, H));
        assert!(is_edge(G, Transition::RightPush, J));
        assert!(is_edge(G, Transition::RightPush, K));
        assert!(!is_edge(C, Transition::RightPush, H));
        assert!(!is_edge(A, Transition::Update, C));
        assert!(!is_edge(H, Transition::LeftPush, K));
    }

    #[test]
    fn every_row_is_classified_once() {
        let mut hits = std::collections::HashMap::new();
        for bits in 0u8..64 {
            let b = std::array::from_fn(|i| bits >> (5 - i) & 1 == 1);
            if let Some(q) = classify_state(b) {
                *hits.entry(q).or_insert(0) += 1;
            }
        }
        // rows that leave b2 open match two bit patterns
        for q in [A, B, C, G, H, J, K] {
            assert_eq!(hits[&q], 1, "{q:?}");
        }
        for q in [D, E, F, I] {
            assert_eq!(hits[&q], 2, "{q:?}");
        }
    }
}
