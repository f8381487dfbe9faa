use super::{LtsMsg, PushFlux, Side, SubmeshState, UpdateRecord, RANK_PUSH_FLUX};
use crate::des::{Actor, Context, EventKey};
use crate::error::{Error, Result};

type Cx<'a, 'b> = &'a mut Context<'b, LtsMsg, UpdateRecord>;

impl SubmeshState {
    fn maybe_schedule(&mut self, cx: Cx<'_, '_>) -> Result<()> {
        if self.ceil > cx.now() && !self.awaiting_any() && self.pending.insert(self.ceil) {
            cx.schedule(self.ceil, self.id, LtsMsg::Update { forced: false })?;
        }
        Ok(())
    }

    pub(crate) fn handle_update(&mut self, forced: bool, cx: Cx<'_, '_>) -> Result<()> {
        let tau = cx.now();
        if !forced {
            self.pending.remove(&tau);
        }
        if tau != self.ceil && !forced {
            return Ok(());
        }
        if tau == self.floor {
            return Ok(());
        }
        let record = self.advance(tau, forced)?;
        cx.emit(record);
        self.ceil = self.compute_t_next()?;

        let synced_step = if self.params.force_ratio { Some(self.synced_raw_step()? - tau) } else { None };
        let mut sends = Vec::with_capacity(2);
        for side in Side::BOTH {
            let Some(n) = self.interface(side) else { continue };
            let (n_floor, t_sync) = (n.floor, n.t_sync);
            let bdry = self.compute_t_next_bdry(side)?;
            let lagging = synced_step.is_some_and(|s| t_sync < tau && bdry > tau && s >= 2 * (bdry - tau));
            let force = n_floor > t_sync || bdry <= tau || lagging;
            if force {
                let await_replies = self.params.await_replies;
                let n = self.interface_mut(side).expect("interface checked above");
                n.t_sync = tau;
                if await_replies && n.floor < tau {
                    n.awaiting = true;
                }
                self.update_k_bdry(side)?;
            }
            sends.push((side, force));
        }
        if sends.iter().any(|&(_, f)| f) {
            self.ceil = self.compute_t_next()?;
        }
        let next_hint = self.ceil.max(tau + 1);
        for (side, force) in sends {
            let neighbor = self.interface(side).expect("interface checked above").neighbor;
            let msg = PushFlux { side: side.opposite(), state: self.boundary_cell(side), floor: tau, forced: force, next_hint };
            cx.schedule(tau, neighbor, LtsMsg::PushFlux(msg))?;
        }
        self.maybe_schedule(cx)
    }

    pub(crate) fn handle_push_flux(&mut self, msg: &PushFlux, cx: Cx<'_, '_>) -> Result<()> {
        let tau = cx.now();
        if msg.floor != tau {
            return Err(Error::Logic { submesh: self.id, detail: format!("push flux stamped {} delivered at {tau}", msg.floor) });
        }
        self.accumulate(msg.side, tau)?;
        let floor = self.floor;
        let id = self.id;
        let n = self
            .interface_mut(msg.side)
            .ok_or_else(|| Error::Logic { submesh: id, detail: format!("push flux for missing {:?} interface", msg.side) })?;
        n.u = msg.state;
        n.floor = tau;
        n.next_hint = msg.next_hint;
        n.awaiting = false;
        if n.floor == floor {
            n.t_sync = tau;
        }
        self.update_k_bdry(msg.side)?;
        self.ceil = self.compute_t_next()?;
        if msg.forced || self.ceil <= tau {
            self.schedule_inline(&LtsMsg::Update { forced: true }, cx)?;
        }
        self.maybe_schedule(cx)
    }
}

impl Actor for SubmeshState {
    type Msg = LtsMsg;
    type Record = UpdateRecord;

    fn start(&mut self, cx: Cx<'_, '_>) -> Result<()> {
        self.init_windows()?;
        self.ceil = self.compute_t_next()?;
        self.maybe_schedule(cx)
    }

    fn handle(&mut self, msg: &LtsMsg, cx: Cx<'_, '_>) -> Result<()> {
        match msg {
            LtsMsg::Update { forced } => self.handle_update(*forced, cx),
            LtsMsg::PushFlux(pf) => self.handle_push_flux(pf, cx),
        }
    }

    /// A neighbor announced its next update; anything ordered after the push flux
    /// it will send waits for it.
    fn premature(&self, key: &EventKey) -> bool {
        Side::BOTH.iter().filter_map(|&s| self.interface(s)).any(|n| {
            n.neighbor != key.source && {
                let expected = EventKey {
                    tick: n.next_hint,
                    depth: 1,
                    rank: RANK_PUSH_FLUX,
                    dest: self.id,
                    source: n.neighbor,
                    seq: 0,
                };
                *key > expected
            }
        })
    }
}
