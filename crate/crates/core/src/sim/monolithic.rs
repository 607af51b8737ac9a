//! Reference execution with every rank on one device.
//!
//! Communication becomes bookkeeping: teledata moves a qubit between slots,
//! telegate and expose lend a slot an alias of the owner's qubit until it is
//! released. The result is the state an ideal, communication-free machine
//! would reach, against which lowered programs are compared.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::GlobalState;
use super::{Blocked, SimConfig, SimError};
use crate::ir::Program;
use crate::lowering::{
    analyze, CollectiveKind, CommOp, Event, LowerOptions, Node, Plan, QubitId, Scheme, Shape,
};
use crate::topology::Topology;

#[derive(Debug, Clone)]
pub struct MonoResult {
    pub state: GlobalState,
    /// User bits per rank.
    pub bits: BTreeMap<u32, BTreeMap<u32, bool>>,
    pub final_bindings: BTreeMap<(u32, u32), QubitId>,
}

impl MonoResult {
    pub fn qubit(&self, rank: u32, slot: u32) -> QubitId {
        self.final_bindings
            .get(&(rank, slot))
            .copied()
            .unwrap_or(QubitId::Data { rank, slot })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Releases,
    Awaits,
    Event,
}

struct RankState {
    pc: usize,
    stage: Stage,
    base: BTreeMap<u32, QubitId>,
    refs: BTreeMap<u32, Vec<QubitId>>,
}

impl RankState {
    fn lookup(&self, rank: u32, slot: u32) -> QubitId {
        if let Some(q) = self.refs.get(&slot).and_then(|v| v.last()) {
            return *q;
        }
        self.base
            .get(&slot)
            .copied()
            .unwrap_or(QubitId::Data { rank, slot })
    }
}

struct Mono<'a> {
    plan: &'a Plan,
    state: GlobalState,
    rng: ChaCha8Rng,
    ranks: Vec<RankState>,
    bits: BTreeMap<u32, BTreeMap<u32, bool>>,
    /// Slots each rank borrowed in each session.
    lent: BTreeMap<(u32, u32), Vec<u32>>,
    released: BTreeSet<(u32, u32)>,
    holders: BTreeMap<u32, BTreeSet<u32>>,
    arrived: BTreeMap<u32, BTreeSet<u32>>,
    next_fresh: u32,
}

impl Mono<'_> {
    fn at(&self, rank: u32, slot: u32) -> QubitId {
        self.ranks[rank as usize].lookup(rank, slot)
    }

    /// Rebind `to`'s slot to `from`'s qubit and give `from` a fresh one.
    fn teleport(&mut self, from: (u32, u32), to: (u32, u32)) {
        let q = self.at(from.0, from.1);
        let fresh = self.fresh();
        self.ranks[from.0 as usize].base.insert(from.1, fresh);
        self.ranks[to.0 as usize].base.insert(to.1, q);
    }

    fn lend(&mut self, session: u32, from: (u32, u32), to: (u32, u32)) {
        let q = self.at(from.0, from.1);
        self.ranks[to.0 as usize].refs.entry(to.1).or_default().push(q);
        self.lent.entry((session, to.0)).or_default().push(to.1);
    }

    fn swap(&mut self, rank: u32, a: u32, b: u32) {
        let (qa, qb) = (self.at(rank, a), self.at(rank, b));
        let r = &mut self.ranks[rank as usize];
        r.base.insert(a, qb);
        r.base.insert(b, qa);
    }

    fn op_of(&self, rank: u32, session: u32) -> &CommOp {
        let s = &self.plan.sessions[session as usize];
        &self.plan.event(rank, s).expect("participant").op
    }

    fn run_session(&mut self, id: u32) -> Result<(), SimError> {
        let s = &self.plan.sessions[id as usize];
        let ev = |r: u32| self.plan.event(r, s).map(|e| e.op.clone());
        match &s.shape {
            Shape::P2p { src, dst, .. } => {
                let (Some(send), Some(recv)) = (ev(*src), ev(*dst)) else {
                    return Err(SimError::Unmatched { name: s.name.clone() });
                };
                match (send, recv, s.scheme) {
                    (CommOp::MSend { slots, .. }, CommOp::MRecv { bits, .. }, _) => {
                        for (slot, bit) in slots.into_iter().zip(bits) {
                            let q = self.at(*src, slot);
                            let v = self.state.measure(q, &mut self.rng)?;
                            self.bits.entry(*dst).or_default().insert(bit, v);
                        }
                    }
                    (CommOp::QSend { slots: a, .. }, CommOp::QRecv { slots: b, .. }, scheme) => {
                        for (x, y) in a.into_iter().zip(b) {
                            if scheme == Scheme::Telegate {
                                self.lend(id, (*src, x), (*dst, y));
                            } else {
                                self.teleport((*src, x), (*dst, y));
                            }
                        }
                    }
                    _ => unreachable!("matched endpoints agree on kind"),
                }
            }
            Shape::Collective { kind, root } => {
                let root = *root;
                if s.ends.len() < s.comm.members.len() {
                    return Err(SimError::Unmatched { name: s.name.clone() });
                }
                let w = s.width;
                let telegate = s.scheme == Scheme::Telegate;
                let members = s.comm.members.clone();
                let me = s.comm.index_of(root).expect("root is a member");
                let send_of = |m: &Self, r: u32| match m.op_of(r, id) {
                    CommOp::Collective { send, .. } => send.clone(),
                    _ => unreachable!(),
                };
                let recv_of = |m: &Self, r: u32| match m.op_of(r, id) {
                    CommOp::Collective { recv, .. } => recv.clone(),
                    _ => unreachable!(),
                };
                let peers: Vec<u32> = members.iter().copied().filter(|&m| m != root).collect();
                let chunk = |v: &[u32], i: u32| v[(i * w) as usize..((i + 1) * w) as usize].to_vec();
                match kind {
                    CollectiveKind::Scatter => {
                        let send = send_of(self, root);
                        for &p in &peers {
                            let c = chunk(&send, s.comm.index_of(p).expect("member"));
                            for (x, y) in c.into_iter().zip(recv_of(self, p)) {
                                if telegate {
                                    self.lend(id, (root, x), (p, y));
                                } else {
                                    self.teleport((root, x), (p, y));
                                }
                            }
                        }
                        for (a, b) in chunk(&send, me).into_iter().zip(recv_of(self, root)) {
                            if a != b {
                                self.swap(root, a, b);
                            }
                        }
                    }
                    CollectiveKind::Gather => {
                        let recv = recv_of(self, root);
                        for (a, b) in send_of(self, root).into_iter().zip(chunk(&recv, me)) {
                            if a != b {
                                self.swap(root, a, b);
                            }
                        }
                        for &p in &peers {
                            let c = chunk(&recv, s.comm.index_of(p).expect("member"));
                            for (x, y) in send_of(self, p).into_iter().zip(c) {
                                if telegate {
                                    self.lend(id, (p, x), (root, y));
                                } else {
                                    self.teleport((p, x), (root, y));
                                }
                            }
                        }
                    }
                    CollectiveKind::Reduce(fold) => {
                        let gate = fold.gate();
                        let acc = recv_of(self, root);
                        for (a, b) in send_of(self, root).into_iter().zip(acc.clone()) {
                            if a != b {
                                let qs = [self.at(root, a), self.at(root, b)];
                                self.state.apply(gate, &qs)?;
                            }
                        }
                        for &p in &peers {
                            for (x, &a) in send_of(self, p).into_iter().zip(&acc) {
                                let q = self.at(p, x);
                                if !telegate {
                                    // The moved qubit stays behind at the root, unbound.
                                    let f = self.fresh();
                                    self.ranks[p as usize].base.insert(x, f);
                                }
                                let t = self.at(root, a);
                                self.state.apply(gate, &[q, t])?;
                            }
                        }
                    }
                }
            }
            Shape::Expose { root } => {
                if s.is_noop() {
                    return Ok(());
                }
                let root = *root;
                let shared = match self.op_of(root, id) {
                    CommOp::Expose { slots, .. } => slots.clone(),
                    _ => unreachable!(),
                };
                for p in s.peers() {
                    let targets = match self.op_of(p, id) {
                        CommOp::Expose { slots, .. } => slots.clone(),
                        _ => unreachable!(),
                    };
                    for (&x, y) in shared.iter().zip(targets) {
                        self.lend(id, (root, x), (p, y));
                    }
                }
            }
        }
        Ok(())
    }

    fn fresh(&mut self) -> QubitId {
        let fresh = QubitId::Comm(self.next_fresh);
        self.next_fresh += 1;
        self.state.fresh(fresh);
        fresh
    }

    /// Advance `rank` as far as it can go. Returns whether anything happened.
    fn advance(&mut self, rank: u32) -> Result<bool, SimError> {
        let r = rank as usize;
        let events = &self.plan.events[r];
        let mut moved = false;
        loop {
            let idx = self.ranks[r].pc;
            match self.ranks[r].stage {
                Stage::Releases => {
                    for &s in self.plan.releases[r].get(&idx).into_iter().flatten() {
                        for slot in self.lent.remove(&(s, rank)).unwrap_or_default() {
                            self.ranks[r].refs.get_mut(&slot).and_then(|v| v.pop());
                        }
                        self.released.insert((s, rank));
                    }
                    self.ranks[r].stage = Stage::Awaits;
                }
                Stage::Awaits => {
                    let ready = self.plan.awaits[r].get(&idx).into_iter().flatten().all(|s| {
                        self.holders
                            .get(s)
                            .is_none_or(|hs| hs.iter().all(|h| self.released.contains(&(*s, *h))))
                    });
                    if !ready {
                        return Ok(moved);
                    }
                    self.ranks[r].stage = Stage::Event;
                }
                Stage::Event => {
                    let Some(e) = events.get(idx) else {
                        return Ok(moved);
                    };
                    match e {
                        Event::Gate { gate, slots } => {
                            let qs: Vec<QubitId> = slots.iter().map(|&s| self.at(rank, s)).collect();
                            self.state.apply(*gate, &qs)?;
                        }
                        Event::Measure { slot, bit } => {
                            let v = self.state.measure(self.at(rank, *slot), &mut self.rng)?;
                            self.bits.entry(rank).or_default().insert(*bit, v);
                        }
                        Event::Reset { slot } => self.state.reset(self.at(rank, *slot), &mut self.rng)?,
                        Event::Finalize => {}
                        Event::Comm(_) => {
                            let s = self.plan.session_of[r][&idx];
                            let arrived = self.arrived.entry(s).or_default();
                            arrived.insert(rank);
                            let session = &self.plan.sessions[s as usize];
                            if arrived.len() < session.ends.len() {
                                return Ok(moved);
                            }
                            self.run_session(s)?;
                            for &p in session.ends.keys() {
                                let st = &mut self.ranks[p as usize];
                                st.pc += 1;
                                st.stage = Stage::Releases;
                            }
                            return Ok(true);
                        }
                    }
                    self.ranks[r].pc += 1;
                    self.ranks[r].stage = Stage::Releases;
                }
            }
            moved = true;
        }
    }

    fn finished(&self, rank: u32) -> bool {
        let st = &self.ranks[rank as usize];
        st.pc >= self.plan.events[rank as usize].len() && st.stage == Stage::Event
    }
}

/// Run `program` as one device using the schemes lowering would pick.
pub fn simulate_monolithic_with(
    program: &Program,
    topology: Topology,
    opts: &LowerOptions,
    cfg: &SimConfig,
) -> Result<MonoResult, SimError> {
    let plan = analyze(program, topology, opts)?;
    let mut holders: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (r, rel) in plan.releases.iter().enumerate() {
        for s in rel.values().flatten() {
            holders.entry(*s).or_default().insert(r as u32);
        }
    }
    let mut m = Mono {
        plan: &plan,
        state: GlobalState::new(cfg.cap, cfg.initial.clone()),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        ranks: (0..plan.world_size)
            .map(|_| RankState {
                pc: 0,
                stage: Stage::Releases,
                base: BTreeMap::new(),
                refs: BTreeMap::new(),
            })
            .collect(),
        bits: BTreeMap::new(),
        lent: BTreeMap::new(),
        released: BTreeSet::new(),
        holders,
        arrived: BTreeMap::new(),
        next_fresh: 0,
    };
    loop {
        let mut progressed = false;
        for rank in 0..plan.world_size {
            progressed |= m.advance(rank)?;
        }
        let stuck: Vec<u32> = (0..plan.world_size).filter(|&r| !m.finished(r)).collect();
        if stuck.is_empty() {
            break;
        }
        if !progressed {
            let blocked = stuck
                .into_iter()
                .map(|r| Blocked {
                    node: Node::Rank(r),
                    op: "session",
                    peer: Node::Rank(r),
                })
                .collect();
            return Err(SimError::Deadlock { blocked });
        }
    }
    let mut final_bindings = BTreeMap::new();
    for rank in 0..plan.world_size {
        for slot in 0..plan.num_qubits {
            final_bindings.insert((rank, slot), m.at(rank, slot));
        }
    }
    Ok(MonoResult {
        state: m.state,
        bits: m.bits,
        final_bindings,
    })
}

/// Monolithic run with default lowering choices on a direct topology.
pub fn simulate_monolithic(program: &Program, world_size: u32, cfg: &SimConfig) -> Result<MonoResult, SimError> {
    simulate_monolithic_with(program, Topology::direct(world_size), &LowerOptions::default(), cfg)
}
