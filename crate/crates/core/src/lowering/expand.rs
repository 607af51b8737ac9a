//! Expansion of sessions into primitive ops.
//!
//! Each session is expanded once into per-node fragments whose data-qubit
//! operands are still slot placeholders. A walk over every rank's events then
//! splices the fragments in and resolves placeholders against the rank's
//! current slot bindings.

use std::collections::BTreeMap;

use super::plan::{Plan, Scheme, Session, Shape};
use super::primitive::{Bit, Node, Pauli, PrimitiveOp, QubitId};
use super::unroll::{CollectiveKind, CommOp, Event};
use super::{ExposeScheme, LoweredProgram, SessionInfo};
use crate::ir::Gate;
use crate::topology::{per_epoch_cost, CostProtocol, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq)]
enum QRef {
    Slot(u32),
    Fixed(QubitId),
    /// Qubit a slot was bound to when the pin was taken.
    Pinned(u32),
}

#[derive(Debug, Clone)]
enum Tmpl {
    Op(PrimitiveOp<QRef>),
    Bind { slot: u32, qubit: QubitId },
    Push { slot: u32, qubit: QubitId },
    Pop { slot: u32 },
    Swap { a: u32, b: u32 },
    Pin { pin: u32, slot: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Part {
    Start(u32),
    Release(u32),
    Await(u32),
    Relay,
}

#[derive(Debug, Default)]
struct Fragments {
    parts: BTreeMap<Part, Vec<Tmpl>>,
}

impl Fragments {
    fn take(&mut self, p: Part) -> Vec<Tmpl> {
        self.parts.remove(&p).unwrap_or_default()
    }
}

struct Gen<'a> {
    s: &'a Session,
    plan: &'a Plan,
    next_comm: &'a mut u32,
    bits: BTreeMap<Node, u32>,
    pins: u32,
    f: Fragments,
}

fn fixed(qs: &[QubitId]) -> Vec<QRef> {
    qs.iter().map(|&q| QRef::Fixed(q)).collect()
}

fn slots(ss: &[u32]) -> Vec<QRef> {
    ss.iter().map(|&s| QRef::Slot(s)).collect()
}

impl<'a> Gen<'a> {
    fn node(&self, p: Part) -> Node {
        match p {
            Part::Start(r) | Part::Release(r) | Part::Await(r) => Node::Rank(r),
            Part::Relay => Node::Relay(self.s.id),
        }
    }

    fn comm(&mut self) -> QubitId {
        let q = QubitId::Comm(*self.next_comm);
        *self.next_comm += 1;
        q
    }

    fn bit(&mut self, n: Node) -> Bit {
        let c = self.bits.entry(n).or_insert(0);
        *c += 1;
        Bit::Proto(*c - 1)
    }

    fn bits(&mut self, n: Node, count: usize) -> Vec<Bit> {
        (0..count).map(|_| self.bit(n)).collect()
    }

    /// Freeze the current binding of each slot so later rebinding does not move it.
    fn pin(&mut self, p: Part, qs: &[QRef]) -> Vec<QRef> {
        qs.iter()
            .map(|&q| match q {
                QRef::Slot(slot) => {
                    let pin = self.pins;
                    self.pins += 1;
                    self.push(p, Tmpl::Pin { pin, slot });
                    QRef::Pinned(pin)
                }
                other => other,
            })
            .collect()
    }

    fn push(&mut self, p: Part, t: Tmpl) {
        self.f.parts.entry(p).or_default().push(t);
    }

    fn op(&mut self, p: Part, op: PrimitiveOp<QRef>) {
        self.push(p, Tmpl::Op(op));
    }

    fn gate(&mut self, p: Part, gate: Gate, qubits: Vec<QRef>) {
        self.op(p, PrimitiveOp::Gate { gate, qubits });
    }

    fn sync(&mut self, p: Part) {
        let id = self.s.id;
        self.op(p, PrimitiveOp::SyncPoint { id });
    }

    fn send(&mut self, from: Part, to: Part, bits: Vec<Bit>) {
        let (dest, tag) = (self.node(to), self.s.id);
        self.op(from, PrimitiveOp::CSend { bits, dest, tag });
    }

    fn recv(&mut self, at: Part, from: Part, bits: Vec<Bit>) {
        let (source, tag) = (self.node(from), self.s.id);
        self.op(at, PrimitiveOp::CRecv { bits, source, tag });
    }

    fn epr(&mut self, from: Part, to: Part) -> (QubitId, QubitId) {
        let (a, b) = (self.node(from), self.node(to));
        let swapped = self.plan.topology.kind == TopologyKind::ViaCommunicator
            && a.rank().is_some()
            && b.rank().is_some();
        let (relay, charge) = if swapped {
            (Some(Node::Relay(self.s.id)), 4)
        } else {
            (None, 2)
        };
        let (local, remote) = (self.comm(), self.comm());
        self.op(
            from,
            PrimitiveOp::AllocEpr {
                local: QRef::Fixed(local),
                remote,
                peer: b,
                relay,
                charge,
            },
        );
        (local, remote)
    }

    /// Move the states of `qs` from `from` to fresh qubits at `to`.
    fn teleport(&mut self, from: Part, to: Part, qs: &[QRef]) -> Vec<QubitId> {
        let (sn, dn) = (self.node(from), self.node(to));
        let mut out = Vec::new();
        let mut sent = Vec::new();
        for &q in qs {
            let (e1, e2) = self.epr(from, to);
            self.gate(from, Gate::Cnot, vec![q, QRef::Fixed(e1)]);
            self.gate(from, Gate::H, vec![q]);
            let (ma, me) = (self.bit(sn), self.bit(sn));
            self.op(from, PrimitiveOp::Measure { qubit: q, bit: ma });
            self.op(
                from,
                PrimitiveOp::Measure {
                    qubit: QRef::Fixed(e1),
                    bit: me,
                },
            );
            sent.extend([me, ma]);
            out.push(e2);
        }
        self.sync(from);
        self.send(from, to, sent);
        for &q in qs {
            self.op(from, PrimitiveOp::Reset { qubit: q });
        }
        let got = self.bits(dn, 2 * qs.len());
        self.recv(to, from, got.clone());
        for (i, &e2) in out.iter().enumerate() {
            for (gate, b) in [(Pauli::X, got[2 * i]), (Pauli::Z, got[2 * i + 1])] {
                self.op(
                    to,
                    PrimitiveOp::CondCorrection {
                        gate,
                        qubit: QRef::Fixed(e2),
                        bits: vec![b],
                    },
                );
            }
        }
        out
    }

    /// Give `to` a reference qubit for each of `qs`.
    fn cat_entangle(&mut self, from: Part, to: Part, qs: &[QRef]) -> Vec<QubitId> {
        let (sn, dn) = (self.node(from), self.node(to));
        let mut out = Vec::new();
        let mut sent = Vec::new();
        for &q in qs {
            let (e1, e2) = self.epr(from, to);
            self.gate(from, Gate::Cnot, vec![q, QRef::Fixed(e1)]);
            let m = self.bit(sn);
            self.op(
                from,
                PrimitiveOp::Measure {
                    qubit: QRef::Fixed(e1),
                    bit: m,
                },
            );
            sent.push(m);
            out.push(e2);
        }
        self.sync(from);
        self.send(from, to, sent);
        let got = self.bits(dn, qs.len());
        self.recv(to, from, got.clone());
        for (&e2, &b) in out.iter().zip(&got) {
            self.op(
                to,
                PrimitiveOp::CondCorrection {
                    gate: Pauli::X,
                    qubit: QRef::Fixed(e2),
                    bits: vec![b],
                },
            );
        }
        out
    }

    /// Retire references `refs` held at `holder`, correcting `owned` at `owner`.
    fn cat_disentangle(&mut self, holder: Part, owner: Part, refs: &[QubitId], owned: &[QRef]) {
        let (hn, on) = (self.node(holder), self.node(owner));
        let mut sent = Vec::new();
        for &r in refs {
            self.gate(holder, Gate::H, vec![QRef::Fixed(r)]);
            let m = self.bit(hn);
            self.op(
                holder,
                PrimitiveOp::Measure {
                    qubit: QRef::Fixed(r),
                    bit: m,
                },
            );
            sent.push(m);
        }
        self.sync(holder);
        self.send(holder, owner, sent);
        let got = self.bits(on, refs.len());
        self.recv(owner, holder, got.clone());
        for (&q, &b) in owned.iter().zip(&got) {
            self.op(
                owner,
                PrimitiveOp::CondCorrection {
                    gate: Pauli::Z,
                    qubit: q,
                    bits: vec![b],
                },
            );
        }
    }

    /// Slots of `rank`'s event; placeholders when the rank never arrived.
    fn event_slots(&self, rank: u32, f: impl Fn(&CommOp) -> Vec<u32>) -> Vec<u32> {
        match self.plan.event(rank, self.s) {
            Some(e) => f(&e.op),
            None => (0..self.s.width).collect(),
        }
    }

    fn generate(mut self) -> Fragments {
        let s = self.s;
        match (&s.shape, s.scheme) {
            (Shape::P2p { src, dst, .. }, scheme) => self.p2p(*src, *dst, scheme),
            (Shape::Collective { kind, root }, scheme) => self.collective(*kind, *root, scheme),
            (Shape::Expose { root }, Scheme::Expose(x)) => {
                if !s.is_noop() {
                    self.expose(*root, x)
                }
            }
            (Shape::Expose { .. }, _) => unreachable!("expose sessions use an expose scheme"),
        }
        self.f
    }

    fn p2p(&mut self, src: u32, dst: u32, scheme: Scheme) {
        let (from, to) = (Part::Start(src), Part::Start(dst));
        let sent = self.event_slots(src, |op| match op {
            CommOp::QSend { slots, .. } | CommOp::MSend { slots, .. } => slots.clone(),
            _ => unreachable!(),
        });
        match scheme {
            Scheme::Classical => {
                let bits_into = self.event_slots(dst, |op| match op {
                    CommOp::MRecv { bits, .. } => bits.clone(),
                    _ => unreachable!(),
                });
                let sn = self.node(from);
                let mut ms = Vec::new();
                for &q in &sent {
                    let m = self.bit(sn);
                    self.op(
                        from,
                        PrimitiveOp::Measure {
                            qubit: QRef::Slot(q),
                            bit: m,
                        },
                    );
                    ms.push(m);
                }
                self.sync(from);
                self.send(from, to, ms);
                self.recv(to, from, bits_into.iter().map(|&b| Bit::User(b)).collect());
            }
            Scheme::Teledata | Scheme::Telegate => {
                let recv = self.event_slots(dst, |op| match op {
                    CommOp::QRecv { slots, .. } => slots.clone(),
                    _ => unreachable!(),
                });
                if scheme == Scheme::Teledata {
                    let moved = self.teleport(from, to, &slots(&sent));
                    for (&slot, &qubit) in recv.iter().zip(&moved) {
                        self.push(to, Tmpl::Bind { slot, qubit });
                    }
                } else {
                    let refs = self.cat_entangle(from, to, &slots(&sent));
                    for (&slot, &qubit) in recv.iter().zip(&refs) {
                        self.push(to, Tmpl::Push { slot, qubit });
                    }
                    self.cat_disentangle(Part::Release(dst), Part::Await(src), &refs, &slots(&sent));
                    for &slot in &recv {
                        self.push(Part::Release(dst), Tmpl::Pop { slot });
                    }
                }
            }
            Scheme::Expose(_) => unreachable!(),
        }
    }

    fn collective(&mut self, kind: CollectiveKind, root: u32, scheme: Scheme) {
        let w = self.s.width as usize;
        let comm = self.s.comm.clone();
        let me = comm.index_of(root).expect("root is a member") as usize;
        let send_of = |g: &Self, r: u32| {
            g.event_slots(r, |op| match op {
                CommOp::Collective { send, .. } => send.clone(),
                _ => unreachable!(),
            })
        };
        let recv_of = |g: &Self, r: u32| {
            g.event_slots(r, |op| match op {
                CommOp::Collective { recv, .. } => recv.clone(),
                _ => unreachable!(),
            })
        };
        let peers = self.s.peers();
        let rp = Part::Start(root);
        let telegate = scheme == Scheme::Telegate;
        match kind {
            CollectiveKind::Scatter => {
                let send = match self.plan.event(root, self.s) {
                    Some(_) => send_of(self, root),
                    None => (0..(w * comm.members.len()) as u32).collect(),
                };
                let chunk = |idx: usize| send[idx * w..(idx + 1) * w].to_vec();
                for &p in &peers {
                    let idx = comm.index_of(p).expect("member") as usize;
                    let part = Part::Start(p);
                    let recv = recv_of(self, p);
                    let c = chunk(idx);
                    if telegate {
                        // The root's own swap may rebind these slots before the await.
                        let owned = self.pin(rp, &slots(&c));
                        let refs = self.cat_entangle(rp, part, &owned);
                        for (&slot, &qubit) in recv.iter().zip(&refs) {
                            self.push(part, Tmpl::Push { slot, qubit });
                        }
                        self.cat_disentangle(Part::Release(p), Part::Await(root), &refs, &owned);
                        for &slot in &recv {
                            self.push(Part::Release(p), Tmpl::Pop { slot });
                        }
                    } else {
                        let moved = self.teleport(rp, part, &slots(&c));
                        for (&slot, &qubit) in recv.iter().zip(&moved) {
                            self.push(part, Tmpl::Bind { slot, qubit });
                        }
                    }
                }
                let own = recv_of(self, root);
                for (a, b) in chunk(me).into_iter().zip(own) {
                    if a != b {
                        self.push(rp, Tmpl::Swap { a, b });
                    }
                }
            }
            CollectiveKind::Gather => {
                let recv = match self.plan.event(root, self.s) {
                    Some(_) => recv_of(self, root),
                    None => (0..(w * comm.members.len()) as u32).collect(),
                };
                let chunk = |idx: usize| recv[idx * w..(idx + 1) * w].to_vec();
                let own = send_of(self, root);
                for (a, b) in own.into_iter().zip(chunk(me)) {
                    if a != b {
                        self.push(rp, Tmpl::Swap { a, b });
                    }
                }
                let mut held = Vec::new();
                for &p in &peers {
                    let idx = comm.index_of(p).expect("member") as usize;
                    let part = Part::Start(p);
                    let send = send_of(self, p);
                    let into = chunk(idx);
                    if telegate {
                        let refs = self.cat_entangle(part, rp, &slots(&send));
                        for (&slot, &qubit) in into.iter().zip(&refs) {
                            self.push(rp, Tmpl::Push { slot, qubit });
                        }
                        held.push((p, refs, send, into));
                    } else {
                        let moved = self.teleport(part, rp, &slots(&send));
                        for (&slot, &qubit) in into.iter().zip(&moved) {
                            self.push(rp, Tmpl::Bind { slot, qubit });
                        }
                    }
                }
                for (p, refs, send, into) in held {
                    self.cat_disentangle(Part::Release(root), Part::Await(p), &refs, &slots(&send));
                    for slot in into {
                        self.push(Part::Release(root), Tmpl::Pop { slot });
                    }
                }
            }
            CollectiveKind::Reduce(fold) => {
                let gate = fold.gate();
                let acc = recv_of(self, root);
                for (a, b) in send_of(self, root).into_iter().zip(acc.clone()) {
                    if a != b {
                        self.gate(rp, gate, vec![QRef::Slot(a), QRef::Slot(b)]);
                    }
                }
                for &p in &peers {
                    let part = Part::Start(p);
                    let send = send_of(self, p);
                    let temps = if telegate {
                        self.cat_entangle(part, rp, &slots(&send))
                    } else {
                        self.teleport(part, rp, &slots(&send))
                    };
                    for (&t, &a) in temps.iter().zip(&acc) {
                        self.gate(rp, gate, vec![QRef::Fixed(t), QRef::Slot(a)]);
                    }
                    if telegate {
                        self.cat_disentangle(rp, Part::Await(p), &temps, &slots(&send));
                    }
                }
            }
        }
    }

    fn expose(&mut self, root: u32, scheme: ExposeScheme) {
        let rp = Part::Start(root);
        let shared = self.event_slots(root, |op| match op {
            CommOp::Expose { slots, .. } => slots.clone(),
            _ => unreachable!(),
        });
        let peers = self.s.peers();
        let targets: Vec<Vec<u32>> = peers
            .iter()
            .map(|&p| {
                self.event_slots(p, |op| match op {
                    CommOp::Expose { slots, .. } => slots.clone(),
                    _ => unreachable!(),
                })
            })
            .collect();
        let kind = self.plan.topology.kind;
        let hub = kind == TopologyKind::ViaCommunicator;
        match scheme {
            ExposeScheme::Ghz => {
                let k = peers.len() as u64;
                let charge = per_epoch_cost(CostProtocol::Expose, kind, k) as u32;
                let rn = Node::Rank(root);
                let mut remote: Vec<Vec<QubitId>> = vec![Vec::new(); peers.len()];
                let mut ms = Vec::new();
                for &s in &shared {
                    let g_root = self.comm();
                    let mut qubits = vec![(rn, g_root)];
                    for (j, &p) in peers.iter().enumerate() {
                        let g = self.comm();
                        remote[j].push(g);
                        qubits.push((Node::Rank(p), g));
                    }
                    self.op(rp, PrimitiveOp::AllocGhz { qubits, charge });
                    self.gate(rp, Gate::Cnot, vec![QRef::Slot(s), QRef::Fixed(g_root)]);
                    let m = self.bit(rn);
                    self.op(
                        rp,
                        PrimitiveOp::Measure {
                            qubit: QRef::Fixed(g_root),
                            bit: m,
                        },
                    );
                    ms.push(m);
                }
                self.sync(rp);
                for &p in &peers {
                    self.send(rp, Part::Start(p), ms.clone());
                }
                for (j, &p) in peers.iter().enumerate() {
                    let part = Part::Start(p);
                    let got = self.bits(Node::Rank(p), shared.len());
                    self.recv(part, rp, got.clone());
                    for (&g, &b) in remote[j].iter().zip(&got) {
                        self.op(
                            part,
                            PrimitiveOp::CondCorrection {
                                gate: Pauli::X,
                                qubit: QRef::Fixed(g),
                                bits: vec![b],
                            },
                        );
                    }
                    for (&slot, &qubit) in targets[j].iter().zip(&remote[j]) {
                        self.push(part, Tmpl::Push { slot, qubit });
                    }
                    let rel = Part::Release(p);
                    let mut out = Vec::new();
                    for &g in &remote[j] {
                        self.gate(rel, Gate::H, vec![QRef::Fixed(g)]);
                        let b = self.bit(Node::Rank(p));
                        self.op(
                            rel,
                            PrimitiveOp::Measure {
                                qubit: QRef::Fixed(g),
                                bit: b,
                            },
                        );
                        out.push(b);
                    }
                    self.send(rel, Part::Await(root), out);
                    for &slot in &targets[j] {
                        self.push(rel, Tmpl::Pop { slot });
                    }
                }
                let aw = Part::Await(root);
                self.sync(aw);
                let mut parity: Vec<Vec<Bit>> = vec![Vec::new(); shared.len()];
                for &p in &peers {
                    let got = self.bits(rn, shared.len());
                    self.recv(aw, Part::Start(p), got.clone());
                    for (i, b) in got.into_iter().enumerate() {
                        parity[i].push(b);
                    }
                }
                for (&s, bits) in shared.iter().zip(parity) {
                    self.op(
                        aw,
                        PrimitiveOp::CondCorrection {
                            gate: Pauli::Z,
                            qubit: QRef::Slot(s),
                            bits,
                        },
                    );
                }
            }
            ExposeScheme::Telegate if !hub => {
                for (j, &p) in peers.iter().enumerate() {
                    let part = Part::Start(p);
                    let refs = self.cat_entangle(rp, part, &slots(&shared));
                    for (&slot, &qubit) in targets[j].iter().zip(&refs) {
                        self.push(part, Tmpl::Push { slot, qubit });
                    }
                    self.cat_disentangle(Part::Release(p), Part::Await(root), &refs, &slots(&shared));
                    for &slot in &targets[j] {
                        self.push(Part::Release(p), Tmpl::Pop { slot });
                    }
                }
            }
            ExposeScheme::Telegate => {
                let relay = self.cat_entangle(rp, Part::Relay, &slots(&shared));
                let mut refs = Vec::new();
                for (j, &p) in peers.iter().enumerate() {
                    let part = Part::Start(p);
                    let r = self.cat_entangle(Part::Relay, part, &fixed(&relay));
                    for (&slot, &qubit) in targets[j].iter().zip(&r) {
                        self.push(part, Tmpl::Push { slot, qubit });
                    }
                    refs.push(r);
                }
                for (j, &p) in peers.iter().enumerate() {
                    self.cat_disentangle(Part::Release(p), Part::Relay, &refs[j], &fixed(&relay));
                    for &slot in &targets[j] {
                        self.push(Part::Release(p), Tmpl::Pop { slot });
                    }
                }
                self.cat_disentangle(Part::Relay, Part::Await(root), &relay, &slots(&shared));
            }
            ExposeScheme::Teledata => {
                let (home, mut cur) = if hub {
                    let at_relay = self.teleport(rp, Part::Relay, &slots(&shared));
                    (Part::Relay, fixed(&at_relay))
                } else {
                    (rp, slots(&shared))
                };
                for (j, &p) in peers.iter().enumerate() {
                    let part = Part::Start(p);
                    let there = self.teleport(home, part, &cur);
                    for (&slot, &qubit) in targets[j].iter().zip(&there) {
                        self.push(part, Tmpl::Push { slot, qubit });
                    }
                    let back = self.teleport(Part::Release(p), home, &fixed(&there));
                    for &slot in &targets[j] {
                        self.push(Part::Release(p), Tmpl::Pop { slot });
                    }
                    cur = fixed(&back);
                }
                let (land, last) = if hub {
                    let aw = Part::Await(root);
                    (aw, self.teleport(Part::Relay, aw, &cur))
                } else {
                    let last = cur
                        .iter()
                        .map(|q| match q {
                            QRef::Fixed(id) => *id,
                            QRef::Slot(_) | QRef::Pinned(_) => unreachable!("expose has at least one remote"),
                        })
                        .collect();
                    (rp, last)
                };
                for (&slot, &qubit) in shared.iter().zip(&last) {
                    self.push(land, Tmpl::Bind { slot, qubit });
                }
            }
        }
    }
}

struct NodeCtx {
    node: Node,
    base: BTreeMap<u32, QubitId>,
    refs: BTreeMap<u32, Vec<QubitId>>,
    bit_map: BTreeMap<(u32, Bit), Bit>,
    pins: BTreeMap<(u32, u32), QubitId>,
    next_bit: u32,
    ops: Vec<PrimitiveOp>,
}

impl NodeCtx {
    fn new(node: Node) -> Self {
        NodeCtx {
            node,
            base: BTreeMap::new(),
            refs: BTreeMap::new(),
            bit_map: BTreeMap::new(),
            pins: BTreeMap::new(),
            next_bit: 0,
            ops: Vec::new(),
        }
    }

    fn lookup(&self, slot: u32) -> QubitId {
        if let Some(q) = self.refs.get(&slot).and_then(|v| v.last()) {
            return *q;
        }
        match self.base.get(&slot) {
            Some(q) => *q,
            None => QubitId::Data {
                rank: self.node.rank().expect("relays have no slots"),
                slot,
            },
        }
    }

    fn resolve(&self, session: u32, q: QRef) -> QubitId {
        match q {
            QRef::Slot(s) => self.lookup(s),
            QRef::Fixed(id) => id,
            QRef::Pinned(p) => self.pins[&(session, p)],
        }
    }

    fn emit(&mut self, session: u32, t: &Tmpl, stats: &mut BTreeMap<u32, (u64, u32)>) {
        match t {
            Tmpl::Op(op) => {
                let resolved = op.map_qubits(|q| self.resolve(session, q));
                let resolved = resolved.map_bits(|b| match b {
                    Bit::User(_) => b,
                    Bit::Proto(_) => *self.bit_map.entry((session, b)).or_insert_with(|| {
                        self.next_bit += 1;
                        Bit::Proto(self.next_bit - 1)
                    }),
                });
                let st = stats.entry(session).or_default();
                st.0 += u64::from(resolved.charge());
                if matches!(resolved, PrimitiveOp::SyncPoint { .. }) {
                    st.1 += 1;
                }
                self.ops.push(resolved);
            }
            Tmpl::Bind { slot, qubit } => {
                self.base.insert(*slot, *qubit);
            }
            Tmpl::Push { slot, qubit } => self.refs.entry(*slot).or_default().push(*qubit),
            Tmpl::Pop { slot } => {
                self.refs.get_mut(slot).and_then(|v| v.pop());
            }
            Tmpl::Pin { pin, slot } => {
                let q = self.lookup(*slot);
                self.pins.insert((session, *pin), q);
            }
            Tmpl::Swap { a, b } => {
                let (qa, qb) = (self.lookup(*a), self.lookup(*b));
                self.base.insert(*a, qb);
                self.base.insert(*b, qa);
            }
        }
    }
}

pub fn expand(plan: &Plan) -> LoweredProgram {
    let mut next_comm = 0;
    let mut frags: Vec<Fragments> = Vec::new();
    for s in &plan.sessions {
        let g = Gen {
            s,
            plan,
            next_comm: &mut next_comm,
            bits: BTreeMap::new(),
            pins: 0,
            f: Fragments::default(),
        };
        frags.push(g.generate());
    }

    let mut stats: BTreeMap<u32, (u64, u32)> = BTreeMap::new();
    let mut nodes = BTreeMap::new();
    let mut final_bindings = BTreeMap::new();
    for rank in 0..plan.world_size {
        let r = rank as usize;
        let mut ctx = NodeCtx::new(Node::Rank(rank));
        let events = &plan.events[r];
        for idx in 0..=events.len() {
            for &s in plan.releases[r].get(&idx).into_iter().flatten() {
                for t in frags[s as usize].take(Part::Release(rank)) {
                    ctx.emit(s, &t, &mut stats);
                }
            }
            for &s in plan.awaits[r].get(&idx).into_iter().flatten() {
                for t in frags[s as usize].take(Part::Await(rank)) {
                    ctx.emit(s, &t, &mut stats);
                }
            }
            let Some(e) = events.get(idx) else { break };
            match e {
                Event::Gate { gate, slots } => {
                    let qubits = slots.iter().map(|&s| ctx.lookup(s)).collect();
                    ctx.ops.push(PrimitiveOp::Gate { gate: *gate, qubits });
                }
                Event::Measure { slot, bit } => {
                    let qubit = ctx.lookup(*slot);
                    ctx.ops.push(PrimitiveOp::Measure {
                        qubit,
                        bit: Bit::User(*bit),
                    });
                }
                Event::Reset { slot } => {
                    let qubit = ctx.lookup(*slot);
                    ctx.ops.push(PrimitiveOp::Reset { qubit });
                }
                Event::Comm(_) => {
                    let s = plan.session_of[r][&idx];
                    for t in frags[s as usize].take(Part::Start(rank)) {
                        ctx.emit(s, &t, &mut stats);
                    }
                }
                Event::Finalize => {}
            }
        }
        for slot in 0..plan.num_qubits {
            final_bindings.insert((rank, slot), ctx.lookup(slot));
        }
        nodes.insert(ctx.node, ctx.ops);
    }
    for (i, f) in frags.iter_mut().enumerate() {
        let relay = f.take(Part::Relay);
        if relay.is_empty() {
            continue;
        }
        let mut ctx = NodeCtx::new(Node::Relay(i as u32));
        for t in relay {
            ctx.emit(i as u32, &t, &mut stats);
        }
        nodes.insert(ctx.node, ctx.ops);
    }

    let sessions = plan
        .sessions
        .iter()
        .map(|s| {
            let (charge, syncs) = stats.get(&s.id).copied().unwrap_or_default();
            SessionInfo {
                id: s.id,
                name: s.name.clone(),
                scheme: s.scheme.label().to_string(),
                ranks: s.ends.keys().copied().collect(),
                charge,
                syncs,
            }
        })
        .collect();
    LoweredProgram::new(plan.world_size, plan.topology, plan.num_qubits, nodes, sessions, final_bindings)
}
