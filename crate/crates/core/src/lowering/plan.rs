//! Matching of communication endpoints, protocol resolution and placement of
//! the deferred halves of reference-sharing protocols.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::unroll::{CollectiveKind, CommEvent, CommKey, CommOp, Event};
use super::{ExposeScheme, LowerError, LowerOptions};
use crate::ir::{Gate, Protocol};
use crate::topology::{per_epoch_cost, CostProtocol, Topology};

/// How a session is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Teledata,
    Telegate,
    /// Measurement outcomes only; no quantum resources.
    Classical,
    Expose(ExposeScheme),
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Teledata => "teledata",
            Scheme::Telegate => "telegate",
            Scheme::Classical => "classical",
            Scheme::Expose(ExposeScheme::Ghz) => "ghz",
            Scheme::Expose(ExposeScheme::Teledata) => "expose-teledata",
            Scheme::Expose(ExposeScheme::Telegate) => "expose-telegate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    P2p { src: u32, dst: u32, quantum: bool },
    Collective { kind: CollectiveKind, root: u32 },
    Expose { root: u32 },
}

/// One matched (or, when allowed, unmatched) communication instance.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: u32,
    pub shape: Shape,
    pub scheme: Scheme,
    pub comm: CommKey,
    /// Event index of every participating rank that reached this session.
    pub ends: BTreeMap<u32, usize>,
    pub name: String,
    /// Qubits per transfer unit: chunk size for scatter and gather, array
    /// length otherwise.
    pub width: u32,
}

impl Session {
    pub fn root(&self) -> u32 {
        match self.shape {
            Shape::P2p { src, .. } => src,
            Shape::Collective { root, .. } | Shape::Expose { root } => root,
        }
    }

    /// Members other than the root, in communicator order.
    pub fn peers(&self) -> Vec<u32> {
        match self.shape {
            Shape::P2p { dst, .. } => vec![dst],
            _ => self
                .comm
                .members
                .iter()
                .copied()
                .filter(|&m| m != self.root())
                .collect(),
        }
    }

    pub fn is_noop(&self) -> bool {
        matches!(self.shape, Shape::Expose { .. }) && self.comm.size() < 2
    }
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub world_size: u32,
    pub num_qubits: u32,
    pub topology: Topology,
    pub events: Vec<Vec<Event>>,
    pub sessions: Vec<Session>,
    /// Per rank: event index of a communication event to its session.
    pub session_of: Vec<BTreeMap<usize, u32>>,
    /// Per rank: sessions whose held references are released before the event at the key.
    pub releases: Vec<BTreeMap<usize, Vec<u32>>>,
    /// Per rank: sessions whose owner waits for the references before the event at the key.
    pub awaits: Vec<BTreeMap<usize, Vec<u32>>>,
}

impl Plan {
    pub fn event(&self, rank: u32, session: &Session) -> Option<&CommEvent> {
        let idx = *session.ends.get(&rank)?;
        match &self.events[rank as usize][idx] {
            Event::Comm(c) => Some(c),
            _ => None,
        }
    }
}

/// Where an unmatched endpoint sits.
fn unmatched(rank: u32, ev: &CommEvent, detail: impl Into<String>) -> LowerError {
    LowerError::UnmatchedEndpoint {
        rank,
        at: ev.at.clone(),
        name: ev.name.clone(),
        detail: detail.into(),
    }
}

fn comm_events(events: &[Event]) -> impl Iterator<Item = (usize, &CommEvent)> {
    events.iter().enumerate().filter_map(|(i, e)| match e {
        Event::Comm(c) => Some((i, c)),
        _ => None,
    })
}

/// Provisional grouping before ids are assigned.
struct Group {
    shape: Shape,
    comm: CommKey,
    ends: BTreeMap<u32, usize>,
}

pub fn plan(
    events: Vec<Vec<Event>>,
    num_qubits: u32,
    topology: Topology,
    opts: &LowerOptions,
) -> Result<Plan, LowerError> {
    let world_size = topology.qpus;
    let mut groups: Vec<Group> = Vec::new();
    let mut group_of: BTreeMap<(u32, usize), usize> = BTreeMap::new();

    // Point-to-point: FIFO per (comm, src, dst, quantum).
    type Key = (CommKey, u32, u32, bool);
    let mut sends: BTreeMap<Key, VecDeque<(u32, usize)>> = BTreeMap::new();
    let mut recvs: BTreeMap<Key, VecDeque<(u32, usize)>> = BTreeMap::new();
    // Collectives: sequence per (comm, member).
    let mut seqs: BTreeMap<(CommKey, u32), Vec<usize>> = BTreeMap::new();
    for (rank, evs) in events.iter().enumerate() {
        let rank = rank as u32;
        for (i, c) in comm_events(evs) {
            match &c.op {
                CommOp::QSend { dest, .. } => sends
                    .entry((c.comm.clone(), rank, *dest, true))
                    .or_default()
                    .push_back((rank, i)),
                CommOp::MSend { dest, .. } => sends
                    .entry((c.comm.clone(), rank, *dest, false))
                    .or_default()
                    .push_back((rank, i)),
                CommOp::QRecv { src, .. } => recvs
                    .entry((c.comm.clone(), *src, rank, true))
                    .or_default()
                    .push_back((rank, i)),
                CommOp::MRecv { src, .. } => recvs
                    .entry((c.comm.clone(), *src, rank, false))
                    .or_default()
                    .push_back((rank, i)),
                CommOp::Collective { .. } | CommOp::Expose { .. } => {
                    seqs.entry((c.comm.clone(), rank)).or_default().push(i)
                }
            }
        }
    }
    let ev = |rank: u32, idx: usize| -> &CommEvent {
        match &events[rank as usize][idx] {
            Event::Comm(c) => c,
            _ => unreachable!("indices refer to communication events"),
        }
    };

    let keys: BTreeSet<Key> = sends.keys().chain(recvs.keys()).cloned().collect();
    for key in keys {
        let (comm, src, dst, quantum) = key.clone();
        let mut s = sends.remove(&key).unwrap_or_default();
        let mut r = recvs.remove(&key).unwrap_or_default();
        loop {
            let (a, b) = (s.pop_front(), r.pop_front());
            if a.is_none() && b.is_none() {
                break;
            }
            if !opts.allow_unmatched {
                if let (Some((rank, i)), None) | (None, Some((rank, i))) = (a, b) {
                    let side = if a.is_some() { "receive" } else { "send" };
                    return Err(unmatched(rank, ev(rank, i), format!("no matching {side}")));
                }
            }
            let mut ends = BTreeMap::new();
            for (rank, i) in a.into_iter().chain(b) {
                ends.insert(rank, i);
                group_of.insert((rank, i), groups.len());
            }
            groups.push(Group {
                shape: Shape::P2p { src, dst, quantum },
                comm: comm.clone(),
                ends,
            });
        }
    }

    let comms: BTreeSet<CommKey> = seqs.keys().map(|(c, _)| c.clone()).collect();
    for comm in comms {
        let longest = comm
            .members
            .iter()
            .map(|m| seqs.get(&(comm.clone(), *m)).map_or(0, Vec::len))
            .max()
            .unwrap_or(0);
        for n in 0..longest {
            let mut ends = BTreeMap::new();
            let mut shape: Option<(Shape, u32, usize)> = None;
            for &m in &comm.members {
                let Some(&i) = seqs.get(&(comm.clone(), m)).and_then(|v| v.get(n)) else {
                    continue;
                };
                let e = ev(m, i);
                let this = match &e.op {
                    CommOp::Collective { kind, root, .. } => Shape::Collective {
                        kind: *kind,
                        root: *root,
                    },
                    CommOp::Expose { root, .. } => Shape::Expose { root: *root },
                    _ => unreachable!(),
                };
                match &shape {
                    None => shape = Some((this, m, i)),
                    Some((first, fr, fi)) if *first != this => {
                        return Err(LowerError::CollectiveMismatch {
                            at: e.at.clone(),
                            detail: format!(
                                "rank {m} calls {} while rank {fr} calls {}",
                                e.name,
                                ev(*fr, *fi).name
                            ),
                        });
                    }
                    _ => {}
                }
                ends.insert(m, i);
            }
            let (shape, fr, fi) = shape.expect("at least one member reached this collective");
            if !opts.allow_unmatched && ends.len() < comm.members.len() {
                let missing: Vec<String> = comm
                    .members
                    .iter()
                    .filter(|m| !ends.contains_key(m))
                    .map(|m| m.to_string())
                    .collect();
                return Err(unmatched(
                    fr,
                    ev(fr, fi),
                    format!("ranks {} never join", missing.join(", ")),
                ));
            }
            for (&m, &i) in &ends {
                group_of.insert((m, i), groups.len());
            }
            groups.push(Group {
                shape,
                comm: comm.clone(),
                ends,
            });
        }
    }

    // Ids follow first appearance in (rank, event) order.
    let mut order: Vec<usize> = Vec::new();
    let mut seen = BTreeSet::new();
    for g in group_of.values() {
        if seen.insert(*g) {
            order.push(*g);
        }
    }
    let mut session_of: Vec<BTreeMap<usize, u32>> = vec![BTreeMap::new(); world_size as usize];
    let mut slots_for: Vec<Option<Group>> = groups.into_iter().map(Some).collect();
    let mut sessions = Vec::new();
    for (id, g) in order.into_iter().enumerate() {
        let g = slots_for[g].take().expect("each group is taken once");
        for (&r, &i) in &g.ends {
            session_of[r as usize].insert(i, id as u32);
        }
        let (&r0, &i0) = g.ends.iter().next().expect("groups are non-empty");
        sessions.push(Session {
            id: id as u32,
            shape: g.shape,
            scheme: Scheme::Classical,
            comm: g.comm,
            ends: g.ends,
            name: ev(r0, i0).name.clone(),
            width: 0,
        });
    }

    let mut plan = Plan {
        world_size,
        num_qubits,
        topology,
        events,
        sessions,
        session_of,
        releases: vec![BTreeMap::new(); world_size as usize],
        awaits: vec![BTreeMap::new(); world_size as usize],
    };
    for i in 0..plan.sessions.len() {
        let width = check_counts(&plan, &plan.sessions[i])?;
        let scheme = resolve(&plan, &plan.sessions[i], opts)?;
        plan.sessions[i].width = width;
        plan.sessions[i].scheme = scheme;
    }
    place(&mut plan)?;
    Ok(plan)
}

fn count_mismatch(s: &Session, ev: &CommEvent, detail: String) -> LowerError {
    LowerError::CountMismatch {
        at: ev.at.clone(),
        name: s.name.clone(),
        detail,
    }
}

/// Check that the participants agree on sizes; returns the session width.
fn check_counts(plan: &Plan, s: &Session) -> Result<u32, LowerError> {
    let root = s.root();
    let size = s.comm.size();
    match &s.shape {
        Shape::P2p { src, dst, .. } => {
            let len = |r: u32| {
                plan.event(r, s).map(|e| match &e.op {
                    CommOp::QSend { slots, .. }
                    | CommOp::QRecv { slots, .. }
                    | CommOp::MSend { slots, .. } => slots.len(),
                    CommOp::MRecv { bits, .. } => bits.len(),
                    _ => unreachable!(),
                })
            };
            match (len(*src), len(*dst)) {
                (Some(a), Some(b)) if a != b => Err(count_mismatch(
                    s,
                    plan.event(*dst, s).expect("present"),
                    format!("rank {src} sends {a} but rank {dst} receives {b}"),
                )),
                (Some(a), _) | (None, Some(a)) => Ok(a as u32),
                (None, None) => unreachable!(),
            }
        }
        Shape::Collective { kind, .. } => {
            let parts = |r: u32| match plan.event(r, s).map(|e| &e.op) {
                Some(CommOp::Collective { send, recv, .. }) => Some((send.len(), recv.len())),
                _ => None,
            };
            let (total_side, each_side): (fn((usize, usize)) -> usize, fn((usize, usize)) -> usize) =
                match kind {
                    CollectiveKind::Scatter => (|p| p.0, |p| p.1),
                    CollectiveKind::Gather => (|p| p.1, |p| p.0),
                    CollectiveKind::Reduce(_) => (|p| p.1, |p| p.0),
                };
            let expect_each = match parts(root) {
                Some(p) => {
                    let total = total_side(p) as u32;
                    if matches!(kind, CollectiveKind::Reduce(_)) {
                        Some(total)
                    } else {
                        if !total.is_multiple_of(size) {
                            return Err(LowerError::IndivisibleCount {
                                at: plan.event(root, s).expect("present").at.clone(),
                                name: s.name.clone(),
                                count: total,
                                size,
                            });
                        }
                        Some(total / size)
                    }
                }
                None => None,
            };
            let mut width = expect_each;
            for &r in s.ends.keys() {
                let got = each_side(parts(r).expect("present")) as u32;
                match width {
                    Some(w) if w != got => {
                        return Err(count_mismatch(
                            s,
                            plan.event(r, s).expect("present"),
                            format!("rank {r} contributes {got} qubits where {w} are expected"),
                        ));
                    }
                    None => width = Some(got),
                    _ => {}
                }
            }
            Ok(width.unwrap_or(0))
        }
        Shape::Expose { .. } => {
            let mut width = None;
            for &r in s.ends.keys() {
                let e = plan.event(r, s).expect("present");
                let CommOp::Expose { slots, .. } = &e.op else { unreachable!() };
                match width {
                    Some(w) if w != slots.len() => {
                        return Err(count_mismatch(
                            s,
                            e,
                            format!("rank {r} exposes {} qubits where {w} are expected", slots.len()),
                        ));
                    }
                    _ => width = Some(slots.len()),
                }
            }
            Ok(width.unwrap_or(0) as u32)
        }
    }
}

/// Slots on which `rank` receives a binding at its event of session `s`.
fn receiving_slots(ev: &CommEvent, rank: u32) -> Vec<u32> {
    match &ev.op {
        CommOp::QRecv { slots, .. } => slots.clone(),
        CommOp::Collective {
            kind: CollectiveKind::Scatter,
            recv,
            ..
        } => recv.clone(),
        CommOp::Collective {
            kind: CollectiveKind::Gather,
            recv,
            root,
            ..
        } if *root == rank => recv.clone(),
        CommOp::Expose { slots, root } if *root != rank => slots.clone(),
        _ => Vec::new(),
    }
}

/// Can a shared reference appear in this position of a gate?
fn reference_use_ok(gate: &Gate, position: usize) -> bool {
    match gate {
        Gate::Z | Gate::Cz | Gate::Cp(_) => true,
        Gate::Cnot => position == 0,
        Gate::H | Gate::X => false,
    }
}

/// The stretch after event `idx` during which `slots` keep the binding made at `idx`.
struct Window {
    /// Events using the slots, with whether every such use is reference-safe.
    uses: Vec<(usize, bool)>,
    /// First later communication on the rank. References must be retired
    /// before it, since the owner may be waiting for them there.
    cut: Option<usize>,
}

impl Window {
    /// First use that a reference cannot serve.
    fn bad_use(&self) -> Option<(usize, bool)> {
        self.uses
            .iter()
            .copied()
            .find(|&(i, ok)| !ok || self.cut.is_some_and(|c| i > c))
    }
}

fn window(events: &[Event], rank: u32, idx: usize, slots: &[u32]) -> Window {
    let mut uses = Vec::new();
    let mut cut = None;
    for (i, e) in events.iter().enumerate().skip(idx + 1) {
        if matches!(e, Event::Finalize) {
            return Window { uses, cut };
        }
        if let Event::Comm(c) = e {
            cut.get_or_insert(i);
            let rebinds = receiving_slots(c, rank);
            if slots.iter().any(|s| rebinds.contains(s)) {
                let all = c.slots();
                let other_use = slots
                    .iter()
                    .any(|s| all.iter().filter(|x| *x == s).count() > rebinds.iter().filter(|x| *x == s).count());
                if other_use {
                    uses.push((i, false));
                }
                return Window { uses, cut };
            }
        }
        if !slots.iter().any(|&s| e.mentions(s)) {
            continue;
        }
        let ok = match e {
            Event::Gate { gate, slots: gs } => gs
                .iter()
                .enumerate()
                .filter(|(_, g)| slots.contains(g))
                .all(|(p, _)| reference_use_ok(gate, p)),
            _ => false,
        };
        uses.push((i, ok));
    }
    Window { uses, cut }
}

/// Slots holding references on `rank` after its event, for reference-sharing schemes.
fn held_slots(plan: &Plan, s: &Session, rank: u32) -> Vec<u32> {
    let Some(e) = plan.event(rank, s) else {
        return Vec::new();
    };
    let root = s.root();
    match (&s.shape, &e.op) {
        (Shape::P2p { .. }, CommOp::QRecv { slots, .. }) => slots.clone(),
        (
            Shape::Collective {
                kind: CollectiveKind::Scatter,
                ..
            },
            CommOp::Collective { recv, .. },
        ) if rank != root => recv.clone(),
        (
            Shape::Collective {
                kind: CollectiveKind::Gather,
                ..
            },
            CommOp::Collective { recv, .. },
        ) if rank == root => {
            let me = s.comm.index_of(root).expect("root is a member") as usize;
            let w = s.width as usize;
            recv.iter()
                .enumerate()
                .filter(|(i, _)| i / w.max(1) != me)
                .map(|(_, &x)| x)
                .collect()
        }
        (Shape::Expose { .. }, CommOp::Expose { slots, .. }) if rank != root => slots.clone(),
        _ => Vec::new(),
    }
}

/// Slots whose state stays with `rank` while others hold references to it.
fn owned_slots(plan: &Plan, s: &Session, rank: u32) -> Vec<u32> {
    let Some(e) = plan.event(rank, s) else {
        return Vec::new();
    };
    let root = s.root();
    match (&s.shape, &e.op) {
        (Shape::P2p { .. }, CommOp::QSend { slots, .. }) => slots.clone(),
        (
            Shape::Collective {
                kind: CollectiveKind::Scatter,
                ..
            },
            CommOp::Collective { send, .. },
        ) if rank == root => {
            let me = s.comm.index_of(root).expect("root is a member") as usize;
            let w = s.width as usize;
            send.iter()
                .enumerate()
                .filter(|(i, _)| i / w.max(1) != me)
                .map(|(_, &x)| x)
                .collect()
        }
        (
            Shape::Collective {
                kind: CollectiveKind::Gather | CollectiveKind::Reduce(_),
                ..
            },
            CommOp::Collective { send, .. },
        ) if rank != root => send.clone(),
        (Shape::Expose { .. }, CommOp::Expose { slots, .. }) if rank == root => slots.clone(),
        _ => Vec::new(),
    }
}

fn resolve(plan: &Plan, s: &Session, opts: &LowerOptions) -> Result<Scheme, LowerError> {
    match s.shape {
        Shape::P2p { quantum: false, .. } => return Ok(Scheme::Classical),
        Shape::Expose { .. } => return Ok(Scheme::Expose(opts.expose_scheme)),
        _ => {}
    }
    let mut chosen: Option<(Protocol, u32)> = None;
    for &r in s.ends.keys() {
        let e = plan.event(r, s).expect("present");
        if e.protocol == Protocol::Unspecified {
            continue;
        }
        match chosen {
            Some((p, pr)) if p != e.protocol => {
                let first = plan.event(pr, s).expect("present");
                return Err(LowerError::ProtocolMismatch {
                    at: e.at.clone(),
                    first: format!("{} on rank {pr}", first.name),
                    second: format!("{} on rank {r}", e.name),
                });
            }
            None => chosen = Some((e.protocol, r)),
            _ => {}
        }
    }
    let explicit = chosen.map(|c| c.0).or(match opts.default_protocol {
        Protocol::Unspecified => None,
        p => Some(p),
    });
    match explicit {
        Some(Protocol::Teledata) => return Ok(Scheme::Teledata),
        Some(Protocol::Telegate) => return Ok(Scheme::Telegate),
        _ => {}
    }

    // Usage analysis: references suffice when every use is a control.
    let eligible = match s.shape {
        Shape::Collective {
            kind: CollectiveKind::Reduce(_),
            ..
        } => true,
        _ => {
            let holders: Vec<u32> = s.ends.keys().copied().filter(|&r| !held_slots(plan, s, r).is_empty()).collect();
            !holders.is_empty()
                && holders.iter().all(|&r| {
                    let slots = held_slots(plan, s, r);
                    let w = window(&plan.events[r as usize], r, s.ends[&r], &slots);
                    !w.uses.is_empty() && w.bad_use().is_none()
                })
        }
    };
    if !eligible {
        return Ok(Scheme::Teledata);
    }
    let kind = plan.topology.kind;
    let telegate = per_epoch_cost(CostProtocol::Telegate, kind, 1);
    let teledata = per_epoch_cost(CostProtocol::Teledata, kind, 1);
    Ok(if telegate <= teledata {
        Scheme::Telegate
    } else {
        Scheme::Teledata
    })
}

fn shares_references(s: &Session) -> bool {
    match s.scheme {
        Scheme::Telegate => !matches!(
            s.shape,
            Shape::Collective {
                kind: CollectiveKind::Reduce(_),
                ..
            }
        ),
        Scheme::Expose(_) => !s.is_noop(),
        _ => false,
    }
}

fn place(plan: &mut Plan) -> Result<(), LowerError> {
    let mut releases = plan.releases.clone();
    let mut awaits = plan.awaits.clone();
    for s in &plan.sessions {
        let owner_waits = match s.scheme {
            Scheme::Telegate => true,
            Scheme::Expose(_) => !s.is_noop(),
            _ => false,
        };
        for (&r, &idx) in &s.ends {
            let events = &plan.events[r as usize];
            if shares_references(s) {
                let held = held_slots(plan, s, r);
                if !held.is_empty() {
                    let w = window(events, r, idx, &held);
                    if let Some((bad, ok)) = w.bad_use() {
                        let at = match &events[bad] {
                            Event::Comm(c) => c.at.clone(),
                            _ => plan.event(r, s).expect("present").at.clone(),
                        };
                        let detail = if ok {
                            "a use after a later communication".to_string()
                        } else {
                            describe(&events[bad])
                        };
                        return Err(LowerError::ReferenceMisuse {
                            rank: r,
                            at,
                            name: s.name.clone(),
                            detail,
                        });
                    }
                    let pos = w.uses.last().map_or(idx + 1, |u| u.0 + 1);
                    releases[r as usize].entry(pos).or_default().push(s.id);
                }
            }
            if owner_waits {
                let owned = owned_slots(plan, s, r);
                if owned.is_empty() {
                    continue;
                }
                let inline = matches!(s.scheme, Scheme::Expose(ExposeScheme::Teledata))
                    && plan.topology.kind == crate::topology::TopologyKind::DirectConnected;
                let pos = if inline {
                    idx + 1
                } else {
                    events
                        .iter()
                        .enumerate()
                        .skip(idx + 1)
                        .find(|(_, e)| {
                            matches!(e, Event::Finalize | Event::Comm(_)) || owned.iter().any(|&o| e.mentions(o))
                        })
                        .map_or(events.len(), |(i, _)| i)
                };
                awaits[r as usize].entry(pos).or_default().push(s.id);
            }
        }
    }
    plan.releases = releases;
    plan.awaits = awaits;
    Ok(())
}

fn describe(e: &Event) -> String {
    match e {
        Event::Gate { gate, .. } => format!("gate {gate} is not a controlled or diagonal use"),
        Event::Measure { .. } => "measurement".into(),
        Event::Reset { .. } => "reset".into(),
        Event::Comm(c) => format!("`{}`", c.name),
        Event::Finalize => "finalize".into(),
    }
}

