//! Per-rank partial evaluation of the entry function.
//!
//! Every rank runs the same program with its own rank value, so all control
//! flow that depends only on ranks and constants can be resolved statically.
//! The result is a flat event list per rank.

use std::collections::{BTreeMap, HashMap};

use super::LowerError;
use crate::ir::comm::{comm_from_group, group_from_ranks, CommHandle};
use crate::ir::intrinsics::{classify, IntrinsicBase, NETQIR_PREFIX};
use crate::ir::{
    find_attr, BinOp, Block, FoldGate, Function, Gate, Location, Op, Operand, Program, Protocol,
    QisFn, TypedOperand, FOLD_ATTR,
};

const STEP_LIMIT: usize = 1_000_000;
const DEPTH_LIMIT: usize = 64;

/// Identity of a communicator shared by all ranks that created it: the member
/// list plus how many communicators with that list the rank created before.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CommKey {
    pub members: Vec<u32>,
    pub ordinal: u32,
}

impl CommKey {
    pub fn size(&self) -> u32 {
        self.members.len() as u32
    }

    pub fn index_of(&self, rank: u32) -> Option<u32> {
        self.members.iter().position(|&m| m == rank).map(|i| i as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectiveKind {
    Scatter,
    Gather,
    Reduce(FoldGate),
}

/// Communication performed by one rank. Peers and roots are world ranks.
#[derive(Debug, Clone, PartialEq)]
pub enum CommOp {
    QSend { slots: Vec<u32>, dest: u32 },
    QRecv { slots: Vec<u32>, src: u32 },
    MSend { slots: Vec<u32>, dest: u32 },
    MRecv { bits: Vec<u32>, src: u32 },
    Collective {
        kind: CollectiveKind,
        send: Vec<u32>,
        recv: Vec<u32>,
        root: u32,
    },
    Expose { slots: Vec<u32>, root: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommEvent {
    pub op: CommOp,
    pub protocol: Protocol,
    pub comm: CommKey,
    /// Intrinsic name as written, for messages.
    pub name: String,
    pub at: Location,
}

impl CommEvent {
    /// Qubit slots this event reads or writes on the calling rank.
    pub fn slots(&self) -> Vec<u32> {
        match &self.op {
            CommOp::QSend { slots, .. }
            | CommOp::QRecv { slots, .. }
            | CommOp::MSend { slots, .. }
            | CommOp::Expose { slots, .. } => slots.clone(),
            CommOp::MRecv { .. } => Vec::new(),
            CommOp::Collective { send, recv, .. } => {
                let mut s = send.clone();
                s.extend(recv);
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Gate { gate: Gate, slots: Vec<u32> },
    Measure { slot: u32, bit: u32 },
    Reset { slot: u32 },
    Comm(CommEvent),
    Finalize,
}

impl Event {
    pub fn mentions(&self, slot: u32) -> bool {
        match self {
            Event::Gate { slots, .. } => slots.contains(&slot),
            Event::Measure { slot: s, .. } | Event::Reset { slot: s } => *s == slot,
            Event::Comm(c) => c.slots().contains(&slot),
            Event::Finalize => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Float(f64),
    Ptr(i64),
    List(Vec<i64>),
    Comm(usize),
    Group(Vec<u32>),
    /// Depends on a measurement outcome, unknown before execution.
    Runtime,
    Unit,
}

struct Machine<'p> {
    program: &'p Program,
    rank: u32,
    world: u32,
    comms: Vec<(CommHandle, CommKey)>,
    ordinals: HashMap<Vec<u32>, u32>,
    events: Vec<Event>,
    steps: usize,
}

/// Event lists for every rank of a world of `world_size`.
pub fn unroll(program: &Program, world_size: u32) -> Result<Vec<Vec<Event>>, LowerError> {
    let entry = program.entry().ok_or(LowerError::NoEntry)?;
    (0..world_size)
        .map(|rank| {
            let world = CommHandle::world(world_size);
            let key = CommKey {
                members: world.members().to_vec(),
                ordinal: 0,
            };
            let mut m = Machine {
                program,
                rank,
                world: world_size,
                ordinals: HashMap::from([(key.members.clone(), 1)]),
                comms: vec![(world, key)],
                events: Vec::new(),
                steps: 0,
            };
            m.run(entry, Vec::new(), 0)?;
            Ok(m.events)
        })
        .collect()
}

fn site(f: &Function, b: &Block, pos: crate::ir::Span) -> Location {
    Location {
        function: Some(f.name.clone()),
        block: Some(b.label.clone()),
        pos: pos.0,
    }
}

impl<'p> Machine<'p> {
    fn bad(&self, at: &Location, msg: impl Into<String>) -> LowerError {
        LowerError::Unsupported {
            rank: self.rank,
            at: at.clone(),
            message: msg.into(),
        }
    }

    fn run(
        &mut self,
        f: &'p Function,
        args: Vec<Value>,
        depth: usize,
    ) -> Result<Value, LowerError> {
        let blocks = f.blocks.as_ref().expect("run is only called on definitions");
        if depth > DEPTH_LIMIT {
            return Err(self.bad(
                &Location {
                    function: Some(f.name.clone()),
                    ..Location::default()
                },
                "call depth limit exceeded",
            ));
        }
        let mut env: BTreeMap<String, Value> = BTreeMap::new();
        for (p, v) in f.params.iter().zip(args) {
            if let Some(n) = &p.name {
                env.insert(n.clone(), v);
            }
        }
        let mut block = &blocks[0];
        loop {
            let mut next: Option<&str> = None;
            for inst in &block.instructions {
                self.steps += 1;
                if self.steps > STEP_LIMIT {
                    return Err(LowerError::StepLimit {
                        rank: self.rank,
                        limit: STEP_LIMIT,
                    });
                }
                let at = site(f, block, inst.span);
                let result = match &inst.op {
                    Op::Call {
                        callee, args, attrs, ..
                    } => {
                        let vals = args
                            .iter()
                            .map(|a| self.eval(&env, &a.value, &at))
                            .collect::<Result<Vec<_>, _>>()?;
                        self.call(callee, args, vals, attrs, &at, depth)?
                    }
                    Op::Icmp { pred, lhs, rhs, .. } => {
                        match (self.eval(&env, lhs, &at)?, self.eval(&env, rhs, &at)?) {
                            (Value::Int(a), Value::Int(b)) => Value::Int(pred.eval(a, b) as i64),
                            (Value::Runtime, _) | (_, Value::Runtime) => Value::Runtime,
                            _ => return Err(self.bad(&at, "icmp on non-integer values")),
                        }
                    }
                    Op::Binary { op, lhs, rhs, .. } => {
                        match (self.eval(&env, lhs, &at)?, self.eval(&env, rhs, &at)?) {
                            (Value::Int(a), Value::Int(b)) => Value::Int(match op {
                                BinOp::Add => a.wrapping_add(b),
                                BinOp::Sub => a.wrapping_sub(b),
                            }),
                            (Value::Runtime, _) | (_, Value::Runtime) => Value::Runtime,
                            _ => return Err(self.bad(&at, "arithmetic on non-integer values")),
                        }
                    }
                    Op::Br { dest } => {
                        next = Some(dest);
                        Value::Unit
                    }
                    Op::CondBr {
                        cond,
                        then_dest,
                        else_dest,
                    } => {
                        match self.eval(&env, cond, &at)? {
                            Value::Int(c) => {
                                next = Some(if c != 0 { then_dest } else { else_dest })
                            }
                            Value::Runtime => {
                                return Err(LowerError::RuntimeBranch { rank: self.rank, at })
                            }
                            _ => return Err(self.bad(&at, "branch on a non-integer value")),
                        }
                        Value::Unit
                    }
                    Op::Ret { value } => {
                        return match value {
                            Some(v) => self.eval(&env, &v.value, &at),
                            None => Ok(Value::Unit),
                        };
                    }
                };
                if let Some(r) = &inst.result {
                    env.insert(r.clone(), result);
                }
                if next.is_some() {
                    break;
                }
            }
            let Some(label) = next else {
                return Ok(Value::Unit);
            };
            block = f
                .block(label)
                .expect("validated programs only branch to existing labels");
        }
    }

    fn eval(
        &self,
        env: &BTreeMap<String, Value>,
        v: &Operand,
        at: &Location,
    ) -> Result<Value, LowerError> {
        Ok(match v {
            Operand::Local(n) => env
                .get(n)
                .cloned()
                .ok_or_else(|| self.bad(at, format!("`%{n}` has no value on this path")))?,
            Operand::Int(i) => Value::Int(*i),
            Operand::Float(x) => Value::Float(*x),
            Operand::Bool(b) => Value::Int(*b as i64),
            Operand::Null => Value::Ptr(0),
            Operand::IntToPtr { value, .. } => Value::Ptr(*value),
            Operand::IntList(items) => Value::List(items.clone()),
        })
    }

    fn slot(&self, v: &Value, at: &Location) -> Result<u32, LowerError> {
        match v {
            Value::Ptr(p) => u32::try_from(*p).map_err(|_| self.bad(at, format!("negative slot {p}"))),
            _ => Err(self.bad(at, "expected a slot pointer")),
        }
    }

    fn int(&self, v: &Value, at: &Location) -> Result<i64, LowerError> {
        match v {
            Value::Int(i) => Ok(*i),
            Value::Runtime => Err(self.bad(at, "count or rank depends on a measurement result")),
            _ => Err(self.bad(at, "expected an integer")),
        }
    }

    fn count(&self, v: &Value, at: &Location) -> Result<u32, LowerError> {
        let c = self.int(v, at)?;
        u32::try_from(c).map_err(|_| self.bad(at, format!("negative count {c}")))
    }

    fn range(&self, base: &Value, count: &Value, at: &Location) -> Result<Vec<u32>, LowerError> {
        let b = self.slot(base, at)?;
        let c = self.count(count, at)?;
        Ok((b..b + c).collect())
    }

    fn comm(&self, v: &Value, at: &Location) -> Result<(CommHandle, CommKey), LowerError> {
        match v {
            Value::Comm(i) => Ok(self.comms[*i].clone()),
            _ => Err(self.bad(at, "expected a communicator")),
        }
    }

    /// Translate a communicator-relative rank to a world rank.
    fn peer(&self, comm: &CommHandle, v: &Value, at: &Location, root: bool) -> Result<u32, LowerError> {
        let p = self.int(v, at)?;
        let world = u32::try_from(p).ok().and_then(|p| comm.world_rank(p));
        match world {
            Some(w) => Ok(w),
            None if root => Err(LowerError::RootOutOfRange {
                rank: self.rank,
                at: at.clone(),
                root: p,
                size: comm.size(),
            }),
            None => Err(LowerError::PeerOutOfRange {
                rank: self.rank,
                at: at.clone(),
                peer: p,
                size: comm.size(),
            }),
        }
    }

    fn call(
        &mut self,
        callee: &str,
        typed: &[TypedOperand],
        vals: Vec<Value>,
        attrs: &[crate::ir::Attr],
        at: &Location,
        depth: usize,
    ) -> Result<Value, LowerError> {
        if let Some(q) = QisFn::from_name(callee) {
            return self.qis(q, &vals, at);
        }
        if !callee.starts_with(NETQIR_PREFIX) {
            let f = self
                .program
                .function(callee)
                .filter(|f| !f.is_declaration())
                .ok_or_else(|| self.bad(at, format!("`@{callee}` has no definition")))?;
            return self.run(f, vals, depth + 1);
        }
        let class = classify(callee).map_err(|e| self.bad(at, e.to_string()))?;
        let _ = typed;
        use IntrinsicBase::*;
        match class.base {
            Initialize => return Ok(Value::Unit),
            Finalize => {
                self.events.push(Event::Finalize);
                return Ok(Value::Unit);
            }
            CommWorld => return Ok(Value::Comm(0)),
            CommRank => {
                let (c, _) = self.comm(&vals[0], at)?;
                return c
                    .rank_of(self.rank)
                    .map(|r| Value::Int(r.into()))
                    .map_err(|_| LowerError::NotAMember {
                        rank: self.rank,
                        at: at.clone(),
                    });
            }
            CommSize => {
                let (c, _) = self.comm(&vals[0], at)?;
                return Ok(Value::Int(c.size().into()));
            }
            GroupFromRanks => {
                let Value::List(items) = &vals[0] else {
                    return Err(self.bad(at, "expected a rank list"));
                };
                let ranks: Vec<u32> = items
                    .iter()
                    .map(|&r| u32::try_from(r).unwrap_or(u32::MAX))
                    .collect();
                let g = group_from_ranks(&ranks, self.world).map_err(|source| LowerError::Comm {
                    rank: self.rank,
                    at: at.clone(),
                    source,
                })?;
                return Ok(Value::Group(g.members().to_vec()));
            }
            CommFromGroup => {
                let Value::Group(members) = &vals[0] else {
                    return Err(self.bad(at, "expected a group"));
                };
                let g = group_from_ranks(members, self.world).expect("groups are checked on creation");
                let handle = comm_from_group(&g);
                let ord = self.ordinals.entry(members.clone()).or_insert(0);
                let key = CommKey {
                    members: members.clone(),
                    ordinal: *ord,
                };
                *ord += 1;
                self.comms.push((handle, key));
                return Ok(Value::Comm(self.comms.len() - 1));
            }
            _ => {}
        }

        let comm_arg = vals.last().expect("communication intrinsics take a communicator");
        let (comm, key) = self.comm(comm_arg, at)?;
        if !comm.contains(self.rank) {
            return Err(LowerError::NotAMember {
                rank: self.rank,
                at: at.clone(),
            });
        }
        let a = class.array;
        let op = match class.base {
            Qsend | MeasureSend => {
                let (slots, peer) = if a {
                    (self.range(&vals[0], &vals[1], at)?, &vals[2])
                } else {
                    (vec![self.slot(&vals[0], at)?], &vals[1])
                };
                let dest = self.peer(&comm, peer, at, false)?;
                if class.base == Qsend {
                    CommOp::QSend { slots, dest }
                } else {
                    CommOp::MSend { slots, dest }
                }
            }
            Qrecv => {
                let (slots, peer) = if a {
                    (self.range(&vals[0], &vals[1], at)?, &vals[2])
                } else {
                    (vec![self.slot(&vals[0], at)?], &vals[1])
                };
                let src = self.peer(&comm, peer, at, false)?;
                CommOp::QRecv { slots, src }
            }
            MeasureRecv => CommOp::MRecv {
                bits: self.range(&vals[0], &vals[1], at)?,
                src: self.peer(&comm, &vals[2], at, false)?,
            },
            Scatter | Gather | Reduce => {
                let kind = match class.base {
                    Scatter => CollectiveKind::Scatter,
                    Gather => CollectiveKind::Gather,
                    _ => CollectiveKind::Reduce(
                        find_attr(attrs, FOLD_ATTR)
                            .and_then(|a| a.value.as_deref())
                            .and_then(FoldGate::parse)
                            .unwrap_or_default(),
                    ),
                };
                CommOp::Collective {
                    kind,
                    send: self.range(&vals[0], &vals[1], at)?,
                    recv: self.range(&vals[2], &vals[3], at)?,
                    root: self.peer(&comm, &vals[4], at, true)?,
                }
            }
            Expose => {
                let (slots, root) = if a {
                    (self.range(&vals[0], &vals[1], at)?, &vals[2])
                } else {
                    (vec![self.slot(&vals[0], at)?], &vals[1])
                };
                CommOp::Expose {
                    slots,
                    root: self.peer(&comm, root, at, true)?,
                }
            }
            _ => unreachable!("handled above"),
        };
        match &op {
            CommOp::QSend { dest: p, .. }
            | CommOp::MSend { dest: p, .. }
            | CommOp::QRecv { src: p, .. }
            | CommOp::MRecv { src: p, .. }
                if *p == self.rank =>
            {
                return Err(LowerError::SelfMessage {
                    rank: self.rank,
                    at: at.clone(),
                });
            }
            _ => {}
        }
        self.events.push(Event::Comm(CommEvent {
            op,
            protocol: class.protocol,
            comm: key,
            name: callee.to_string(),
            at: at.clone(),
        }));
        Ok(Value::Unit)
    }

    fn qis(&mut self, q: QisFn, vals: &[Value], at: &Location) -> Result<Value, LowerError> {
        let gate = |g: Gate, slots: &[Value], m: &Self| -> Result<Event, LowerError> {
            Ok(Event::Gate {
                gate: g,
                slots: slots.iter().map(|v| m.slot(v, at)).collect::<Result<_, _>>()?,
            })
        };
        let ev = match q {
            QisFn::H => gate(Gate::H, vals, self)?,
            QisFn::X => gate(Gate::X, vals, self)?,
            QisFn::Z => gate(Gate::Z, vals, self)?,
            QisFn::Cnot => gate(Gate::Cnot, vals, self)?,
            QisFn::Cz => gate(Gate::Cz, vals, self)?,
            QisFn::Cp => {
                let Value::Float(theta) = vals[0] else {
                    return Err(self.bad(at, "rotation angle must be a constant"));
                };
                gate(Gate::Cp(theta), &vals[1..], self)?
            }
            QisFn::Mz => Event::Measure {
                slot: self.slot(&vals[0], at)?,
                bit: self.slot(&vals[1], at)?,
            },
            QisFn::Reset => Event::Reset {
                slot: self.slot(&vals[0], at)?,
            },
            QisFn::ReadResult => return Ok(Value::Runtime),
        };
        if let Event::Gate { slots, .. } = &ev {
            if slots.len() == 2 && slots[0] == slots[1] {
                return Err(self.bad(at, "two-qubit gate on a single slot"));
            }
        }
        self.events.push(ev);
        Ok(Value::Unit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::topology::qft_program;

    #[test]
    fn qft_ranks_see_their_epochs() {
        let events = unroll(&qft_program(2), 3).unwrap();
        let comm_count = |r: usize| events[r].iter().filter(|e| matches!(e, Event::Comm(_))).count();
        assert_eq!(comm_count(0), 1);
        assert_eq!(comm_count(1), 2);
        assert_eq!(comm_count(2), 2);
        assert_eq!(events[2].last(), Some(&Event::Finalize));
    }

    #[test]
    fn branch_on_measurement_is_rejected() {
        let text = r#"%Qubit = type opaque
%Result = type opaque

declare void @__quantum__qis__mz__body(%Qubit*, %Result*)
declare i1 @__quantum__qis__read_result__body(%Result*)

define void @main() "entry_point" "num_qubits"="1" {
entry:
  call void @__quantum__qis__mz__body(%Qubit* null, %Result* null)
  %b = call i1 @__quantum__qis__read_result__body(%Result* null)
  br i1 %b, label %a, label %c

a:
  ret void

c:
  ret void
}
"#;
        let p = parse(text).unwrap();
        assert!(matches!(unroll(&p, 1), Err(LowerError::RuntimeBranch { rank: 0, .. })));
    }
}
