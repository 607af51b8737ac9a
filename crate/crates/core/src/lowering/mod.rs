//! Lowering of NetQIR programs into per-node primitive programs.
//!
//! The entry function is interpreted once per rank to get a straight-line
//! event list. Communication events are matched into sessions, each session
//! gets a protocol scheme, and the scheme is expanded into EPR/GHZ allocation,
//! local gates, measurements and classical messages.

mod expand;
mod plan;
mod primitive;
mod unroll;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ir::comm::CommError;
use crate::ir::validate::{validate, Diagnostic, Severity};
use crate::ir::{Location, Program, Protocol};
use crate::topology::Topology;

pub(crate) use plan::{Plan, Scheme, Shape};
pub(crate) use unroll::{CollectiveKind, CommOp, Event};
pub use primitive::{Bit, Node, Pauli, PrimitiveOp, QubitId};

/// How `expose` is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExposeScheme {
    /// One GHZ state per exposed qubit.
    #[default]
    Ghz,
    /// The state visits each remote in turn and comes back.
    Teledata,
    /// One cat-entangled reference per remote.
    Telegate,
}

impl ExposeScheme {
    pub fn keyword(self) -> &'static str {
        match self {
            ExposeScheme::Ghz => "ghz",
            ExposeScheme::Teledata => "teledata",
            ExposeScheme::Telegate => "telegate",
        }
    }
}

impl FromStr for ExposeScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ghz" => Ok(ExposeScheme::Ghz),
            "teledata" => Ok(ExposeScheme::Teledata),
            "telegate" => Ok(ExposeScheme::Telegate),
            _ => Err(format!("unknown expose scheme `{s}` (expected ghz, teledata or telegate)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LowerOptions {
    /// Protocol for sessions whose intrinsics carry no suffix.
    pub default_protocol: Protocol,
    pub expose_scheme: ExposeScheme,
    /// Drop endpoints with no counterpart instead of failing.
    pub allow_unmatched: bool,
}

#[derive(Debug, Clone, Error)]
pub enum LowerError {
    #[error("program has {} error diagnostic(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
    #[error("no entry point")]
    NoEntry,
    #[error("rank {rank} at {at}: {message}")]
    Unsupported { rank: u32, at: Location, message: String },
    #[error("rank {rank} exceeded {limit} interpreted instructions")]
    StepLimit { rank: u32, limit: usize },
    #[error("rank {rank} at {at}: branch depends on a measurement result")]
    RuntimeBranch { rank: u32, at: Location },
    #[error("rank {rank} at {at}: rank is not a member of the communicator")]
    NotAMember { rank: u32, at: Location },
    #[error("rank {rank} at {at}: {source}")]
    Comm { rank: u32, at: Location, source: CommError },
    #[error("rank {rank} at {at}: root {root} out of range for communicator of size {size}")]
    RootOutOfRange { rank: u32, at: Location, root: i64, size: u32 },
    #[error("rank {rank} at {at}: peer {peer} out of range for communicator of size {size}")]
    PeerOutOfRange { rank: u32, at: Location, peer: i64, size: u32 },
    #[error("rank {rank} at {at}: message addressed to self")]
    SelfMessage { rank: u32, at: Location },
    #[error("rank {rank} at {at}: `{name}` has no matching endpoint ({detail})")]
    UnmatchedEndpoint { rank: u32, at: Location, name: String, detail: String },
    #[error("{at}: collective sequence diverges: {detail}")]
    CollectiveMismatch { at: Location, detail: String },
    #[error("{at}: `{name}` counts disagree: {detail}")]
    CountMismatch { at: Location, name: String, detail: String },
    #[error("{at}: `{name}` count {count} is not divisible by communicator size {size}")]
    IndivisibleCount { at: Location, name: String, count: u32, size: u32 },
    #[error("{at}: conflicting protocols: {first} vs {second}")]
    ProtocolMismatch { at: Location, first: String, second: String },
    #[error("rank {rank} at {at}: reference from `{name}` used by {detail}")]
    ReferenceMisuse { rank: u32, at: Location, name: String, detail: String },
}

impl LowerError {
    /// Stable rule id.
    pub fn kind(&self) -> &'static str {
        match self {
            LowerError::Invalid(_) => "invalid-program",
            LowerError::NoEntry => "no-entry",
            LowerError::Unsupported { .. } => "unsupported",
            LowerError::StepLimit { .. } => "step-limit",
            LowerError::RuntimeBranch { .. } => "runtime-branch",
            LowerError::NotAMember { .. } => "not-a-member",
            LowerError::Comm { .. } => "communicator",
            LowerError::RootOutOfRange { .. } => "root-out-of-range",
            LowerError::PeerOutOfRange { .. } => "peer-out-of-range",
            LowerError::SelfMessage { .. } => "self-message",
            LowerError::UnmatchedEndpoint { .. } => "unmatched-endpoint",
            LowerError::CollectiveMismatch { .. } => "collective-mismatch",
            LowerError::CountMismatch { .. } => "count-mismatch",
            LowerError::IndivisibleCount { .. } => "indivisible-count",
            LowerError::ProtocolMismatch { .. } => "protocol-mismatch",
            LowerError::ReferenceMisuse { .. } => "reference-misuse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionInfo {
    pub id: u32,
    /// Intrinsic name with its protocol suffix stripped.
    pub name: String,
    pub scheme: String,
    pub ranks: Vec<u32>,
    /// Communication qubits consumed.
    pub charge: u64,
    pub syncs: u32,
}

/// Resource usage of a lowered program.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    /// Communication qubits allocated at each node, relay swaps included.
    pub held: BTreeMap<Node, u64>,
    pub consumed: u64,
    pub syncs: u64,
}

#[derive(Debug, Clone)]
pub struct LoweredProgram {
    pub world_size: u32,
    pub topology: Topology,
    pub num_qubits: u32,
    pub nodes: BTreeMap<Node, Vec<PrimitiveOp>>,
    pub ledger: Ledger,
    pub sessions: Vec<SessionInfo>,
    /// Physical qubit behind each `(rank, slot)` after the program ends.
    pub final_bindings: BTreeMap<(u32, u32), QubitId>,
}

impl LoweredProgram {
    fn new(
        world_size: u32,
        topology: Topology,
        num_qubits: u32,
        nodes: BTreeMap<Node, Vec<PrimitiveOp>>,
        sessions: Vec<SessionInfo>,
        final_bindings: BTreeMap<(u32, u32), QubitId>,
    ) -> Self {
        let mut ledger = Ledger::default();
        for (&node, ops) in &nodes {
            for op in ops {
                ledger.consumed += u64::from(op.charge());
                match op {
                    PrimitiveOp::AllocEpr { peer, relay, .. } => {
                        *ledger.held.entry(node).or_default() += 1;
                        *ledger.held.entry(*peer).or_default() += 1;
                        if let Some(r) = relay {
                            *ledger.held.entry(*r).or_default() += 2;
                        }
                    }
                    PrimitiveOp::AllocGhz { qubits, .. } => {
                        for (n, _) in qubits {
                            *ledger.held.entry(*n).or_default() += 1;
                        }
                    }
                    PrimitiveOp::SyncPoint { .. } => ledger.syncs += 1,
                    _ => {}
                }
            }
        }
        LoweredProgram {
            world_size,
            topology,
            num_qubits,
            nodes,
            ledger,
            sessions,
            final_bindings,
        }
    }

    pub fn ops(&self, node: Node) -> &[PrimitiveOp] {
        self.nodes.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn op_count(&self) -> usize {
        self.nodes.values().map(Vec::len).sum()
    }
}

impl fmt::Display for LoweredProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "world {} topology {}", self.world_size, self.topology.kind)?;
        for (node, ops) in &self.nodes {
            match node {
                Node::Rank(r) => writeln!(f, "rank {r}:")?,
                Node::Relay(s) => writeln!(f, "relay {s}:")?,
            }
            for op in ops {
                writeln!(f, "  {op}")?;
            }
        }
        writeln!(f, "ledger:")?;
        for (node, n) in &self.ledger.held {
            writeln!(f, "  {node} holds {n}")?;
        }
        writeln!(f, "  consumed {}", self.ledger.consumed)?;
        writeln!(f, "  syncs {}", self.ledger.syncs)?;
        writeln!(f, "sessions:")?;
        for s in &self.sessions {
            let ranks: Vec<String> = s.ranks.iter().map(u32::to_string).collect();
            writeln!(
                f,
                "  s{} {} {} ranks {} charge {} syncs {}",
                s.id,
                s.name,
                s.scheme,
                ranks.join(","),
                s.charge,
                s.syncs
            )?;
        }
        writeln!(f, "bindings:")?;
        for (&(rank, slot), q) in &self.final_bindings {
            if *q != (QubitId::Data { rank, slot }) {
                writeln!(f, "  q{rank}.{slot} -> {q}")?;
            }
        }
        Ok(())
    }
}

/// Lower with default options apart from the protocol.
pub fn lower(program: &Program, topology: Topology, default_protocol: Protocol) -> Result<LoweredProgram, LowerError> {
    let opts = LowerOptions {
        default_protocol,
        ..LowerOptions::default()
    };
    lower_with(program, topology, &opts)
}

pub fn lower_with(program: &Program, topology: Topology, opts: &LowerOptions) -> Result<LoweredProgram, LowerError> {
    let plan = analyze(program, topology, opts)?;
    Ok(expand::expand(&plan))
}

/// Everything up to expansion: validated, unrolled, matched and placed.
pub(crate) fn analyze(program: &Program, topology: Topology, opts: &LowerOptions) -> Result<Plan, LowerError> {
    let errors: Vec<Diagnostic> = validate(program)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(LowerError::Invalid(errors));
    }
    let entry = program.entry().ok_or(LowerError::NoEntry)?;
    let num_qubits = entry.num_qubits().unwrap_or(0);
    let events = unroll::unroll(program, topology.qpus)?;
    plan::plan(events, num_qubits, topology, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::topology::{analyze_qft, qft_program, CostProtocol, TopologyKind};

    const TELEPORT: &str = r#"
%Qubit = type opaque
%Comm = type opaque

define void @main() "entry_point" "num_qubits"="1" {
entry:
  call void @__netqir__initialize()
  %w = call %Comm* @__netqir__comm_world()
  %r = call i32 @__netqir__comm_rank(%Comm* %w)
  %is0 = icmp eq i32 %r, 0
  br i1 %is0, label %send, label %recv

send:
  call void @__netqir__qsend_teledata(%Qubit* null, i32 1, %Comm* %w)
  br label %done

recv:
  call void @__netqir__qrecv_teledata(%Qubit** null, i32 0, %Comm* %w)
  br label %done

done:
  call void @__netqir__finalize()
  ret void
}

declare void @__netqir__initialize()
declare %Comm* @__netqir__comm_world()
declare i32 @__netqir__comm_rank(%Comm*)
declare void @__netqir__qsend_teledata(%Qubit*, i32, %Comm*)
declare void @__netqir__qrecv_teledata(%Qubit**, i32, %Comm*)
declare void @__netqir__finalize()
"#;

    fn ghz_for(p: CostProtocol) -> LowerOptions {
        LowerOptions {
            expose_scheme: match p {
                CostProtocol::Teledata => ExposeScheme::Teledata,
                CostProtocol::Telegate => ExposeScheme::Telegate,
                CostProtocol::Expose => ExposeScheme::Ghz,
            },
            ..LowerOptions::default()
        }
    }

    #[test]
    fn teleport_uses_one_sync_and_resets_sender() {
        let prog = parse(TELEPORT).unwrap();
        let low = lower(&prog, Topology::direct(2), Protocol::Unspecified).unwrap();
        assert_eq!(low.ledger.syncs, 1);
        assert_eq!(low.ledger.consumed, 2);
        let sender = low.ops(Node::Rank(0));
        assert!(matches!(
            sender.last(),
            Some(PrimitiveOp::Reset {
                qubit: QubitId::Data { rank: 0, slot: 0 }
            })
        ));
        assert!(matches!(low.final_bindings[&(1, 0)], QubitId::Comm(_)));
    }

    #[test]
    fn teleport_through_hub_charges_swap() {
        let prog = parse(TELEPORT).unwrap();
        let low = lower(&prog, Topology::communicator(2), Protocol::Unspecified).unwrap();
        assert_eq!(low.ledger.consumed, 4);
        assert_eq!(low.ledger.held[&Node::Relay(0)], 2);
    }

    #[test]
    fn qft_ledger_matches_cost_model() {
        for n in 2..=8u32 {
            for p in CostProtocol::ALL {
                for kind in TopologyKind::ALL {
                    let prog = qft_program(n - 1);
                    let topo = Topology { kind, qpus: n };
                    let low = lower_with(&prog, topo, &ghz_for(p)).unwrap();
                    let want = analyze_qft(n, p, kind);
                    assert_eq!(low.ledger.consumed, want.consumed, "{p:?} {kind} N={n}");
                    assert_eq!(low.ledger.syncs, want.syncs, "{p:?} {kind} N={n}");
                }
            }
        }
    }

    #[test]
    fn uninitialized_program_is_rejected() {
        let text = TELEPORT.replace("  call void @__netqir__initialize()\n", "");
        let prog = parse(&text).unwrap();
        let err = lower(&prog, Topology::direct(2), Protocol::Unspecified).unwrap_err();
        assert_eq!(err.kind(), "invalid-program");
    }

    #[test]
    fn three_ranks_leave_one_endpoint_unmatched() {
        let prog = parse(TELEPORT).unwrap();
        let err = lower(&prog, Topology::direct(3), Protocol::Unspecified).unwrap_err();
        assert_eq!(err.kind(), "unmatched-endpoint");
        let opts = LowerOptions {
            allow_unmatched: true,
            ..LowerOptions::default()
        };
        assert!(lower_with(&prog, Topology::direct(3), &opts).is_ok());
    }
}
