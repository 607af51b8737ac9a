use std::fmt;

use crate::ir::Gate;

/// A participant in the lowered program: a compute rank, or the relay agent
/// serving one session on a star topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Rank(u32),
    Relay(u32),
}

impl Node {
    pub fn rank(self) -> Option<u32> {
        match self {
            Node::Rank(r) => Some(r),
            Node::Relay(_) => None,
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Rank(r) => write!(f, "rank{r}"),
            Node::Relay(s) => write!(f, "relay{s}"),
        }
    }
}

/// Physical qubit identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QubitId {
    /// The static data qubit behind `slot` on `rank`.
    Data { rank: u32, slot: u32 },
    /// A communication qubit created by an allocation.
    Comm(u32),
}

impl fmt::Display for QubitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QubitId::Data { rank, slot } => write!(f, "q{rank}.{slot}"),
            QubitId::Comm(id) => write!(f, "c{id}"),
        }
    }
}

/// Classical bit in a node's register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bit {
    /// Result slot visible to the source program.
    User(u32),
    /// Bit introduced by a protocol expansion.
    Proto(u32),
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bit::User(n) => write!(f, "r{n}"),
            Bit::Proto(n) => write!(f, "m{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Z,
}

impl Pauli {
    pub fn gate(self) -> Gate {
        match self {
            Pauli::X => Gate::X,
            Pauli::Z => Gate::Z,
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pauli::X => "X",
            Pauli::Z => "Z",
        })
    }
}

/// One operation of a lowered per-node program.
///
/// `Q` is the qubit reference type; expansion builds ops over slot
/// placeholders and resolves them to [`QubitId`]s per node.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveOp<Q = QubitId> {
    /// Create `(|00⟩+|11⟩)/√2` between `local` here and `remote` on `peer`.
    /// `relay` is set when the pair is produced by swapping through a relay.
    AllocEpr {
        local: Q,
        remote: QubitId,
        peer: Node,
        relay: Option<Node>,
        charge: u32,
    },
    /// Create `(|0…0⟩+|1…1⟩)/√2` with one qubit on each listed node.
    AllocGhz {
        qubits: Vec<(Node, QubitId)>,
        charge: u32,
    },
    Gate { gate: Gate, qubits: Vec<Q> },
    Measure { qubit: Q, bit: Bit },
    Reset { qubit: Q },
    CSend { bits: Vec<Bit>, dest: Node, tag: u32 },
    CRecv { bits: Vec<Bit>, source: Node, tag: u32 },
    /// Apply `gate` iff the XOR of `bits` is 1.
    CondCorrection { gate: Pauli, qubit: Q, bits: Vec<Bit> },
    SyncPoint { id: u32 },
}

impl<Q: Copy> PrimitiveOp<Q> {
    pub fn map_qubits<R>(&self, mut f: impl FnMut(Q) -> R) -> PrimitiveOp<R> {
        match self {
            PrimitiveOp::AllocEpr {
                local,
                remote,
                peer,
                relay,
                charge,
            } => PrimitiveOp::AllocEpr {
                local: f(*local),
                remote: *remote,
                peer: *peer,
                relay: *relay,
                charge: *charge,
            },
            PrimitiveOp::AllocGhz { qubits, charge } => PrimitiveOp::AllocGhz {
                qubits: qubits.clone(),
                charge: *charge,
            },
            PrimitiveOp::Gate { gate, qubits } => PrimitiveOp::Gate {
                gate: *gate,
                qubits: qubits.iter().map(|&q| f(q)).collect(),
            },
            PrimitiveOp::Measure { qubit, bit } => PrimitiveOp::Measure {
                qubit: f(*qubit),
                bit: *bit,
            },
            PrimitiveOp::Reset { qubit } => PrimitiveOp::Reset { qubit: f(*qubit) },
            PrimitiveOp::CSend { bits, dest, tag } => PrimitiveOp::CSend {
                bits: bits.clone(),
                dest: *dest,
                tag: *tag,
            },
            PrimitiveOp::CRecv { bits, source, tag } => PrimitiveOp::CRecv {
                bits: bits.clone(),
                source: *source,
                tag: *tag,
            },
            PrimitiveOp::CondCorrection { gate, qubit, bits } => PrimitiveOp::CondCorrection {
                gate: *gate,
                qubit: f(*qubit),
                bits: bits.clone(),
            },
            PrimitiveOp::SyncPoint { id } => PrimitiveOp::SyncPoint { id: *id },
        }
    }

    pub fn map_bits(&self, mut f: impl FnMut(Bit) -> Bit) -> PrimitiveOp<Q> {
        let mut out = self.clone();
        match &mut out {
            PrimitiveOp::Measure { bit, .. } => *bit = f(*bit),
            PrimitiveOp::CSend { bits, .. }
            | PrimitiveOp::CRecv { bits, .. }
            | PrimitiveOp::CondCorrection { bits, .. } => {
                for b in bits.iter_mut() {
                    *b = f(*b);
                }
            }
            _ => {}
        }
        out
    }
}

impl PrimitiveOp {
    /// Communication qubits charged by this op under the cost model.
    pub fn charge(&self) -> u32 {
        match self {
            PrimitiveOp::AllocEpr { charge, .. } | PrimitiveOp::AllocGhz { charge, .. } => *charge,
            _ => 0,
        }
    }

    /// Peer node this op waits on, for blocking classical ops.
    pub fn peer(&self) -> Option<Node> {
        match self {
            PrimitiveOp::CSend { dest, .. } => Some(*dest),
            PrimitiveOp::CRecv { source, .. } => Some(*source),
            _ => None,
        }
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

impl fmt::Display for PrimitiveOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimitiveOp::AllocEpr {
                local,
                remote,
                peer,
                relay,
                charge,
            } => {
                write!(f, "alloc_epr {local} {remote}@{peer}")?;
                if let Some(r) = relay {
                    write!(f, " via {r}")?;
                }
                write!(f, " charge {charge}")
            }
            PrimitiveOp::AllocGhz { qubits, charge } => {
                f.write_str("alloc_ghz")?;
                for (n, q) in qubits {
                    write!(f, " {q}@{n}")?;
                }
                write!(f, " charge {charge}")
            }
            PrimitiveOp::Gate { gate, qubits } => write!(f, "gate {gate} {}", join(qubits)),
            PrimitiveOp::Measure { qubit, bit } => write!(f, "measure {qubit} -> {bit}"),
            PrimitiveOp::Reset { qubit } => write!(f, "reset {qubit}"),
            PrimitiveOp::CSend { bits, dest, tag } => {
                write!(f, "csend [{}] -> {dest} tag {tag}", join(bits))
            }
            PrimitiveOp::CRecv { bits, source, tag } => {
                write!(f, "crecv [{}] <- {source} tag {tag}", join(bits))
            }
            PrimitiveOp::CondCorrection { gate, qubit, bits } => {
                let parity: Vec<String> = bits.iter().map(|b| b.to_string()).collect();
                write!(f, "cond {gate} {qubit} if {}", parity.join("^"))
            }
            PrimitiveOp::SyncPoint { id } => write!(f, "sync {id}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_forms() {
        let op: PrimitiveOp = PrimitiveOp::CondCorrection {
            gate: Pauli::Z,
            qubit: QubitId::Data { rank: 0, slot: 1 },
            bits: vec![Bit::Proto(0), Bit::Proto(3)],
        };
        assert_eq!(op.to_string(), "cond Z q0.1 if m0^m3");
        let op: PrimitiveOp = PrimitiveOp::AllocEpr {
            local: QubitId::Comm(0),
            remote: QubitId::Comm(1),
            peer: Node::Rank(2),
            relay: Some(Node::Relay(4)),
            charge: 4,
        };
        assert_eq!(op.to_string(), "alloc_epr c0 c1@rank2 via relay4 charge 4");
    }

    #[test]
    fn ranks_sort_before_relays() {
        assert!(Node::Rank(9) < Node::Relay(0));
    }
}
