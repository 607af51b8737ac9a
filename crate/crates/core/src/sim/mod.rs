//! State-vector simulation of lowered programs.
//!
//! [`simulate`] runs every node of a [`LoweredProgram`](crate::lowering::LoweredProgram)
//! over one global state vector, pairing each `csend` with the matching
//! `crecv`. [`simulate_monolithic`] runs the source program on a single
//! device and is the reference the distributed run is checked against.

mod engine;
mod monolithic;
mod state;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::lowering::{LowerError, Node};

pub use engine::{simulate, SimResult};
pub use monolithic::{simulate_monolithic, simulate_monolithic_with, MonoResult};
pub use state::{
    basis, fidelity, fidelity_mixed, matrix_distance, phase_distance, Entry, GlobalState, TOLERANCE,
};

pub const DEFAULT_QUBIT_CAP: usize = 20;
pub const QUBIT_CAP_ENV: &str = "NETQIR_QUBIT_CAP";

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    /// Maximum number of simultaneously live qubits.
    pub cap: usize,
    /// Starting state of data qubits, keyed by `(rank, slot)`. Others start in `|0>`.
    pub initial: BTreeMap<(u32, u32), [Complex64; 2]>,
    pub transcript: bool,
}

impl SimConfig {
    /// Seeded config; the cap comes from `NETQIR_QUBIT_CAP` when set.
    pub fn new(seed: u64) -> Self {
        let cap = std::env::var(QUBIT_CAP_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(DEFAULT_QUBIT_CAP);
        SimConfig {
            seed,
            cap,
            initial: BTreeMap::new(),
            transcript: false,
        }
    }

    pub fn with_initial(mut self, rank: u32, slot: u32, v: [Complex64; 2]) -> Self {
        self.initial.insert((rank, slot), v);
        self
    }

    pub fn with_transcript(mut self) -> Self {
        self.transcript = true;
        self
    }
}

/// A node stuck waiting on a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocked {
    pub node: Node,
    pub op: &'static str,
    pub peer: Node,
}

impl fmt::Display for Blocked {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} blocked in {} with {}", self.node, self.op, self.peer)
    }
}

fn list_blocked(b: &[Blocked]) -> String {
    b.iter().map(Blocked::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("deadlock detected: {}", list_blocked(.blocked))]
    Deadlock { blocked: Vec<Blocked> },
    #[error("capacity exceeded: adding {qubit} would exceed {cap} live qubits")]
    Capacity { cap: usize, qubit: String },
    #[error("norm drifted to {norm}")]
    NormDrift { norm: f64 },
    #[error("qubit {qubit} used before allocation")]
    Unallocated { qubit: String },
    #[error("{node} read bit {bit} before it was written")]
    UnsetBit { node: String, bit: String },
    #[error("message from {from} to {to} carries {sent} bits, receiver expects {expected}")]
    MessageShape {
        from: String,
        to: String,
        sent: usize,
        expected: usize,
    },
    #[error("`{name}` has missing participants")]
    Unmatched { name: String },
    #[error("subset is not separable from the rest of the state")]
    Entangled,
    #[error("bad qubit subset: {0}")]
    Subset(String),
    #[error(transparent)]
    Lower(#[from] LowerError),
}

impl SimError {
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Deadlock { .. } => "deadlock-detected",
            SimError::Capacity { .. } => "capacity-exceeded",
            SimError::NormDrift { .. } => "norm-drift",
            SimError::Unallocated { .. } => "unallocated",
            SimError::UnsetBit { .. } => "unset-bit",
            SimError::MessageShape { .. } => "message-shape",
            SimError::Unmatched { .. } => "unmatched",
            SimError::Entangled => "entangled",
            SimError::Subset(_) => "mismatched-subset",
            SimError::Lower(e) => e.kind(),
        }
    }
}
