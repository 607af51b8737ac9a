use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::state::GlobalState;
use super::{Blocked, SimConfig, SimError};
use crate::lowering::{Bit, LoweredProgram, Node, PrimitiveOp, QubitId};

#[derive(Debug, Clone)]
pub struct SimResult {
    pub state: GlobalState,
    /// Classical bits written at each node.
    pub bits: BTreeMap<Node, BTreeMap<Bit, bool>>,
    pub transcript: Vec<String>,
    pub final_bindings: BTreeMap<(u32, u32), QubitId>,
    pub steps: u64,
}

impl SimResult {
    /// Physical qubit behind a rank's slot at the end of the run.
    pub fn qubit(&self, rank: u32, slot: u32) -> QubitId {
        self.final_bindings
            .get(&(rank, slot))
            .copied()
            .unwrap_or(QubitId::Data { rank, slot })
    }

    pub fn user_bit(&self, rank: u32, bit: u32) -> Option<bool> {
        self.bits.get(&Node::Rank(rank))?.get(&Bit::User(bit)).copied()
    }
}

fn node_label(n: Node) -> String {
    match n {
        Node::Rank(r) => format!("rank {r}"),
        Node::Relay(s) => format!("relay {s}"),
    }
}

struct Run<'a> {
    state: GlobalState,
    rng: ChaCha8Rng,
    bits: BTreeMap<Node, BTreeMap<Bit, bool>>,
    transcript: Vec<String>,
    keep_transcript: bool,
    step: u64,
    programs: &'a BTreeMap<Node, Vec<PrimitiveOp>>,
}

impl Run<'_> {
    fn log(&mut self, node: Node, op: &PrimitiveOp, result: Option<String>) {
        self.step += 1;
        if self.keep_transcript {
            let mut line = format!("step {} {} {op}", self.step, node_label(node));
            if let Some(r) = result {
                line.push_str(" = ");
                line.push_str(&r);
            }
            self.transcript.push(line);
        }
    }

    fn read(&self, node: Node, bits: &[Bit]) -> Result<bool, SimError> {
        let file = self.bits.get(&node);
        let mut parity = false;
        for b in bits {
            match file.and_then(|f| f.get(b)) {
                Some(v) => parity ^= v,
                None => {
                    return Err(SimError::UnsetBit {
                        node: node.to_string(),
                        bit: b.to_string(),
                    })
                }
            }
        }
        Ok(parity)
    }

    /// Run `op` at `node` unless it must wait for a peer.
    fn exec(&mut self, node: Node, op: &PrimitiveOp, pcs: &mut BTreeMap<Node, usize>) -> Result<bool, SimError> {
        match op {
            PrimitiveOp::AllocEpr { local, remote, .. } => {
                self.state.alloc_cat(&[*local, *remote])?;
                self.log(node, op, None);
            }
            PrimitiveOp::AllocGhz { qubits, .. } => {
                let qs: Vec<QubitId> = qubits.iter().map(|(_, q)| *q).collect();
                self.state.alloc_cat(&qs)?;
                self.log(node, op, None);
            }
            PrimitiveOp::Gate { gate, qubits } => {
                self.state.apply(*gate, qubits)?;
                self.log(node, op, None);
            }
            PrimitiveOp::Measure { qubit, bit } => {
                let v = self.state.measure(*qubit, &mut self.rng)?;
                self.bits.entry(node).or_default().insert(*bit, v);
                self.log(node, op, Some(u8::from(v).to_string()));
            }
            PrimitiveOp::Reset { qubit } => {
                self.state.reset(*qubit, &mut self.rng)?;
                self.log(node, op, None);
            }
            PrimitiveOp::CondCorrection { gate, qubit, bits } => {
                let fire = self.read(node, bits)?;
                if fire {
                    self.state.apply(gate.gate(), &[*qubit])?;
                }
                self.log(node, op, Some(u8::from(fire).to_string()));
            }
            PrimitiveOp::SyncPoint { .. } => self.log(node, op, None),
            PrimitiveOp::CRecv { .. } => return Ok(false),
            PrimitiveOp::CSend { bits, dest, tag } => {
                let dpc = pcs.get(dest).copied().unwrap_or(0);
                let Some(recv) = self.programs.get(dest).and_then(|p| p.get(dpc)) else {
                    return Ok(false);
                };
                let PrimitiveOp::CRecv {
                    bits: into,
                    source,
                    tag: rtag,
                } = recv
                else {
                    return Ok(false);
                };
                if *source != node || rtag != tag {
                    return Ok(false);
                }
                if into.len() != bits.len() {
                    return Err(SimError::MessageShape {
                        from: node.to_string(),
                        to: dest.to_string(),
                        sent: bits.len(),
                        expected: into.len(),
                    });
                }
                let values: Vec<bool> = bits
                    .iter()
                    .map(|b| self.read(node, std::slice::from_ref(b)))
                    .collect::<Result<_, _>>()?;
                let shown: String = values.iter().map(|&v| if v { '1' } else { '0' }).collect();
                self.log(node, op, Some(shown.clone()));
                let file = self.bits.entry(*dest).or_default();
                for (b, v) in into.iter().zip(values) {
                    file.insert(*b, v);
                }
                self.log(*dest, recv, Some(shown));
                *pcs.get_mut(dest).expect("destination has a program") += 1;
            }
        }
        Ok(true)
    }
}

/// Execute every node of `lowered` with rendezvous messaging.
pub fn simulate(lowered: &LoweredProgram, cfg: &SimConfig) -> Result<SimResult, SimError> {
    let mut run = Run {
        state: GlobalState::new(cfg.cap, cfg.initial.clone()),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        bits: BTreeMap::new(),
        transcript: Vec::new(),
        keep_transcript: cfg.transcript,
        step: 0,
        programs: &lowered.nodes,
    };
    let mut pcs: BTreeMap<Node, usize> = lowered.nodes.keys().map(|&n| (n, 0)).collect();
    let nodes: Vec<Node> = lowered.nodes.keys().copied().collect();
    loop {
        let mut progressed = false;
        for &n in &nodes {
            let prog = &lowered.nodes[&n];
            while let Some(op) = prog.get(pcs[&n]) {
                if !run.exec(n, op, &mut pcs)? {
                    break;
                }
                *pcs.get_mut(&n).expect("known node") += 1;
                progressed = true;
            }
        }
        let unfinished = nodes.iter().any(|n| pcs[n] < lowered.nodes[n].len());
        if !unfinished {
            break;
        }
        if !progressed {
            let blocked = nodes
                .iter()
                .filter_map(|n| {
                    let (op, peer) = match lowered.nodes[n].get(pcs[n])? {
                        PrimitiveOp::CSend { dest, .. } => ("csend", *dest),
                        PrimitiveOp::CRecv { source, .. } => ("crecv", *source),
                        _ => unreachable!("only messages block"),
                    };
                    Some(Blocked { node: *n, op, peer })
                })
                .collect();
            return Err(SimError::Deadlock { blocked });
        }
    }
    Ok(SimResult {
        state: run.state,
        bits: run.bits,
        transcript: run.transcript,
        final_bindings: lowered.final_bindings.clone(),
        steps: run.step,
    })
}
