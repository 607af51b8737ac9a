//! Physical topology models and the communication cost analyzer.
//!
//! Costs are per QFT epoch, where an epoch shares one root qubit with `k`
//! remote participants. The closed forms are fitted to reference curves,
//! which the acceptance tests check point by point.

mod qft;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use qft::{qft_epochs, qft_program, qft_rotation, Epoch, QFT_DATA_SLOT, QFT_REF_SLOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum TopologyKind {
    /// Complete graph: every pair of QPUs shares a quantum link.
    #[serde(rename = "direct")]
    DirectConnected,
    /// Star: every QPU links only to one relay node that runs no program of its own.
    #[serde(rename = "communicator")]
    ViaCommunicator,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 2] = [TopologyKind::DirectConnected, TopologyKind::ViaCommunicator];

    pub fn keyword(self) -> &'static str {
        match self {
            TopologyKind::DirectConnected => "direct",
            TopologyKind::ViaCommunicator => "communicator",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" | "d-c" => Ok(TopologyKind::DirectConnected),
            "communicator" | "t-1c" => Ok(TopologyKind::ViaCommunicator),
            _ => Err(format!("unknown topology `{s}` (expected direct or communicator)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Topology {
    pub kind: TopologyKind,
    pub qpus: u32,
}

impl Topology {
    pub fn direct(qpus: u32) -> Topology {
        Topology {
            kind: TopologyKind::DirectConnected,
            qpus,
        }
    }

    pub fn communicator(qpus: u32) -> Topology {
        Topology {
            kind: TopologyKind::ViaCommunicator,
            qpus,
        }
    }

    /// Quantum links as unordered QPU pairs; relay links use `qpus` as the relay index.
    pub fn links(&self) -> Vec<(u32, u32)> {
        match self.kind {
            TopologyKind::DirectConnected => (0..self.qpus)
                .flat_map(|a| (a + 1..self.qpus).map(move |b| (a, b)))
                .collect(),
            TopologyKind::ViaCommunicator => (0..self.qpus).map(|a| (a, self.qpus)).collect(),
        }
    }
}

/// Strategy used for one shared-qubit epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CostProtocol {
    Teledata,
    Telegate,
    Expose,
}

impl CostProtocol {
    pub const ALL: [CostProtocol; 3] = [CostProtocol::Teledata, CostProtocol::Telegate, CostProtocol::Expose];

    pub fn keyword(self) -> &'static str {
        match self {
            CostProtocol::Teledata => "teledata",
            CostProtocol::Telegate => "telegate",
            CostProtocol::Expose => "expose",
        }
    }
}

impl fmt::Display for CostProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for CostProtocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "teledata" => Ok(CostProtocol::Teledata),
            "telegate" => Ok(CostProtocol::Telegate),
            "expose" => Ok(CostProtocol::Expose),
            _ => Err(format!("unknown protocol `{s}` (expected teledata, telegate or expose)")),
        }
    }
}

/// Communication qubits consumed by one epoch with `k >= 1` remote participants.
pub fn per_epoch_cost(protocol: CostProtocol, topology: TopologyKind, k: u64) -> u64 {
    use CostProtocol::*;
    use TopologyKind::*;
    match (protocol, topology) {
        // Out and back: two EPR pairs per remote operation.
        (Teledata, DirectConnected) => 4 * k,
        (Telegate, DirectConnected) => 2 * k,
        // One GHZ share per participant, root included.
        (Expose, DirectConnected) => k + 1,
        // The relay link to the root adds one more hop of the same kind.
        (Teledata, ViaCommunicator) => 4 * (k + 1),
        (Telegate, ViaCommunicator) => 2 * (k + 1),
        (Expose, ViaCommunicator) => {
            if k == 1 {
                0
            } else {
                2 * k
            }
        }
    }
}

/// Synchronisation rounds of one epoch with `k` remote participants.
pub fn per_epoch_syncs(protocol: CostProtocol, topology: TopologyKind, k: u64) -> u64 {
    use CostProtocol::*;
    use TopologyKind::*;
    match (protocol, topology) {
        (Teledata | Telegate, DirectConnected) => 2 * k,
        (Teledata | Telegate, ViaCommunicator) => 2 * (k + 1),
        (Expose, _) => 2,
    }
}

/// Communication qubits a single QPU must hold available at once.
pub fn needed_per_qpu(protocol: CostProtocol, topology: TopologyKind, n_qpus: u64) -> u64 {
    use CostProtocol::*;
    use TopologyKind::*;
    match (protocol, topology) {
        (Teledata, DirectConnected) => 2 * n_qpus,
        (Telegate, DirectConnected) => n_qpus,
        (Teledata, ViaCommunicator) => 2,
        (Telegate, ViaCommunicator) => 1,
        (Expose, _) => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub consumed: u64,
    pub needed_per_qpu: u64,
    pub syncs: u64,
}

/// Cost of the distributed QFT over `n_qpus` QPUs (one qubit per QPU).
pub fn analyze_qft(n_qpus: u32, protocol: CostProtocol, topology: TopologyKind) -> CostReport {
    assert!(n_qpus >= 2, "the QFT needs at least two QPUs");
    let n = u64::from(n_qpus);
    let ks = 1..n;
    CostReport {
        consumed: ks.clone().map(|k| per_epoch_cost(protocol, topology, k)).sum(),
        needed_per_qpu: needed_per_qpu(protocol, topology, n),
        syncs: ks.map(|k| per_epoch_syncs(protocol, topology, k)).sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CurveRow {
    pub protocol: CostProtocol,
    pub topology: TopologyKind,
    pub n_qpus: u32,
    pub consumed: u64,
    pub needed_per_qpu: u64,
    pub syncs: u64,
}

pub const DEFAULT_QPU_RANGE: std::ops::RangeInclusive<u32> = 2..=11;

/// Cost rows ordered by protocol, then topology, then QPU count.
pub fn emit_curves(
    protocols: &[CostProtocol],
    topologies: &[TopologyKind],
    qpus: std::ops::RangeInclusive<u32>,
) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for &protocol in protocols {
        for &topology in topologies {
            for n in qpus.clone() {
                let r = analyze_qft(n, protocol, topology);
                rows.push(CurveRow {
                    protocol,
                    topology,
                    n_qpus: n,
                    consumed: r.consumed,
                    needed_per_qpu: r.needed_per_qpu,
                    syncs: r.syncs,
                });
            }
        }
    }
    rows
}

/// The full sweep over every protocol and topology for 2..=11 QPUs.
pub fn default_curves() -> Vec<CurveRow> {
    emit_curves(&CostProtocol::ALL, &TopologyKind::ALL, DEFAULT_QPU_RANGE)
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize to csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn curves_json(rows: &[CurveRow]) -> String {
    let mut s = serde_json::to_string_pretty(rows).expect("rows serialize to json");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn per_epoch_examples() {
        assert_eq!(per_epoch_cost(CostProtocol::Telegate, TopologyKind::DirectConnected, 1), 2);
        assert_eq!(per_epoch_cost(CostProtocol::Expose, TopologyKind::DirectConnected, 2), 3);
        assert_eq!(per_epoch_cost(CostProtocol::Expose, TopologyKind::ViaCommunicator, 1), 0);
    }

    #[test]
    fn analyze_examples() {
        assert_eq!(analyze_qft(5, CostProtocol::Teledata, TopologyKind::DirectConnected).consumed, 40);
        assert_eq!(analyze_qft(11, CostProtocol::Telegate, TopologyKind::ViaCommunicator).consumed, 130);
        assert_eq!(
            analyze_qft(7, CostProtocol::Teledata, TopologyKind::DirectConnected).needed_per_qpu,
            14
        );
    }

    #[test]
    fn single_point_range_has_six_rows() {
        assert_eq!(emit_curves(&CostProtocol::ALL, &TopologyKind::ALL, 2..=2).len(), 6);
        assert_eq!(default_curves().len(), 60);
    }

    #[test]
    fn csv_layout() {
        let text = curves_csv(&emit_curves(&[CostProtocol::Teledata], &[TopologyKind::DirectConnected], 5..=5));
        assert_eq!(
            text,
            "protocol,topology,n_qpus,consumed,needed_per_qpu,syncs\nteledata,direct,5,40,10,20\n"
        );
        assert_eq!(curves_csv(&default_curves()), curves_csv(&default_curves()));
    }

    #[test]
    fn json_layout() {
        let rows = emit_curves(&[CostProtocol::Expose], &[TopologyKind::ViaCommunicator], 2..=2);
        let v: serde_json::Value = serde_json::from_str(&curves_json(&rows)).unwrap();
        assert_eq!(v[0]["protocol"], "expose");
        assert_eq!(v[0]["topology"], "communicator");
        assert_eq!(v[0]["consumed"], 0);
    }

    #[test]
    fn star_links_go_through_the_relay() {
        assert_eq!(Topology::communicator(3).links(), vec![(0, 3), (1, 3), (2, 3)]);
        assert_eq!(Topology::direct(3).links().len(), 3);
    }

    proptest! {
        #[test]
        fn protocol_ordering(n in 2u32..64) {
            for t in TopologyKind::ALL {
                let td = analyze_qft(n, CostProtocol::Teledata, t).consumed;
                let tg = analyze_qft(n, CostProtocol::Telegate, t).consumed;
                let ex = analyze_qft(n, CostProtocol::Expose, t).consumed;
                prop_assert!(td > tg);
                prop_assert!(tg >= ex);
                if n > 2 {
                    prop_assert!(tg > ex);
                }
            }
        }

        #[test]
        fn star_reservation_is_constant(a in 2u32..64, b in 2u32..64) {
            for p in CostProtocol::ALL {
                prop_assert_eq!(
                    analyze_qft(a, p, TopologyKind::ViaCommunicator).needed_per_qpu,
                    analyze_qft(b, p, TopologyKind::ViaCommunicator).needed_per_qpu
                );
            }
        }

        #[test]
        fn consumed_is_sum_of_epochs(n in 2u32..40) {
            for p in CostProtocol::ALL {
                for t in TopologyKind::ALL {
                    let mut total = 0;
                    for epoch in 1..n {
                        total += per_epoch_cost(p, t, u64::from(n - epoch));
                    }
                    prop_assert_eq!(analyze_qft(n, p, t).consumed, total);
                }
            }
        }
    }
}
