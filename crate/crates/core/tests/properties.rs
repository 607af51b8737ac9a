//! Properties over randomly built distributed programs.

mod common;

use std::collections::BTreeMap;

use common::random_inputs;
use netqir::builder::{Builder, PrinterExecutor, ProgramExecutor};
use netqir::ir::{validate, Program, Protocol};
use netqir::lowering::{lower_with, ExposeScheme, LowerOptions, LoweredProgram, Node, QubitId};
use netqir::parser::{parse, print};
use netqir::sim::{phase_distance, simulate, simulate_monolithic_with, SimConfig};
use netqir::topology::{Topology, TopologyKind};
use proptest::prelude::*;

const DATA: u32 = 0;
const REF: u32 = 1;

#[derive(Debug, Clone)]
enum Step {
    Local { rank: u32, gate: u8 },
    /// `dst` borrows `src`'s data qubit as a control.
    Remote { src: u32, dst: u32, phase: Option<f64>, protocol: Protocol },
    /// Data qubit goes to `dst`, gets a CZ there, and comes back.
    RoundTrip { src: u32, dst: u32 },
    Expose { root: u32, phases: Vec<f64> },
}

fn step(world: u32) -> impl Strategy<Value = Step> {
    let pair = (0..world, 1..world).prop_map(move |(a, d)| (a, (a + d) % world));
    prop_oneof![
        (0..world, 0u8..3).prop_map(|(rank, gate)| Step::Local { rank, gate }),
        (
            pair.clone(),
            prop::option::of(0.1f64..3.0),
            prop::sample::select(vec![Protocol::Telegate, Protocol::Unspecified]),
        )
            .prop_map(|((src, dst), phase, protocol)| Step::Remote { src, dst, phase, protocol }),
        pair.prop_map(|(src, dst)| Step::RoundTrip { src, dst }),
        (0..world, prop::collection::vec(0.1f64..3.0, world as usize))
            .prop_map(|(root, phases)| Step::Expose { root, phases }),
    ]
}

fn case() -> impl Strategy<Value = (u32, Vec<Step>)> {
    (2u32..=3).prop_flat_map(|w| (Just(w), prop::collection::vec(step(w), 1..7)))
}

fn build(steps: &[Step]) -> Builder {
    let mut b = Builder::new(2);
    let (main, world) = (b.main(), b.world());
    for s in steps {
        match s {
            Step::Local { rank, gate } => {
                let sc = b.rank_conditional(main, &world, (*rank).into());
                match gate {
                    0 => b.h(sc, DATA),
                    1 => b.x(sc, DATA),
                    _ => b.z(sc, DATA),
                }
            }
            Step::Remote { src, dst, phase, protocol } => {
                let sc = b.rank_conditional(main, &world, (*src).into());
                b.qsend(sc, DATA, (*dst).into(), &world, *protocol);
                let dc = b.rank_conditional(main, &world, (*dst).into());
                b.qrecv(dc, REF, (*src).into(), &world, *protocol);
                match phase {
                    Some(t) => b.cp(dc, *t, REF, DATA),
                    None => b.cz(dc, REF, DATA),
                }
            }
            Step::RoundTrip { src, dst } => {
                let sc = b.rank_conditional(main, &world, (*src).into());
                b.qsend(sc, DATA, (*dst).into(), &world, Protocol::Teledata);
                let dc = b.rank_conditional(main, &world, (*dst).into());
                b.qrecv(dc, REF, (*src).into(), &world, Protocol::Teledata);
                b.cz(dc, REF, DATA);
                b.qsend(dc, REF, (*src).into(), &world, Protocol::Teledata);
                let back = b.rank_conditional(main, &world, (*src).into());
                b.qrecv(back, DATA, (*dst).into(), &world, Protocol::Teledata);
            }
            Step::Expose { root, phases } => {
                for (r, t) in phases.iter().enumerate() {
                    let r = r as u32;
                    let sc = b.rank_conditional(main, &world, r.into());
                    if r == *root {
                        b.expose(sc, DATA, (*root).into(), &world);
                    } else {
                        b.expose(sc, REF, (*root).into(), &world);
                        b.cp(sc, *t, REF, DATA);
                    }
                }
            }
        }
    }
    b.finalize(main);
    b
}

fn lowered(p: &Program, topology: Topology, scheme: ExposeScheme) -> LoweredProgram {
    let opts = LowerOptions {
        expose_scheme: scheme,
        ..LowerOptions::default()
    };
    lower_with(p, topology, &opts).expect("generated program lowers")
}

fn data_slots(world: u32) -> Vec<(u32, u32)> {
    (0..world).map(|r| (r, DATA)).collect()
}

fn kind_strategy() -> impl Strategy<Value = TopologyKind> {
    prop::sample::select(TopologyKind::ALL.to_vec())
}

fn scheme_strategy() -> impl Strategy<Value = ExposeScheme> {
    prop::sample::select(vec![ExposeScheme::Ghz, ExposeScheme::Teledata, ExposeScheme::Telegate])
}

fn node_label(line: &str) -> Option<(Node, &str)> {
    let rest = line.strip_prefix("step ")?;
    let (_, rest) = rest.split_once(' ')?;
    let (who, rest) = rest.split_once(' ')?;
    let (id, op) = rest.split_once(' ')?;
    let id: u32 = id.parse().ok()?;
    let node = match who {
        "rank" => Node::Rank(id),
        "relay" => Node::Relay(id),
        _ => return None,
    };
    let op = op.rsplit_once(" = ").map_or(op, |(o, _)| o);
    Some((node, op))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn builder_output_round_trips((_, steps) in case()) {
        let b = build(&steps);
        let program = b.emit(&ProgramExecutor).unwrap();
        let text = b.emit(&PrinterExecutor).unwrap();
        prop_assert_eq!(&print(&program), &text);
        prop_assert_eq!(&parse(&text).unwrap(), &program);
        let diags = validate(&program);
        prop_assert!(diags.is_empty(), "{:?}", diags);
    }

    #[test]
    fn lowering_preserves_semantics(
        (world, steps) in case(),
        kind in kind_strategy(),
        scheme in scheme_strategy(),
        seed in 0u64..1000,
    ) {
        let program = build(&steps).emit(&ProgramExecutor).unwrap();
        let topology = Topology { kind, qpus: world };
        let low = lowered(&program, topology, scheme);
        let opts = LowerOptions { expose_scheme: scheme, ..LowerOptions::default() };
        let slots = data_slots(world);
        for s in [seed, seed + 1] {
            let cfg = random_inputs(s, &slots);
            let dist = simulate(&low, &cfg).unwrap();
            let mono = simulate_monolithic_with(&program, topology, &opts, &cfg).unwrap();
            let dq: Vec<QubitId> = slots.iter().map(|&(r, q)| dist.qubit(r, q)).collect();
            let mq: Vec<QubitId> = slots.iter().map(|&(r, q)| mono.qubit(r, q)).collect();
            let gap = phase_distance(&dist.state.extract(&dq).unwrap(), &mono.state.extract(&mq).unwrap());
            prop_assert!(gap <= 1e-9, "seed {}: gap {}", s, gap);
        }
    }

    #[test]
    fn corrected_protocols_are_seed_independent(
        (world, steps) in case(),
        kind in kind_strategy(),
        a in 0u64..1000,
        b in 1000u64..2000,
    ) {
        let program = build(&steps).emit(&ProgramExecutor).unwrap();
        let low = lowered(&program, Topology { kind, qpus: world }, ExposeScheme::Ghz);
        let slots = data_slots(world);
        let inputs = random_inputs(a, &slots);
        let run = |seed| {
            let cfg = SimConfig { seed, ..inputs.clone() };
            let r = simulate(&low, &cfg).unwrap();
            let qs: Vec<QubitId> = slots.iter().map(|&(x, q)| r.qubit(x, q)).collect();
            r.state.extract(&qs).unwrap()
        };
        prop_assert!(phase_distance(&run(a), &run(b)) <= 1e-9);
    }

    #[test]
    fn runs_are_deterministic_and_normalised(
        (world, steps) in case(),
        kind in kind_strategy(),
        seed in any::<u64>(),
    ) {
        let program = build(&steps).emit(&ProgramExecutor).unwrap();
        let low = lowered(&program, Topology { kind, qpus: world }, ExposeScheme::Ghz);
        let cfg = random_inputs(seed, &data_slots(world)).with_transcript();
        let x = simulate(&low, &cfg).unwrap();
        let y = simulate(&low, &cfg).unwrap();
        prop_assert_eq!(&x.transcript, &y.transcript);
        prop_assert_eq!(x.state.amplitudes(), y.state.amplitudes());
        prop_assert_eq!(&x.bits, &y.bits);
        prop_assert!((x.state.norm_sqr() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn transcript_is_a_valid_interleaving(
        (world, steps) in case(),
        kind in kind_strategy(),
        seed in any::<u64>(),
    ) {
        let program = build(&steps).emit(&ProgramExecutor).unwrap();
        let low = lowered(&program, Topology { kind, qpus: world }, ExposeScheme::Ghz);
        let res = simulate(&low, &SimConfig::new(seed).with_transcript()).unwrap();
        let mut per_node: BTreeMap<Node, Vec<String>> = BTreeMap::new();
        for (i, line) in res.transcript.iter().enumerate() {
            let prefix = format!("step {} ", i + 1);
            prop_assert!(line.starts_with(&prefix), "{}", line);
            let (node, op) = node_label(line).unwrap();
            if op.starts_with("csend") {
                // The receive completes in the same rendezvous.
                let next = res.transcript.get(i + 1).map(String::as_str).unwrap_or("");
                let (peer, recv) = node_label(next).unwrap();
                prop_assert!(recv.starts_with("crecv"), "{} then {}", line, next);
                prop_assert!(op.contains(&format!("-> {peer}")), "{} then {}", line, next);
                prop_assert!(recv.contains(&format!("<- {node}")), "{} then {}", line, next);
            }
            per_node.entry(node).or_default().push(op.to_string());
        }
        for (node, ops) in &low.nodes {
            let want: Vec<String> = ops.iter().map(ToString::to_string).collect();
            prop_assert_eq!(per_node.remove(node).unwrap_or_default(), want, "{}", node);
        }
        prop_assert!(per_node.is_empty());
    }

    #[test]
    fn sessions_sync_per_protocol((world, steps) in case()) {
        let program = build(&steps).emit(&ProgramExecutor).unwrap();
        let low = lowered(&program, Topology::direct(world), ExposeScheme::Ghz);
        for s in &low.sessions {
            let want = match s.scheme.as_str() {
                "teledata" => 1,
                "telegate" | "ghz" => 2,
                other => panic!("unexpected scheme {other}"),
            };
            prop_assert_eq!(s.syncs, want, "{:?}", s);
        }
    }
}
