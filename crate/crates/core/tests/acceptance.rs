//! Acceptance run: one line per criterion, non-zero exit if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{corpus, corpus_dir, equivalence_gap, random_inputs, random_qubit};
use netqir::ir::intrinsics::{all_classifications, all_intrinsic_names};
use netqir::ir::{classify, validate, Protocol, Rule};
use netqir::lowering::{lower, lower_with, ExposeScheme, LowerError, LowerOptions, QubitId};
use netqir::parser::{parse, print, ParseErrorKind};
use netqir::sim::{
    fidelity, matrix_distance, phase_distance, simulate, simulate_monolithic, SimConfig, SimError,
};
use netqir::topology::{
    analyze_qft, curves_csv, default_curves, qft_program, CostProtocol, Topology, TopologyKind,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use CostProtocol::{Expose, Teledata, Telegate};
use TopologyKind::{DirectConnected as Dc, ViaCommunicator as Vc};

const TOL: f64 = 1e-9;

// Reference cost curves, N = 2..=11.
const CONSUMED: &[(CostProtocol, TopologyKind, [u64; 10])] = &[
    (Teledata, Dc, [4, 12, 24, 40, 60, 84, 112, 144, 180, 220]),
    (Telegate, Dc, [2, 6, 12, 20, 30, 42, 56, 72, 90, 110]),
    (Expose, Dc, [2, 5, 9, 14, 20, 27, 35, 44, 54, 65]),
    (Teledata, Vc, [8, 20, 36, 56, 80, 108, 140, 176, 216, 260]),
    (Telegate, Vc, [4, 10, 18, 28, 40, 54, 70, 88, 108, 130]),
    (Expose, Vc, [0, 4, 10, 18, 28, 40, 54, 70, 88, 108]),
];

// One reference series covers both expose and telegate on the communicator.
type Series = [(CostProtocol, TopologyKind)];

const NEEDED: &[(&Series, [u64; 10])] = &[
    (&[(Teledata, Dc)], [4, 6, 8, 10, 12, 14, 16, 18, 20, 22]),
    (&[(Telegate, Dc)], [2, 3, 4, 5, 6, 7, 8, 9, 10, 11]),
    (&[(Expose, Vc), (Telegate, Vc)], [1; 10]),
    (&[(Teledata, Vc)], [2; 10]),
];

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cost_curves() -> Result<String, String> {
    #[derive(serde::Deserialize)]
    struct Row {
        protocol: String,
        topology: String,
        n_qpus: u32,
        consumed: u64,
        needed_per_qpu: u64,
    }
    let text = curves_csv(&default_curves());
    let rows: Vec<Row> = csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let find = |p: CostProtocol, t: TopologyKind, n: u32| {
        rows.iter()
            .find(|r| r.protocol == p.keyword() && r.topology == t.keyword() && r.n_qpus == n)
            .ok_or_else(|| format!("no row for {p} {t} {n}"))
    };
    let (mut consumed, mut needed) = (0, 0);
    for (p, t, series) in CONSUMED {
        for (i, &want) in series.iter().enumerate() {
            let n = i as u32 + 2;
            let got = find(*p, *t, n)?.consumed;
            ensure(got == want, || format!("consumed {p} {t} N={n}: {got} != {want}"))?;
            consumed += 1;
        }
    }
    for (pairs, series) in NEEDED {
        for (i, &want) in series.iter().enumerate() {
            let n = i as u32 + 2;
            for (p, t) in pairs.iter() {
                let got = find(*p, *t, n)?.needed_per_qpu;
                ensure(got == want, || format!("needed {p} {t} N={n}: {got} != {want}"))?;
            }
            needed += 1;
        }
    }
    Ok(format!("{consumed} consumed and {needed} needed coordinates"))
}

fn scheme_for(p: CostProtocol) -> ExposeScheme {
    match p {
        Teledata => ExposeScheme::Teledata,
        Telegate => ExposeScheme::Telegate,
        Expose => ExposeScheme::Ghz,
    }
}

fn ledger_cross_check() -> Result<String, String> {
    let mut pairs = 0;
    for n in 2..=8u32 {
        let prog = qft_program(n - 1);
        for p in CostProtocol::ALL {
            for kind in TopologyKind::ALL {
                let opts = LowerOptions {
                    expose_scheme: scheme_for(p),
                    ..LowerOptions::default()
                };
                let low = lower_with(&prog, Topology { kind, qpus: n }, &opts).map_err(|e| e.to_string())?;
                let want = analyze_qft(n, p, kind).consumed;
                let got = low.ledger.consumed;
                ensure(got == want, || format!("N={n} {p} {kind}: ledger {got}, model {want}"))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} lowered programs"))
}

fn qft_equivalence() -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for n in 2..=6u32 {
        let prog = qft_program(n - 1);
        let data: Vec<(u32, u32)> = (0..n).map(|r| (r, 0)).collect();
        let slots: Vec<(u32, u32)> = (0..n).flat_map(|r| [(r, 0), (r, 1)]).collect();
        for p in CostProtocol::ALL {
            for kind in TopologyKind::ALL {
                for seed in [1, 2] {
                    let opts = LowerOptions {
                        expose_scheme: scheme_for(p),
                        ..LowerOptions::default()
                    };
                    let cfg = random_inputs(seed, &data);
                    let gap = equivalence_gap(&prog, Topology { kind, qpus: n }, &opts, &cfg, &slots);
                    ensure(gap <= TOL, || format!("N={n} {p} {kind} seed {seed}: {gap:e}"))?;
                    worst = worst.max(gap);
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} runs, worst gap {worst:.1e}"))
}

fn teleportation() -> Result<String, String> {
    let prog = parse(&corpus("teleport.nqir")).map_err(|e| e.to_string())?;
    let low = lower(&prog, Topology::direct(2), Protocol::Teledata).map_err(|e| e.to_string())?;
    ensure(low.ledger.syncs == 1, || format!("{} syncs", low.ledger.syncs))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let psi = random_qubit(&mut rng);
        let res = simulate(&low, &SimConfig::new(seed).with_initial(0, 0, psi)).map_err(|e| e.to_string())?;
        let got = res.state.extract(&[res.qubit(1, 0)]).map_err(|e| e.to_string())?;
        let f = fidelity(&got, &psi);
        ensure(f >= 1.0 - TOL, || format!("seed {seed}: fidelity {f}"))?;
        let p0 = 1.0 - res.state.prob_one(res.qubit(0, 0));
        ensure((p0 - 1.0).abs() <= TOL, || format!("seed {seed}: sender reads 0 with {p0}"))?;
        worst = worst.max(1.0 - f);
    }
    Ok(format!("100 states, 1 sync, worst infidelity {worst:.1e}"))
}

fn telegate() -> Result<String, String> {
    let prog = parse(&corpus("remote_cz_telegate.nqir")).map_err(|e| e.to_string())?;
    let low = lower(&prog, Topology::direct(2), Protocol::Unspecified).map_err(|e| e.to_string())?;
    ensure(low.ledger.syncs == 2, || format!("{} syncs", low.ledger.syncs))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..100 {
        let (a, b) = (random_qubit(&mut rng), random_qubit(&mut rng));
        let cfg = SimConfig::new(seed).with_initial(0, 0, a).with_initial(1, 0, b);
        let dist = simulate(&low, &cfg).map_err(|e| e.to_string())?;
        let mono = simulate_monolithic(&prog, 2, &cfg).map_err(|e| e.to_string())?;
        let src = dist.qubit(0, 0);
        ensure(src == QubitId::Data { rank: 0, slot: 0 }, || format!("source moved to {src}"))?;
        let got = dist.state.extract(&[src, dist.qubit(1, 0)]).map_err(|e| e.to_string())?;
        let want = [a[0] * b[0], a[0] * b[1], a[1] * b[0], -(a[1] * b[1])];
        let gap = phase_distance(&got, &want);
        ensure(gap <= TOL, || format!("seed {seed}: CZ gap {gap:e}"))?;
        let mono_ab = mono.state.extract(&[mono.qubit(0, 0), mono.qubit(1, 0)]).map_err(|e| e.to_string())?;
        ensure(phase_distance(&got, &mono_ab) <= TOL, || format!("seed {seed}: differs from monolithic"))?;
        let rho = dist.state.density(&[src]).map_err(|e| e.to_string())?;
        let rho_mono = mono.state.density(&[mono.qubit(0, 0)]).map_err(|e| e.to_string())?;
        let d = matrix_distance(&rho, &rho_mono);
        ensure(d <= TOL, || format!("seed {seed}: source reduced state off by {d:e}"))?;
        for (i, amp) in a.iter().enumerate() {
            let pop = (rho[i][i].re - amp.norm_sqr()).abs();
            ensure(pop <= TOL, || format!("seed {seed}: source population off by {pop:e}"))?;
        }
    }
    Ok("100 pairs, 2 syncs".into())
}

fn scatter_gather() -> Result<String, String> {
    let prog = parse(&corpus("scatter_gather.nqir")).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut runs = 0;
    for kind in TopologyKind::ALL {
        let low = lower(&prog, Topology { kind, qpus: 4 }, Protocol::Unspecified).map_err(|e| e.to_string())?;
        for seed in 0..4 {
            let mut cfg = SimConfig::new(seed);
            let mut want = vec![Complex64::new(1.0, 0.0)];
            for slot in 0..8 {
                let v = random_qubit(&mut rng);
                cfg = cfg.with_initial(0, slot, v);
                want = want.iter().flat_map(|w| [w * v[0], w * v[1]]).collect();
            }
            let res = simulate(&low, &cfg).map_err(|e| e.to_string())?;
            let qs: Vec<QubitId> = (0..8).map(|s| res.qubit(0, s)).collect();
            let got = res.state.extract(&qs).map_err(|e| e.to_string())?;
            let gap = phase_distance(&got, &want);
            ensure(gap <= TOL, || format!("{kind} seed {seed}: gap {gap:e}"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} round trips"))
}

fn parser_corpus() -> Result<String, String> {
    let mut files: Vec<String> = std::fs::read_dir(corpus_dir())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".nqir"))
        .collect();
    files.sort();
    ensure(files.len() >= 15, || format!("only {} files", files.len()))?;
    ensure(files.iter().any(|f| f == "teleport.nqir"), || "teleport.nqir missing".into())?;
    for f in &files {
        let once = print(&parse(&corpus(f)).map_err(|e| format!("{f}: {e}"))?);
        let twice = print(&parse(&once).map_err(|e| format!("{f} reprinted: {e}"))?);
        ensure(once == twice, || format!("{f} is not a fixed point"))?;
    }
    let everything = parse(&corpus("all_intrinsics.nqir")).map_err(|e| e.to_string())?;
    let names = all_intrinsic_names();
    for n in &names {
        ensure(everything.functions.iter().any(|f| &f.name == n), || format!("{n} not in corpus"))?;
    }
    let classes = all_classifications();
    ensure(classes.len() == names.len(), || "name and class counts differ".into())?;
    for (c, n) in classes.iter().zip(&names) {
        let back = classify(n).map_err(|e| format!("{n}: {e:?}"))?;
        ensure(&back == c && &back.name() == n, || format!("{n} does not round trip"))?;
    }
    let mut distinct = classes.clone();
    distinct.sort_by_key(|c| c.name());
    distinct.dedup();
    ensure(distinct.len() == classes.len(), || "classification collision".into())?;
    Ok(format!("{} files, {} intrinsics", files.len(), names.len()))
}

fn negative_suite() -> Result<String, String> {
    let mismatch = parse(&corpus("invalid/protocol_mismatch.nqir")).map_err(|e| e.to_string())?;
    match lower(&mismatch, Topology::direct(2), Protocol::Unspecified) {
        Err(e @ LowerError::ProtocolMismatch { .. }) => ensure(e.kind() == "protocol-mismatch", || e.kind().into())?,
        other => return Err(format!("protocol mismatch lowered to {other:?}")),
    }

    let deadlock = parse(&corpus("deadlock.nqir")).map_err(|e| e.to_string())?;
    let opts = LowerOptions {
        allow_unmatched: true,
        ..LowerOptions::default()
    };
    let low = lower_with(&deadlock, Topology::direct(2), &opts).map_err(|e| e.to_string())?;
    match simulate(&low, &SimConfig::new(1)) {
        Err(e @ SimError::Deadlock { .. }) => ensure(e.kind() == "deadlock-detected", || e.kind().into())?,
        other => return Err(format!("send without recv gave {:?}", other.map(|r| r.steps))),
    }

    match parse(&corpus("invalid/unknown_intrinsic.nqir")) {
        Err(e) if e.kind == ParseErrorKind::UnknownIntrinsic && e.pos.line > 0 => {}
        other => return Err(format!("unknown intrinsic gave {:?}", other.err())),
    }

    let arity = parse(&corpus("invalid/arity_mismatch.nqir")).map_err(|e| e.to_string())?;
    let diags = validate(&arity);
    ensure(
        diags.iter().any(|d| d.rule == Rule::Arity && d.location.pos.is_some()),
        || format!("arity mismatch gave {diags:?}"),
    )?;
    Ok("4 rejections".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, Check, Duration); 8] = [
        ("cost curves", cost_curves, Duration::from_secs(1)),
        ("ledger cross-check", ledger_cross_check, Duration::from_secs(10)),
        ("qft equivalence", qft_equivalence, Duration::from_secs(30)),
        ("teleportation", teleportation, Duration::MAX),
        ("telegate", telegate, Duration::MAX),
        ("scatter/gather round trip", scatter_gather, Duration::MAX),
        ("parser corpus", parser_corpus, Duration::MAX),
        ("negative suite", negative_suite, Duration::MAX),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let took = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if took > limit {
                Err(format!("{detail}; took {took:?}, limit {limit:?}"))
            } else {
                Ok(detail)
            }
        });
        match outcome {
            Ok(detail) => println!("criterion {}: pass  {name} ({detail}) in {took:.2?}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
