//! Simulator checks against closed-form answers.

mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use common::{corpus, random_qubit};
use netqir::ir::Protocol;
use netqir::lowering::{lower, lower_with, LowerOptions, QubitId};
use netqir::parser::parse;
use netqir::sim::{basis, fidelity, phase_distance, simulate, simulate_monolithic, SimConfig, SimError};
use netqir::topology::{qft_program, Topology};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn qft_output(n: u32, cfg: &SimConfig) -> Vec<Complex64> {
    let res = simulate_monolithic(&qft_program(n), n + 1, cfg).unwrap();
    // Output rank i carries weight 2^i.
    let qs: Vec<QubitId> = (0..=n).rev().map(|r| res.qubit(r, 0)).collect();
    res.state.extract(&qs).unwrap()
}

#[test]
fn qft_of_zero_is_uniform() {
    let out = qft_output(2, &SimConfig::new(0));
    let want = vec![Complex64::new(1.0 / 8f64.sqrt(), 0.0); 8];
    assert!(phase_distance(&out, &want) < 1e-12);
}

#[test]
fn qft_matches_dft_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=4u32 {
        let m = 1u64 << (n + 1);
        for _ in 0..4 {
            let x: u64 = rng.gen_range(0..m);
            let mut cfg = SimConfig::new(0);
            for r in 0..=n {
                // Input rank 0 is the most significant bit.
                cfg = cfg.with_initial(r, 0, basis((x >> (n - r)) & 1 == 1));
            }
            let out = qft_output(n, &cfg);
            let norm = 1.0 / (m as f64).sqrt();
            let want: Vec<Complex64> = (0..m)
                .map(|y| Complex64::from_polar(norm, 2.0 * PI * (x * y) as f64 / m as f64))
                .collect();
            assert!(phase_distance(&out, &want) < 1e-9, "n={n} x={x}");
        }
    }
}

#[test]
fn teledata_moves_the_state_and_clears_the_sender() {
    let prog = parse(&corpus("teleport.nqir")).unwrap();
    let low = lower(&prog, Topology::direct(2), Protocol::Unspecified).unwrap();
    let input = [Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, FRAC_1_SQRT_2)];
    for seed in 0..16 {
        let cfg = SimConfig::new(seed).with_initial(0, 0, input);
        let res = simulate(&low, &cfg).unwrap();
        let got = res.state.extract(&[res.qubit(1, 0)]).unwrap();
        assert!((fidelity(&got, &input) - 1.0).abs() < 1e-12, "seed {seed}");
        assert_eq!(res.state.prob_one(res.qubit(0, 0)), 0.0);
    }
}

#[test]
fn telegate_cz_matches_dense_product() {
    let prog = parse(&corpus("remote_cz_telegate.nqir")).unwrap();
    let low = lower(&prog, Topology::direct(2), Protocol::Unspecified).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..8 {
        let (a, b) = (random_qubit(&mut rng), random_qubit(&mut rng));
        let cfg = SimConfig::new(seed).with_initial(0, 0, a).with_initial(1, 0, b);
        let res = simulate(&low, &cfg).unwrap();
        let got = res.state.extract(&[res.qubit(0, 0), res.qubit(1, 0)]).unwrap();
        let want = [a[0] * b[0], a[0] * b[1], a[1] * b[0], -a[1] * b[1]];
        assert!(phase_distance(&got, &want) < 1e-9, "seed {seed}");
    }
}

#[test]
fn lone_send_deadlocks() {
    let prog = parse(&corpus("deadlock.nqir")).unwrap();
    let opts = LowerOptions {
        allow_unmatched: true,
        ..LowerOptions::default()
    };
    let low = lower_with(&prog, Topology::direct(2), &opts).unwrap();
    match simulate(&low, &SimConfig::new(1)) {
        Err(SimError::Deadlock { blocked }) => {
            assert_eq!(blocked.len(), 1);
            assert_eq!(blocked[0].to_string(), "rank0 blocked in csend with rank1");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn same_seed_same_transcript() {
    let prog = qft_program(3);
    let low = lower(&prog, Topology::communicator(4), Protocol::Unspecified).unwrap();
    let cfg = SimConfig::new(42).with_transcript();
    let a = simulate(&low, &cfg).unwrap();
    let b = simulate(&low, &cfg).unwrap();
    assert_eq!(a.transcript, b.transcript);
    assert_eq!(a.state.amplitudes(), b.state.amplitudes());
    assert!(a.transcript[0].starts_with("step 1 rank 0 "), "{}", a.transcript[0]);
}

#[test]
fn capacity_error_is_reported() {
    let low = lower(&qft_program(4), Topology::direct(5), Protocol::Unspecified).unwrap();
    let mut cfg = SimConfig::new(0);
    cfg.cap = 3;
    assert!(matches!(simulate(&low, &cfg), Err(SimError::Capacity { cap: 3, .. })));
}
