#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use netqir::ir::Program;
use netqir::lowering::{lower_with, LowerOptions, QubitId};
use netqir::sim::{phase_distance, simulate, simulate_monolithic_with, SimConfig};
use netqir::topology::Topology;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

pub fn corpus(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Haar-ish random single-qubit state.
pub fn random_qubit<R: Rng>(rng: &mut R) -> [Complex64; 2] {
    let theta: f64 = rng.gen_range(0.0..PI);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    [
        Complex64::new((theta / 2.0).cos(), 0.0),
        Complex64::from_polar((theta / 2.0).sin(), phi),
    ]
}

pub fn random_inputs(seed: u64, slots: &[(u32, u32)]) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut cfg = SimConfig::new(seed);
    for &(r, s) in slots {
        cfg = cfg.with_initial(r, s, random_qubit(&mut rng));
    }
    cfg
}

/// Distance between distributed and monolithic states over `slots`.
pub fn equivalence_gap(
    program: &Program,
    topology: Topology,
    opts: &LowerOptions,
    cfg: &SimConfig,
    slots: &[(u32, u32)],
) -> f64 {
    let lowered = lower_with(program, topology, opts).expect("lowers");
    let dist = simulate(&lowered, cfg).expect("distributed run");
    let mono = simulate_monolithic_with(program, topology, opts, cfg).expect("monolithic run");
    let dq: Vec<QubitId> = slots.iter().map(|&(r, s)| dist.qubit(r, s)).collect();
    let mq: Vec<QubitId> = slots.iter().map(|&(r, s)| mono.qubit(r, s)).collect();
    let a = dist.state.extract(&dq).expect("distributed subset separable");
    let b = mono.state.extract(&mq).expect("monolithic subset separable");
    phase_distance(&a, &b)
}
