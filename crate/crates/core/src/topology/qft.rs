//! The distributed QFT used by the cost analyzer.

use std::f64::consts::PI;

use crate::builder::{Builder, ProgramExecutor};
use crate::ir::Program;

/// Slot holding each rank's data qubit.
pub const QFT_DATA_SLOT: u32 = 0;
/// Slot receiving the shared reference during an epoch.
pub const QFT_REF_SLOT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch {
    /// 1-based epoch index.
    pub index: u32,
    /// Rank whose data qubit is shared.
    pub root: u32,
    /// Number of ranks applying a controlled rotation against the root.
    pub remotes: u32,
}

/// Epochs of the QFT over `n + 1` ranks.
pub fn qft_epochs(n: u32) -> Vec<Epoch> {
    (1..=n)
        .map(|i| Epoch {
            index: i,
            root: i - 1,
            remotes: n + 1 - i,
        })
        .collect()
}

/// Phase of the rotation between qubits `distance` apart: `2π / 2^(distance+1)`.
pub fn qft_rotation(distance: u32) -> f64 {
    2.0 * PI / f64::powi(2.0, distance as i32 + 1)
}

/// QFT over `n + 1` ranks, one data qubit each.
///
/// Each epoch exposes the root's data qubit to every later rank, which
/// applies a controlled phase from the reference onto its own data qubit.
/// No final swaps are emitted, so the output is bit-reversed: with inputs
/// read most significant first from rank 0, output rank `i` carries weight `2^i`.
pub fn qft_program(n: u32) -> Program {
    assert!(n >= 1, "the QFT needs at least two ranks");
    let mut b = Builder::new(2);
    let main = b.main();
    let world = b.world();
    for epoch in qft_epochs(n) {
        let r = epoch.root;
        let comm = b.comm_from_ranks(main, &(r..=n).collect::<Vec<_>>());
        let root = b.rank_conditional(main, &world, r.into());
        b.h(root, QFT_DATA_SLOT);
        b.expose(root, QFT_DATA_SLOT, 0, &comm);
        for j in r + 1..=n {
            let s = b.rank_conditional(main, &world, j.into());
            b.expose(s, QFT_REF_SLOT, 0, &comm);
            b.cp(s, qft_rotation(j - r), QFT_REF_SLOT, QFT_DATA_SLOT);
        }
    }
    let last = b.rank_conditional(main, &world, n.into());
    b.h(last, QFT_DATA_SLOT);
    b.finalize(main);
    b.emit(&ProgramExecutor).expect("qft program is terminated")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{validate, IntrinsicBase};

    #[test]
    fn epoch_shape() {
        let e = qft_epochs(4);
        assert_eq!(e.len(), 4);
        assert_eq!(e[0].remotes, 4);
        assert_eq!(e[3], Epoch { index: 4, root: 3, remotes: 1 });
    }

    #[test]
    fn adjacent_rotation_is_s() {
        assert!((qft_rotation(1) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn program_validates() {
        for n in 1..5 {
            let p = qft_program(n);
            let diags = validate(&p);
            assert!(diags.is_empty(), "{diags:?}");
            let exposes = p
                .intrinsic_calls()
                .iter()
                .filter(|(name, _)| {
                    crate::ir::classify(name).map(|c| c.base) == Ok(IntrinsicBase::Expose)
                })
                .count();
            // Root plus every remote of every epoch.
            let expected: u32 = qft_epochs(n).iter().map(|e| e.remotes + 1).sum();
            assert_eq!(exposes as u32, expected);
        }
    }
}
