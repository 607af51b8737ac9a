use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;

use super::SimError;
use crate::ir::Gate;
use crate::lowering::QubitId;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Tolerance for separability and norm checks.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    /// Bit position in the amplitude vector.
    Live(usize),
    /// Measured or reset; factored out as a basis state.
    Classical(bool),
}

/// State vector over every live qubit of every node.
///
/// Qubits enter lazily: data qubits from their initial state on first touch,
/// communication qubits at allocation. Measured qubits leave the vector and
/// stay in the registry as classical values.
#[derive(Debug, Clone)]
pub struct GlobalState {
    amps: Vec<Complex64>,
    live: Vec<QubitId>,
    registry: BTreeMap<QubitId, Entry>,
    initial: BTreeMap<(u32, u32), [Complex64; 2]>,
    cap: usize,
}

impl GlobalState {
    pub fn new(cap: usize, initial: BTreeMap<(u32, u32), [Complex64; 2]>) -> Self {
        GlobalState {
            amps: vec![ONE],
            live: Vec::new(),
            registry: BTreeMap::new(),
            initial,
            cap,
        }
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn entry(&self, q: QubitId) -> Option<Entry> {
        self.registry.get(&q).copied()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Live qubits in bit order: qubit `i` is bit `i` of the amplitude index.
    pub fn live_qubits(&self) -> &[QubitId] {
        &self.live
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_norm(&self) -> Result<(), SimError> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > TOLERANCE {
            return Err(SimError::NormDrift { norm: n.sqrt() });
        }
        Ok(())
    }

    fn push_factor(&mut self, q: QubitId, v: [Complex64; 2]) -> Result<usize, SimError> {
        if self.live.len() >= self.cap {
            return Err(SimError::Capacity {
                cap: self.cap,
                qubit: q.to_string(),
            });
        }
        let n = self.amps.len();
        let mut next = vec![ZERO; 2 * n];
        for (i, a) in self.amps.iter().enumerate() {
            next[i] = a * v[0];
            next[i + n] = a * v[1];
        }
        self.amps = next;
        let idx = self.live.len();
        self.live.push(q);
        self.registry.insert(q, Entry::Live(idx));
        Ok(idx)
    }

    /// Bit position of `q`, bringing it into the vector if needed.
    pub fn ensure(&mut self, q: QubitId) -> Result<usize, SimError> {
        let v = match self.registry.get(&q) {
            Some(Entry::Live(i)) => return Ok(*i),
            Some(Entry::Classical(b)) => basis(*b),
            None => match q {
                QubitId::Data { rank, slot } => self.initial.get(&(rank, slot)).copied().unwrap_or(basis(false)),
                QubitId::Comm(_) => return Err(SimError::Unallocated { qubit: q.to_string() }),
            },
        };
        self.push_factor(q, v)
    }

    /// Add a fresh qubit in `|0>` that no node has touched yet.
    pub fn fresh(&mut self, q: QubitId) {
        self.registry.insert(q, Entry::Classical(false));
    }

    /// Allocate `qs` in `(|0..0> + |1..1>)/sqrt(2)`.
    pub fn alloc_cat(&mut self, qs: &[QubitId]) -> Result<(), SimError> {
        for &q in qs {
            if matches!(self.registry.get(&q), Some(Entry::Live(_))) {
                return Err(SimError::Unallocated {
                    qubit: format!("{q} allocated twice"),
                });
            }
            self.registry.remove(&q);
        }
        let first = self.live.len();
        for &q in qs {
            self.push_factor(q, basis(false))?;
        }
        // Spread |0..0> onto |1..1> for each old basis index.
        let mask: usize = qs.iter().enumerate().map(|(i, _)| 1 << (first + i)).sum();
        let old = 1usize << first;
        for i in 0..old {
            let a = self.amps[i] * FRAC_1_SQRT_2;
            self.amps[i] = a;
            self.amps[i | mask] = a;
        }
        Ok(())
    }

    pub fn apply(&mut self, gate: Gate, qs: &[QubitId]) -> Result<(), SimError> {
        let idx: Vec<usize> = qs.iter().map(|&q| self.ensure(q)).collect::<Result<_, _>>()?;
        match gate {
            Gate::H => self.apply_1q(idx[0], [[ONE * FRAC_1_SQRT_2, ONE * FRAC_1_SQRT_2], [ONE * FRAC_1_SQRT_2, -ONE * FRAC_1_SQRT_2]]),
            Gate::X => self.apply_1q(idx[0], [[ZERO, ONE], [ONE, ZERO]]),
            Gate::Z => self.apply_1q(idx[0], [[ONE, ZERO], [ZERO, -ONE]]),
            Gate::Cnot => {
                let (c, t) = (1 << idx[0], 1 << idx[1]);
                for i in 0..self.amps.len() {
                    if i & c != 0 && i & t == 0 {
                        self.amps.swap(i, i | t);
                    }
                }
            }
            Gate::Cz | Gate::Cp(_) => {
                let phase = match gate {
                    Gate::Cp(theta) => Complex64::from_polar(1.0, theta),
                    _ => -ONE,
                };
                let m = (1 << idx[0]) | (1 << idx[1]);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & m == m {
                        *a *= phase;
                    }
                }
            }
        }
        self.check_norm()
    }

    fn apply_1q(&mut self, bit: usize, m: [[Complex64; 2]; 2]) {
        let b = 1 << bit;
        for i in 0..self.amps.len() {
            if i & b == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | b]);
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | b] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Probability that `q` reads 1.
    pub fn prob_one(&self, q: QubitId) -> f64 {
        match self.registry.get(&q) {
            Some(Entry::Live(i)) => {
                let b = 1 << i;
                self.amps.iter().enumerate().filter(|(j, _)| j & b != 0).map(|(_, a)| a.norm_sqr()).sum()
            }
            Some(Entry::Classical(v)) => f64::from(u8::from(*v)),
            None => match q {
                QubitId::Data { rank, slot } => self.initial.get(&(rank, slot)).map_or(0.0, |v| v[1].norm_sqr()),
                QubitId::Comm(_) => 0.0,
            },
        }
    }

    /// Projective Z measurement; the qubit leaves the vector.
    pub fn measure<R: Rng>(&mut self, q: QubitId, rng: &mut R) -> Result<bool, SimError> {
        let bit = self.ensure(q)?;
        let p1 = self.prob_one(q);
        let outcome = rng.gen::<f64>() < p1;
        let p = if outcome { p1 } else { 1.0 - p1 };
        if p <= 0.0 {
            return Err(SimError::NormDrift { norm: 0.0 });
        }
        let scale = 1.0 / p.sqrt();
        let b = 1usize << bit;
        let low = b - 1;
        let mut next = Vec::with_capacity(self.amps.len() / 2);
        for j in 0..self.amps.len() / 2 {
            let i = (j & low) | ((j & !low) << 1) | if outcome { b } else { 0 };
            next.push(self.amps[i] * scale);
        }
        self.amps = next;
        self.live.remove(bit);
        for (k, id) in self.live.iter().enumerate().skip(bit) {
            self.registry.insert(*id, Entry::Live(k));
        }
        self.registry.insert(q, Entry::Classical(outcome));
        self.check_norm()?;
        Ok(outcome)
    }

    pub fn reset<R: Rng>(&mut self, q: QubitId, rng: &mut R) -> Result<(), SimError> {
        if matches!(self.registry.get(&q), Some(Entry::Live(_))) {
            self.measure(q, rng)?;
        }
        self.registry.insert(q, Entry::Classical(false));
        Ok(())
    }

    /// Known single-qubit state of a qubit outside the vector.
    fn factor(&self, q: QubitId) -> Result<Option<[Complex64; 2]>, SimError> {
        match self.registry.get(&q) {
            Some(Entry::Live(_)) => Ok(None),
            Some(Entry::Classical(b)) => Ok(Some(basis(*b))),
            None => match q {
                QubitId::Data { rank, slot } => Ok(Some(self.initial.get(&(rank, slot)).copied().unwrap_or(basis(false)))),
                QubitId::Comm(_) => Err(SimError::Unallocated { qubit: q.to_string() }),
            },
        }
    }

    /// Split the amplitudes into rows over live `qs` and columns over the rest.
    fn matrix(&self, qs: &[QubitId]) -> Vec<Vec<Complex64>> {
        let bits: Vec<usize> = qs
            .iter()
            .map(|q| match self.registry[q] {
                Entry::Live(i) => i,
                Entry::Classical(_) => unreachable!("only live qubits reach the matrix"),
            })
            .collect();
        let rest: Vec<usize> = (0..self.live.len()).filter(|b| !bits.contains(b)).collect();
        let mut m = vec![vec![ZERO; 1 << rest.len()]; 1 << bits.len()];
        for (i, a) in self.amps.iter().enumerate() {
            // Subset qubit 0 is the most significant bit of the row index.
            let row = bits.iter().fold(0, |acc, &b| (acc << 1) | ((i >> b) & 1));
            let col = rest.iter().rev().fold(0, |acc, &b| (acc << 1) | ((i >> b) & 1));
            m[row][col] = *a;
        }
        m
    }

    /// Live members of `qs` and the fixed states of the others, by position.
    #[allow(clippy::type_complexity)]
    fn split(&self, qs: &[QubitId]) -> Result<(Vec<QubitId>, Vec<Option<[Complex64; 2]>>), SimError> {
        let mut seen = qs.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != qs.len() {
            return Err(SimError::Subset("repeated qubit".into()));
        }
        let factors: Vec<Option<[Complex64; 2]>> = qs.iter().map(|&q| self.factor(q)).collect::<Result<_, _>>()?;
        let live = qs.iter().zip(&factors).filter(|(_, f)| f.is_none()).map(|(q, _)| *q).collect();
        Ok((live, factors))
    }

    /// Spread a function of the live sub-index over the full subset index.
    fn expand_index(factors: &[Option<[Complex64; 2]>], i: usize) -> (usize, Complex64) {
        let k = factors.len();
        let mut live_idx = 0;
        let mut weight = ONE;
        for (pos, f) in factors.iter().enumerate() {
            let bit = (i >> (k - 1 - pos)) & 1;
            match f {
                None => live_idx = (live_idx << 1) | bit,
                Some(v) => weight *= v[bit],
            }
        }
        (live_idx, weight)
    }

    /// Pure state of `qs` (first qubit most significant), if it factors out.
    pub fn extract(&self, qs: &[QubitId]) -> Result<Vec<Complex64>, SimError> {
        let (live, factors) = self.split(qs)?;
        let m = self.matrix(&live);
        let cols = m[0].len();
        let col_norm = |c: usize| m.iter().map(|r| r[c].norm_sqr()).sum::<f64>();
        let best = (0..cols).max_by(|&a, &b| col_norm(a).total_cmp(&col_norm(b))).unwrap_or(0);
        let n = col_norm(best).sqrt();
        let psi: Vec<Complex64> = m.iter().map(|r| r[best] / n).collect();
        for c in 0..cols {
            let overlap: Complex64 = psi.iter().zip(&m).map(|(p, r)| p.conj() * r[c]).sum();
            for (p, r) in psi.iter().zip(&m) {
                if (r[c] - p * overlap).norm() > TOLERANCE {
                    return Err(SimError::Entangled);
                }
            }
        }
        Ok((0..1usize << qs.len())
            .map(|i| {
                let (l, w) = Self::expand_index(&factors, i);
                psi[l] * w
            })
            .collect())
    }

    /// Reduced density matrix of `qs` (first qubit most significant).
    pub fn density(&self, qs: &[QubitId]) -> Result<Vec<Vec<Complex64>>, SimError> {
        let (live, factors) = self.split(qs)?;
        let m = self.matrix(&live);
        let d = m.len();
        let mut rho = vec![vec![ZERO; d]; d];
        for (a, ra) in m.iter().enumerate() {
            for (b, rb) in m.iter().enumerate() {
                rho[a][b] = ra.iter().zip(rb).map(|(x, y)| x * y.conj()).sum();
            }
        }
        let full = 1usize << qs.len();
        let mut out = vec![vec![ZERO; full]; full];
        for (i, row) in out.iter_mut().enumerate() {
            let (li, wi) = Self::expand_index(&factors, i);
            for (j, x) in row.iter_mut().enumerate() {
                let (lj, wj) = Self::expand_index(&factors, j);
                *x = rho[li][lj] * wi * wj.conj();
            }
        }
        Ok(out)
    }
}

pub fn basis(b: bool) -> [Complex64; 2] {
    if b {
        [ZERO, ONE]
    } else {
        [ONE, ZERO]
    }
}

/// Largest elementwise difference after aligning global phase.
pub fn phase_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let Some(i) = (0..a.len()).max_by(|&x, &y| a[x].norm_sqr().total_cmp(&a[y].norm_sqr())) else {
        return 0.0;
    };
    let phase = if a[i].norm() > 0.0 && b[i].norm() > 0.0 {
        let r = b[i] / a[i];
        r / r.norm()
    } else {
        ONE
    };
    a.iter().zip(b).map(|(x, y)| (x * phase - y).norm()).fold(0.0, f64::max)
}

/// `|<a|b>|^2` for normalized pure states.
pub fn fidelity(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm_sqr()
}

/// `<psi|rho|psi>`.
pub fn fidelity_mixed(psi: &[Complex64], rho: &[Vec<Complex64>]) -> f64 {
    let mut acc = ZERO;
    for (i, p) in psi.iter().enumerate() {
        for (j, q) in psi.iter().enumerate() {
            acc += p.conj() * rho[i][j] * q;
        }
    }
    acc.re
}

pub fn matrix_distance(a: &[Vec<Complex64>], b: &[Vec<Complex64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn d(rank: u32, slot: u32) -> QubitId {
        QubitId::Data { rank, slot }
    }

    #[test]
    fn bell_pair_measures_consistently() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = GlobalState::new(8, BTreeMap::new());
            s.alloc_cat(&[QubitId::Comm(0), QubitId::Comm(1)]).unwrap();
            let a = s.measure(QubitId::Comm(0), &mut rng).unwrap();
            assert_eq!(s.prob_one(QubitId::Comm(1)), f64::from(u8::from(a)));
            assert_eq!(s.live_count(), 1);
        }
    }

    #[test]
    fn extract_rejects_entangled_subsets() {
        let mut s = GlobalState::new(8, BTreeMap::new());
        s.apply(Gate::H, &[d(0, 0)]).unwrap();
        s.apply(Gate::Cnot, &[d(0, 0), d(0, 1)]).unwrap();
        assert!(matches!(s.extract(&[d(0, 0)]), Err(SimError::Entangled)));
        let both = s.extract(&[d(0, 0), d(0, 1)]).unwrap();
        assert!((both[0].re - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((both[3].re - FRAC_1_SQRT_2).abs() < 1e-12);
        let rho = s.density(&[d(0, 1)]).unwrap();
        assert!((rho[0][0].re - 0.5).abs() < 1e-12 && rho[0][1].norm() < 1e-12);
    }

    #[test]
    fn subset_order_is_most_significant_first() {
        let mut s = GlobalState::new(8, BTreeMap::new());
        s.apply(Gate::X, &[d(0, 1)]).unwrap();
        let v = s.extract(&[d(0, 0), d(0, 1)]).unwrap();
        assert!((v[1].re - 1.0).abs() < 1e-12);
        let v = s.extract(&[d(0, 1), d(0, 0)]).unwrap();
        assert!((v[2].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capacity_is_enforced() {
        let mut s = GlobalState::new(2, BTreeMap::new());
        s.apply(Gate::H, &[d(0, 0)]).unwrap();
        s.apply(Gate::H, &[d(0, 1)]).unwrap();
        assert!(matches!(s.apply(Gate::H, &[d(0, 2)]), Err(SimError::Capacity { cap: 2, .. })));
    }

    #[test]
    fn phase_distance_ignores_global_phase() {
        let a = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        let i = Complex64::new(0.0, 1.0);
        let b = [a[0] * i, a[1] * i];
        assert!(phase_distance(&a, &b) < 1e-15);
        assert!((fidelity(&a, &b) - 1.0).abs() < 1e-12);
        let c = [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)];
        let e = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!(fidelity(&c, &e).abs() < 1e-15);
    }
}
