//! Initial states, Pauli overlaps `Tr[rho P]`, and the dense statevector
//! simulator used as the exact reference.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::circuit::{Circuit, Gate};
use crate::clifford::{CliffordGate, CliffordKind};
use crate::error::{Error, Result};
use crate::observable::ObservableSpec;
use crate::pauli::PauliString;

/// Qubit cap for dense expectation values.
pub const DENSE_CAP: usize = 14;
/// Qubit cap for Trotter-evolved dense states.
pub const TROTTER_CAP: usize = 16;

const PAR_THRESHOLD: usize = 1 << 12;

/// A pure state `|psi>` stored as `2^n` amplitudes; basis index bit `q` is
/// qubit `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n: usize,
    amps: Vec<Complex64>,
}

#[inline]
fn pauli_low_masks(p: &PauliString) -> (usize, usize, u32) {
    let x = p.x_words().first().copied().unwrap_or(0) as usize;
    let z = p.z_words().first().copied().unwrap_or(0) as usize;
    (x, z, (x & z).count_ones())
}

#[inline]
fn i_pow(k: u32) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Phase of `P|b> = phase |b xor x>`.
#[inline]
fn phase_at(b: usize, z: usize, iy: Complex64) -> Complex64 {
    if (b & z).count_ones() & 1 == 0 {
        iy
    } else {
        -iy
    }
}

impl Statevector {
    fn check_cap(n: usize, cap: usize) -> Result<()> {
        if n > cap {
            return Err(Error::OracleCap { n, cap });
        }
        Ok(())
    }

    pub fn zero(n: usize) -> Result<Self> {
        Statevector::check_cap(n, TROTTER_CAP)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Statevector { n, amps })
    }

    pub fn plus(n: usize) -> Result<Self> {
        Statevector::check_cap(n, TROTTER_CAP)?;
        let a = (1.0 / (1u64 << n) as f64).sqrt();
        Ok(Statevector {
            n,
            amps: vec![Complex64::new(a, 0.0); 1 << n],
        })
    }

    /// Wraps amplitudes; the norm must be 1 within 1e-12.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Validation(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        let n = len.trailing_zeros() as usize;
        Statevector::check_cap(n, TROTTER_CAP)?;
        let sv = Statevector { n, amps };
        let norm_sq = sv.norm_sq();
        if (norm_sq - 1.0).abs() > 1e-12 {
            return Err(Error::Unnormalized { norm_sq });
        }
        Ok(sv)
    }

    /// Reads little-endian complex64 pairs (f32 real, f32 imaginary). The
    /// single-precision norm must be 1 within 1e-6; the vector is then
    /// renormalized in double precision.
    pub fn load_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Validation(format!(
                "{}: length {} is not a multiple of 8",
                path.display(),
                bytes.len()
            )));
        }
        let f = |c: &[u8]| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        let mut amps: Vec<Complex64> = bytes
            .chunks_exact(8)
            .map(|c| Complex64::new(f(&c[..4]), f(&c[4..])))
            .collect();
        let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > 1e-6 {
            return Err(Error::Unnormalized { norm_sq });
        }
        let s = norm_sq.sqrt();
        amps.iter_mut().for_each(|a| *a /= s);
        Statevector::from_amplitudes(amps)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for a in &self.amps {
            out.write_all(&(a.re as f32).to_le_bytes())?;
            out.write_all(&(a.im as f32).to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_pauli(&self, p: &PauliString) -> Result<()> {
        if p.num_qubits() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: p.num_qubits(),
            });
        }
        Ok(())
    }

    /// `<psi|P|psi>`.
    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        self.check_pauli(p)?;
        let (x, z, ny) = pauli_low_masks(p);
        let iy = i_pow(ny);
        let term = |b: usize| -> f64 {
            let a = self.amps[b];
            if a == Complex64::new(0.0, 0.0) {
                return 0.0;
            }
            (self.amps[b ^ x].conj() * phase_at(b, z, iy) * a).re
        };
        let dim = self.amps.len();
        Ok(if dim >= PAR_THRESHOLD {
            (0..dim).into_par_iter().map(term).sum()
        } else {
            (0..dim).map(term).sum()
        })
    }

    /// In place `|psi> -> P|psi>`.
    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.check_pauli(p)?;
        let (x, z, ny) = pauli_low_masks(p);
        let iy = i_pow(ny);
        let old = self.amps.clone();
        for (b, a) in old.into_iter().enumerate() {
            self.amps[b ^ x] = phase_at(b, z, iy) * a;
        }
        Ok(())
    }

    /// In place `|psi> -> exp(-i theta P / 2) |psi>`.
    pub fn apply_rotation(&mut self, p: &PauliString, theta: f64) -> Result<()> {
        self.check_pauli(p)?;
        let (x, z, ny) = pauli_low_masks(p);
        let iy = i_pow(ny);
        let c = (theta / 2.0).cos();
        let ms = Complex64::new(0.0, -(theta / 2.0).sin());
        if x == 0 {
            self.amps
                .iter_mut()
                .enumerate()
                .for_each(|(b, a)| *a *= c + ms * phase_at(b, z, iy));
            return Ok(());
        }
        // Pair b with b ^ x where b has the top bit of x clear.
        let hb = 1usize << (usize::BITS - 1 - x.leading_zeros());
        let dim = self.amps.len();
        for b in 0..dim {
            if b & hb != 0 {
                continue;
            }
            let b2 = b ^ x;
            let (a1, a2) = (self.amps[b], self.amps[b2]);
            // (P psi)[b2] = phase(b) a1 and (P psi)[b] = phase(b2) a2
            self.amps[b] = c * a1 + ms * phase_at(b2, z, iy) * a2;
            self.amps[b2] = c * a2 + ms * phase_at(b, z, iy) * a1;
        }
        Ok(())
    }

    fn apply_local(&mut self, u: &crate::linalg::CMat, qubits: &[usize]) {
        let k = qubits.len();
        let d = 1usize << k;
        let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
        let mut idx = vec![0usize; d];
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        for base in 0..self.amps.len() {
            if base & mask != 0 {
                continue;
            }
            for (l, slot) in idx.iter_mut().enumerate() {
                let mut b = base;
                for (j, &q) in qubits.iter().enumerate() {
                    if (l >> j) & 1 == 1 {
                        b |= 1 << q;
                    }
                }
                *slot = b;
            }
            for (r, out) in buf.iter_mut().enumerate().take(d) {
                *out = (0..d).map(|c| u.get(r, c) * self.amps[idx[c]]).sum();
            }
            for (&i, &v) in idx.iter().zip(buf.iter()).take(d) {
                self.amps[i] = v;
            }
        }
    }

    /// Applies a Clifford via its dense gate matrices.
    pub fn apply_clifford(&mut self, g: &CliffordGate) -> Result<()> {
        if let Some(q) = g.max_qubit() {
            if q >= self.n {
                return Err(Error::Validation(format!(
                    "gate {g} out of range for {} qubits",
                    self.n
                )));
            }
        }
        g.for_each_generator(&mut |kind: CliffordKind, qs: &[usize]| {
            self.apply_local(&kind.matrix(), qs);
        });
        Ok(())
    }

    /// Applies the circuit's gates in order under parameters `alpha`.
    pub fn apply_circuit(&mut self, circuit: &Circuit, alpha: &[f64]) -> Result<()> {
        if circuit.num_qubits() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: circuit.num_qubits(),
            });
        }
        circuit.check_params(alpha)?;
        for g in circuit.gates() {
            match g {
                Gate::Clifford(c) => self.apply_clifford(c)?,
                Gate::Rotation { generator, param } => {
                    self.apply_rotation(generator, param.angle(alpha))?
                }
            }
        }
        Ok(())
    }

    /// `sum_P a_P <psi|P|psi>`.
    pub fn observable_expectation(&self, obs: &ObservableSpec) -> Result<f64> {
        obs.terms()
            .iter()
            .map(|(p, a)| Ok(a * self.expectation(p)?))
            .sum()
    }

    /// Born-rule probabilities in the computational basis.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// Supported initial states `rho = |psi><psi|`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    AllZero(usize),
    AllPlus(usize),
    /// Custom dense vector, at most [`DENSE_CAP`] qubits.
    Dense(Arc<Statevector>),
    /// `|0...0>` evolved by a fixed circuit, at most [`TROTTER_CAP`] qubits.
    TrotterEvolvedZero(Arc<Statevector>),
}

impl InitialState {
    pub fn dense(sv: Statevector) -> Result<Self> {
        Statevector::check_cap(sv.n, DENSE_CAP)?;
        Ok(InitialState::Dense(Arc::new(sv)))
    }

    /// Evolves `|0...0>` through `circuit` at parameters `alpha`.
    pub fn trotter_evolved_zero(circuit: &Circuit, alpha: &[f64]) -> Result<Self> {
        let mut sv = Statevector::zero(circuit.num_qubits())?;
        sv.apply_circuit(circuit, alpha)?;
        Ok(InitialState::TrotterEvolvedZero(Arc::new(sv)))
    }

    pub fn num_qubits(&self) -> usize {
        match self {
            InitialState::AllZero(n) | InitialState::AllPlus(n) => *n,
            InitialState::Dense(sv) | InitialState::TrotterEvolvedZero(sv) => sv.n,
        }
    }

    pub fn is_stabilizer(&self) -> bool {
        matches!(self, InitialState::AllZero(_) | InitialState::AllPlus(_))
    }

    /// Dense amplitudes; stabilizer states are materialized on demand.
    pub fn to_statevector(&self) -> Result<Statevector> {
        match self {
            InitialState::AllZero(n) => Statevector::zero(*n),
            InitialState::AllPlus(n) => Statevector::plus(*n),
            InitialState::Dense(sv) | InitialState::TrotterEvolvedZero(sv) => Ok((**sv).clone()),
        }
    }

    fn dense_cap(&self) -> usize {
        match self {
            InitialState::TrotterEvolvedZero(_) => TROTTER_CAP,
            _ => DENSE_CAP,
        }
    }
}

/// `Tr[rho P]`.
pub fn overlap(state: &InitialState, p: &PauliString) -> Result<f64> {
    if p.num_qubits() != state.num_qubits() {
        return Err(Error::Dimension {
            expected: state.num_qubits(),
            found: p.num_qubits(),
        });
    }
    Ok(match state {
        InitialState::AllZero(_) => f64::from(p.is_diagonal()),
        InitialState::AllPlus(_) => f64::from(p.is_x_type()),
        InitialState::Dense(sv) | InitialState::TrotterEvolvedZero(sv) => sv.expectation(p)?,
    })
}

/// Exact `Tr[O U(alpha) rho U(alpha)^dagger]` by dense simulation.
pub fn exact_expectation(
    circuit: &Circuit,
    alpha: &[f64],
    obs: &ObservableSpec,
    state: &InitialState,
) -> Result<f64> {
    let n = circuit.num_qubits();
    if state.num_qubits() != n || obs.num_qubits() != n {
        return Err(Error::Dimension {
            expected: n,
            found: if state.num_qubits() != n {
                state.num_qubits()
            } else {
                obs.num_qubits()
            },
        });
    }
    let cap = state.dense_cap();
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let mut sv = state.to_statevector()?;
    sv.apply_circuit(circuit, alpha)?;
    sv.observable_expectation(obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{random_circuit, ParamRef, RandomCircuitConfig};
    use crate::linalg::pauli_matrix_of;
    use crate::pauli::Letter;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        PauliString::from_letters(s).unwrap()
    }

    #[test]
    fn stabilizer_overlaps() {
        assert_eq!(overlap(&InitialState::AllZero(2), &p("ZZ")).unwrap(), 1.0);
        assert_eq!(overlap(&InitialState::AllZero(2), &p("XI")).unwrap(), 0.0);
        assert_eq!(overlap(&InitialState::AllPlus(2), &p("XX")).unwrap(), 1.0);
        assert_eq!(overlap(&InitialState::AllPlus(2), &p("XZ")).unwrap(), 0.0);
        assert!(overlap(&InitialState::AllPlus(3), &p("XX")).is_err());
    }

    #[test]
    fn dense_overlaps_match_closed_form_exhaustively() {
        for n in 1..=5 {
            let zero = InitialState::dense(Statevector::zero(n).unwrap()).unwrap();
            let plus = InitialState::dense(Statevector::plus(n).unwrap()).unwrap();
            for code in 0..(1usize << (2 * n)) {
                let mut q = PauliString::identity(n);
                for j in 0..n {
                    let x = (code >> (2 * j)) & 1 == 1;
                    let z = (code >> (2 * j + 1)) & 1 == 1;
                    q.set(j, Letter::from_bits(x, z));
                }
                for (dense, closed) in [(&zero, InitialState::AllZero(n)), (&plus, InitialState::AllPlus(n))] {
                    let a = overlap(dense, &q).unwrap();
                    let b = overlap(&closed, &q).unwrap();
                    assert!((a - b).abs() < 1e-12, "{q} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn identity_circuit() {
        let c = Circuit::empty(1);
        let obs = ObservableSpec::single(p("Z"), 1.0).unwrap();
        assert_eq!(exact_expectation(&c, &[], &obs, &InitialState::AllZero(1)).unwrap(), 1.0);
    }

    #[test]
    fn rz_on_plus() {
        let c = Circuit::new(1, 1, vec![Gate::r1(1, 0, Letter::Z, ParamRef::Free(0))]).unwrap();
        let obs = ObservableSpec::single(p("X"), 1.0).unwrap();
        let f = exact_expectation(&c, &[std::f64::consts::FRAC_PI_3], &obs, &InitialState::AllPlus(1)).unwrap();
        assert!((f - 0.5).abs() < 1e-14);
        for a in [-1.3, 0.0, 0.4, 2.9] {
            let f = exact_expectation(&c, &[a], &obs, &InitialState::AllPlus(1)).unwrap();
            assert!((f - a.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn rotation_matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = 3;
            let mut gen = PauliString::identity(n);
            while gen.is_identity() {
                for q in 0..n {
                    gen.set(q, [Letter::I, Letter::X, Letter::Y, Letter::Z][rng.gen_range(0..4)]);
                }
            }
            let theta: f64 = rng.gen_range(-3.0..3.0);
            let amps: Vec<Complex64> = (0..8)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let amps: Vec<Complex64> = amps.into_iter().map(|a| a / norm).collect();
            let mut sv = Statevector::from_amplitudes(amps.clone()).unwrap();
            sv.apply_rotation(&gen, theta).unwrap();
            // exp(-i theta P / 2) = cos I - i sin P
            let pm = pauli_matrix_of(&gen);
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            for r in 0..8 {
                let want: Complex64 = c * amps[r]
                    + (0..8).map(|k| Complex64::new(0.0, -s) * pm.get(r, k) * amps[k]).sum::<Complex64>();
                assert!((want - sv.amplitudes()[r]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn norm_preserved_over_many_gates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = RandomCircuitConfig {
            n: 8,
            rotations: 600,
            cliffords_per_rotation: 1.0,
            max_generator_weight: 4,
            share_prob: 0.2,
        };
        let c = random_circuit(&cfg, &mut rng);
        assert!(c.gates().len() >= 1000);
        let alpha: Vec<f64> = (0..c.num_params()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut sv = Statevector::plus(8).unwrap();
        sv.apply_circuit(&c, &alpha).unwrap();
        assert!((sv.norm_sq() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn caps_and_normalization() {
        assert!(matches!(Statevector::zero(17), Err(Error::OracleCap { .. })));
        assert!(InitialState::dense(Statevector::zero(15).unwrap()).is_err());
        let c = Circuit::empty(15);
        let obs = ObservableSpec::single(PauliString::single(15, 0, Letter::Z), 1.0).unwrap();
        assert!(matches!(
            exact_expectation(&c, &[], &obs, &InitialState::AllZero(15)),
            Err(Error::OracleCap { .. })
        ));
        let bad = vec![Complex64::new(0.9, 0.0), Complex64::new(0.0, 0.0)];
        assert!(matches!(Statevector::from_amplitudes(bad), Err(Error::Unnormalized { .. })));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.bin");
        let mut sv = Statevector::plus(3).unwrap();
        sv.apply_rotation(&p("XYZ"), 0.3).unwrap();
        sv.write_binary(&path).unwrap();
        let back = Statevector::load_binary(&path).unwrap();
        assert!((back.norm_sq() - 1.0).abs() < 1e-14);
        for (a, b) in back.amplitudes().iter().zip(sv.amplitudes()) {
            assert!((a - b).norm() < 1e-6);
        }
    }
}
