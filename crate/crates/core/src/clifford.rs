//! Clifford generators and their Heisenberg action on Pauli strings.
//!
//! Conjugation `C^dagger P C` goes through lookup tables indexed by the local
//! Pauli code on the gate's support. The tables are derived once from the
//! dense gate matrices, so the dense matrices are the single source of truth.

use std::fmt;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::linalg::{code_to_masks, masks_to_code, pauli_matrix, CMat};
use crate::pauli::{PauliString, SignedPauli};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CliffordKind {
    H,
    S,
    Sdg,
    X,
    Y,
    Z,
    Cnot,
    Cz,
    Swap,
}

pub const ALL_KINDS: [CliffordKind; 9] = [
    CliffordKind::H,
    CliffordKind::S,
    CliffordKind::Sdg,
    CliffordKind::X,
    CliffordKind::Y,
    CliffordKind::Z,
    CliffordKind::Cnot,
    CliffordKind::Cz,
    CliffordKind::Swap,
];

impl CliffordKind {
    pub fn arity(self) -> usize {
        match self {
            CliffordKind::Cnot | CliffordKind::Cz | CliffordKind::Swap => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CliffordKind::H => "h",
            CliffordKind::S => "s",
            CliffordKind::Sdg => "sdg",
            CliffordKind::X => "x",
            CliffordKind::Y => "y",
            CliffordKind::Z => "z",
            CliffordKind::Cnot => "cnot",
            CliffordKind::Cz => "cz",
            CliffordKind::Swap => "swap",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ALL_KINDS.iter().copied().find(|k| k.name() == name.to_ascii_lowercase())
    }

    fn index(self) -> usize {
        ALL_KINDS.iter().position(|&k| k == self).unwrap()
    }

    /// Dense unitary on the gate's local qubits; list position `j` of the
    /// gate's qubits is local bit `j` (for CNOT, bit 0 is the control).
    pub fn matrix(self) -> CMat {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let o = (0.0, 0.0);
        let one = (1.0, 0.0);
        match self {
            CliffordKind::H => CMat::from_rows(2, &[(r, 0.0), (r, 0.0), (r, 0.0), (-r, 0.0)]),
            CliffordKind::S => CMat::from_rows(2, &[one, o, o, (0.0, 1.0)]),
            CliffordKind::Sdg => CMat::from_rows(2, &[one, o, o, (0.0, -1.0)]),
            CliffordKind::X => pauli_matrix(1, 1, 0),
            CliffordKind::Y => pauli_matrix(1, 1, 1),
            CliffordKind::Z => pauli_matrix(1, 0, 1),
            CliffordKind::Cnot => permutation(|b| b ^ ((b & 1) << 1)),
            CliffordKind::Swap => permutation(|b| ((b & 1) << 1) | ((b >> 1) & 1)),
            CliffordKind::Cz => {
                let mut m = CMat::identity(4);
                m.set(3, 3, Complex64::new(-1.0, 0.0));
                m
            }
        }
    }
}

fn permutation(f: impl Fn(usize) -> usize) -> CMat {
    let mut m = CMat::zeros(4);
    for b in 0..4 {
        m.set(f(b), b, Complex64::new(1.0, 0.0));
    }
    m
}

/// Conjugation table entry: image local code and sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableEntry {
    pub code: u8,
    pub negative: bool,
}

/// Table for `kind`, indexed by local code (length 4 or 16).
pub fn conjugation_table(kind: CliffordKind) -> &'static [TableEntry] {
    static TABLES: OnceLock<Vec<Vec<TableEntry>>> = OnceLock::new();
    &TABLES.get_or_init(|| ALL_KINDS.iter().map(|&k| build_table(k)).collect())[kind.index()]
}

fn build_table(kind: CliffordKind) -> Vec<TableEntry> {
    let nq = kind.arity();
    let u = kind.matrix();
    let ud = u.adjoint();
    let size = 1usize << (2 * nq);
    (0..size)
        .map(|code| {
            let (x, z) = code_to_masks(code, nq);
            let image = ud.mul(&pauli_matrix(nq, x, z)).mul(&u);
            for qx in 0..(1usize << nq) {
                for qz in 0..(1usize << nq) {
                    let overlap = pauli_matrix(nq, qx, qz).hs_overlap(&image);
                    if (overlap.norm() - 1.0).abs() < 1e-9 {
                        assert!(overlap.im.abs() < 1e-9, "Clifford image has non-real sign");
                        return TableEntry {
                            code: masks_to_code(qx, qz, nq) as u8,
                            negative: overlap.re < 0.0,
                        };
                    }
                }
            }
            panic!("{kind:?} does not map Pauli code {code} to a Pauli");
        })
        .collect()
}

/// A Clifford gate: a generator on specific qubits, or a sequence of gates
/// applied in list order (first entry acts first on the state).
#[derive(Debug, Clone, PartialEq)]
pub enum CliffordGate {
    Generator {
        kind: CliffordKind,
        qubits: SmallVec<[usize; 2]>,
    },
    Sequence(Vec<CliffordGate>),
}

impl CliffordGate {
    pub fn new(kind: CliffordKind, qubits: &[usize]) -> Result<Self> {
        if qubits.len() != kind.arity() {
            return Err(Error::Validation(format!(
                "{} takes {} qubit(s), got {}",
                kind.name(),
                kind.arity(),
                qubits.len()
            )));
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::Validation(format!(
                "{} qubits must be distinct, got {:?}",
                kind.name(),
                qubits
            )));
        }
        Ok(CliffordGate::Generator {
            kind,
            qubits: SmallVec::from_slice(qubits),
        })
    }

    pub fn sequence(gates: Vec<CliffordGate>) -> Self {
        CliffordGate::Sequence(gates)
    }

    /// Largest qubit index touched, if any.
    pub fn max_qubit(&self) -> Option<usize> {
        match self {
            CliffordGate::Generator { qubits, .. } => qubits.iter().copied().max(),
            CliffordGate::Sequence(gs) => gs.iter().filter_map(|g| g.max_qubit()).max(),
        }
    }

    /// Calls `f` on every generator in state-application order.
    pub fn for_each_generator(&self, f: &mut impl FnMut(CliffordKind, &[usize])) {
        match self {
            CliffordGate::Generator { kind, qubits } => f(*kind, qubits),
            CliffordGate::Sequence(gs) => gs.iter().for_each(|g| g.for_each_generator(f)),
        }
    }

    /// In-place `C^dagger P C`; returns true if the sign flipped.
    pub(crate) fn conjugate_in_place(&self, p: &mut PauliString) -> bool {
        match self {
            CliffordGate::Generator { kind, qubits } => {
                let code = p.local_code(qubits);
                if code == 0 {
                    return false;
                }
                let entry = conjugation_table(*kind)[code];
                p.set_local_code(qubits, entry.code as usize);
                entry.negative
            }
            // (G_k ... G_1)^dagger P (G_k ... G_1): innermost is G_k.
            CliffordGate::Sequence(gs) => gs
                .iter()
                .rev()
                .fold(false, |neg, g| neg ^ g.conjugate_in_place(p)),
        }
    }
}

impl fmt::Display for CliffordGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliffordGate::Generator { kind, qubits } => write!(f, "{}{:?}", kind.name(), qubits),
            CliffordGate::Sequence(gs) => {
                write!(f, "seq[")?;
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{g}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// Heisenberg action of a Clifford on a Pauli: returns `C^dagger P C`.
pub fn conjugate_clifford(p: &PauliString, gate: &CliffordGate) -> Result<SignedPauli> {
    if let Some(q) = gate.max_qubit() {
        if q >= p.num_qubits() {
            return Err(Error::Validation(format!(
                "gate {gate} touches qubit {q} but the Pauli has {} qubits",
                p.num_qubits()
            )));
        }
    }
    let mut out = p.clone();
    let negative = gate.conjugate_in_place(&mut out);
    Ok(SignedPauli {
        pauli: out,
        negative,
    })
}
