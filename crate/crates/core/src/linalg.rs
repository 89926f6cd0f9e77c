//! Small dense complex matrices, used to generate and check the Clifford
//! lookup tables. Basis index bit `q` is qubit `q`.

use num_complex::Complex64;

use crate::pauli::PauliString;

#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(dim: usize) -> Self {
        CMat {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = CMat::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Row-major construction from real/imag pairs.
    pub fn from_rows(dim: usize, entries: &[(f64, f64)]) -> Self {
        assert_eq!(entries.len(), dim * dim);
        CMat {
            dim,
            data: entries.iter().map(|&(re, im)| Complex64::new(re, im)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    out.data[i * d + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &CMat) -> CMat {
        CMat {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> CMat {
        CMat {
            dim: self.dim,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn adjoint(&self) -> CMat {
        let d = self.dim;
        let mut out = CMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                out.data[j * d + i] = self.get(i, j).conj();
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// `Tr[self^dagger other] / dim`, the normalized Hilbert-Schmidt product.
    pub fn hs_overlap(&self, other: &CMat) -> Complex64 {
        let s: Complex64 = self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum();
        s / self.dim as f64
    }
}

/// Phase of `P|b> = phase * |b xor x>` for a Pauli given by word masks.
#[inline]
pub fn pauli_phase(b: usize, x: usize, z: usize) -> Complex64 {
    let ny = (x & z).count_ones();
    let sign = if (b & z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
    let ip = match ny % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    ip * sign
}

/// Dense matrix of a Pauli on `nq` qubits given by bit masks.
pub fn pauli_matrix(nq: usize, x: usize, z: usize) -> CMat {
    let d = 1usize << nq;
    let mut m = CMat::zeros(d);
    for b in 0..d {
        m.set(b ^ x, b, pauli_phase(b, x, z));
    }
    m
}

/// Dense matrix of a (small) Pauli string.
pub fn pauli_matrix_of(p: &PauliString) -> CMat {
    let n = p.num_qubits();
    assert!(n <= 12, "dense Pauli matrices are for small n only");
    let (mut x, mut z) = (0usize, 0usize);
    for q in 0..n {
        x |= (p.x_bit(q) as usize) << q;
        z |= (p.z_bit(q) as usize) << q;
    }
    pauli_matrix(n, x, z)
}

/// Converts a local Pauli code (`x` at bit `2j`, `z` at bit `2j+1`) to masks.
#[inline]
pub fn code_to_masks(code: usize, nq: usize) -> (usize, usize) {
    let (mut x, mut z) = (0usize, 0usize);
    for j in 0..nq {
        x |= ((code >> (2 * j)) & 1) << j;
        z |= ((code >> (2 * j + 1)) & 1) << j;
    }
    (x, z)
}

#[inline]
pub fn masks_to_code(x: usize, z: usize, nq: usize) -> usize {
    let mut code = 0usize;
    for j in 0..nq {
        code |= ((x >> j) & 1) << (2 * j);
        code |= ((z >> j) & 1) << (2 * j + 1);
    }
    code
}
