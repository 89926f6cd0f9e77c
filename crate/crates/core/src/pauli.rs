//! Bit-packed Pauli strings.
//!
//! A Pauli string on `n` qubits is stored as two bit-vectors, an x-mask and a
//! z-mask, packed into 64-bit words with qubit `q` at word `q / 64`, bit
//! `q % 64`. The letter on a qubit is read off the pair `(x, z)`:
//!
//! | (x, z) | letter |
//! |--------|--------|
//! | (0, 0) | I      |
//! | (1, 0) | X      |
//! | (1, 1) | Y      |
//! | (0, 1) | Z      |
//!
//! Strings carry no phase. Products return their phase separately as a
//! [`Phase`], Clifford conjugation returns a [`SignedPauli`].

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

const WORD_BITS: usize = 64;

#[inline]
pub(crate) fn words_for(n: usize) -> usize {
    n.div_ceil(WORD_BITS)
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    #[inline]
    pub fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    #[inline]
    pub fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' | 'i' | '_' => Some(Letter::I),
            'X' | 'x' => Some(Letter::X),
            'Y' | 'y' => Some(Letter::Y),
            'Z' | 'z' => Some(Letter::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

/// A power of `i`: the phase of a Pauli product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    One,
    I,
    MinusOne,
    MinusI,
}

impl Phase {
    #[inline]
    pub fn from_exponent(k: u32) -> Self {
        match k & 3 {
            0 => Phase::One,
            1 => Phase::I,
            2 => Phase::MinusOne,
            _ => Phase::MinusI,
        }
    }

    #[inline]
    pub fn exponent(self) -> u32 {
        match self {
            Phase::One => 0,
            Phase::I => 1,
            Phase::MinusOne => 2,
            Phase::MinusI => 3,
        }
    }

    #[inline]
    #[allow(clippy::should_implement_trait)]
    pub fn mul(self, other: Phase) -> Phase {
        Phase::from_exponent(self.exponent() + other.exponent())
    }

    /// The real value of the phase, if it is real.
    #[inline]
    pub fn as_real(self) -> Option<f64> {
        match self {
            Phase::One => Some(1.0),
            Phase::MinusOne => Some(-1.0),
            _ => None,
        }
    }

    pub fn to_complex(self) -> num_complex::Complex64 {
        use num_complex::Complex64 as C;
        match self {
            Phase::One => C::new(1.0, 0.0),
            Phase::I => C::new(0.0, 1.0),
            Phase::MinusOne => C::new(-1.0, 0.0),
            Phase::MinusI => C::new(0.0, -1.0),
        }
    }
}

/// An `n`-qubit Pauli operator without phase.
///
/// Words are laid out as `[x_0 .. x_{w-1}, z_0 .. z_{w-1}]`; up to 128 qubits
/// stay inline.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    n: usize,
    words: SmallVec<[u64; 4]>,
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        PauliString {
            n,
            words: SmallVec::from_elem(0, 2 * words_for(n)),
        }
    }

    /// Builds a string from explicit masks. Bits beyond `n` must be clear.
    pub fn from_masks(n: usize, x: &[u64], z: &[u64]) -> Result<Self> {
        let w = words_for(n);
        if x.len() != w || z.len() != w {
            return Err(Error::Dimension {
                expected: w,
                found: x.len().max(z.len()),
            });
        }
        let mut words: SmallVec<[u64; 4]> = SmallVec::with_capacity(2 * w);
        words.extend_from_slice(x);
        words.extend_from_slice(z);
        let p = PauliString { n, words };
        if !p.tail_clear() {
            return Err(Error::Validation(format!(
                "mask bits set beyond qubit count {n}"
            )));
        }
        Ok(p)
    }

    /// Parses a dense letter string, index 0 being the leftmost character.
    pub fn from_letters(text: &str) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        let mut p = PauliString::identity(chars.len());
        for (q, c) in chars.into_iter().enumerate() {
            let letter = Letter::from_char(c).ok_or_else(|| Error::PauliParse {
                text: text.to_string(),
                reason: format!("unexpected character {c:?} at position {q}"),
            })?;
            p.set(q, letter);
        }
        Ok(p)
    }

    /// Parses the sparse form `"Z0 Z1"` (letter followed by qubit index,
    /// whitespace separated). The identity may be written as `""` or `"I"`.
    pub fn from_sparse(n: usize, text: &str) -> Result<Self> {
        let mut p = PauliString::identity(n);
        let bad = |reason: String| Error::PauliParse {
            text: text.to_string(),
            reason,
        };
        for token in text.split_whitespace() {
            let mut chars = token.chars();
            let c = chars.next().expect("split_whitespace yields nonempty tokens");
            let letter = Letter::from_char(c).ok_or_else(|| bad(format!("bad letter {c:?}")))?;
            let rest = chars.as_str();
            if rest.is_empty() {
                if letter == Letter::I {
                    continue;
                }
                return Err(bad(format!("missing qubit index in {token:?}")));
            }
            let q: usize = rest
                .parse()
                .map_err(|_| bad(format!("bad qubit index in {token:?}")))?;
            if q >= n {
                return Err(bad(format!("qubit {q} out of range for n = {n}")));
            }
            if p.letter(q) != Letter::I {
                return Err(bad(format!("qubit {q} listed twice")));
            }
            p.set(q, letter);
        }
        Ok(p)
    }

    /// Accepts either the dense or the sparse text form. Dense strings must
    /// have exactly `n` letters.
    pub fn parse(n: usize, text: &str) -> Result<Self> {
        let trimmed = text.trim();
        if trimmed.chars().any(|c| c.is_ascii_digit()) || trimmed.is_empty() || trimmed == "I" {
            return PauliString::from_sparse(n, trimmed);
        }
        let p = PauliString::from_letters(trimmed)?;
        if p.n != n {
            return Err(Error::PauliParse {
                text: text.to_string(),
                reason: format!("expected {n} letters, found {}", p.n),
            });
        }
        Ok(p)
    }

    /// Places `letters` on the listed qubits of an otherwise identity string.
    pub fn from_local(n: usize, letters: &[Letter], qubits: &[usize]) -> Result<Self> {
        if letters.len() != qubits.len() {
            return Err(Error::Dimension {
                expected: qubits.len(),
                found: letters.len(),
            });
        }
        let mut p = PauliString::identity(n);
        for (&l, &q) in letters.iter().zip(qubits) {
            if q >= n {
                return Err(Error::Validation(format!(
                    "qubit {q} out of range for n = {n}"
                )));
            }
            p.set(q, l);
        }
        Ok(p)
    }

    /// Single-letter string on qubit `q`.
    pub fn single(n: usize, q: usize, letter: Letter) -> Self {
        let mut p = PauliString::identity(n);
        p.set(q, letter);
        p
    }

    #[inline]
    pub fn num_qubits(&self) -> usize {
        self.n
    }

    #[inline]
    fn nw(&self) -> usize {
        self.words.len() / 2
    }

    #[inline]
    pub fn x_words(&self) -> &[u64] {
        &self.words[..self.nw()]
    }

    #[inline]
    pub fn z_words(&self) -> &[u64] {
        &self.words[self.nw()..]
    }

    fn tail_clear(&self) -> bool {
        let rem = self.n % WORD_BITS;
        if rem == 0 {
            return true;
        }
        let mask = !((1u64 << rem) - 1);
        let last = self.nw() - 1;
        self.words[last] & mask == 0 && self.words[self.nw() + last] & mask == 0
    }

    #[inline]
    pub fn x_bit(&self, q: usize) -> bool {
        (self.words[q / WORD_BITS] >> (q % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn z_bit(&self, q: usize) -> bool {
        (self.words[self.nw() + q / WORD_BITS] >> (q % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn letter(&self, q: usize) -> Letter {
        assert!(q < self.n, "qubit {q} out of range for n = {}", self.n);
        Letter::from_bits(self.x_bit(q), self.z_bit(q))
    }

    #[inline]
    pub fn set(&mut self, q: usize, letter: Letter) {
        assert!(q < self.n, "qubit {q} out of range for n = {}", self.n);
        let (x, z) = letter.bits();
        let (w, b) = (q / WORD_BITS, q % WORD_BITS);
        let nw = self.nw();
        let bit = 1u64 << b;
        if x {
            self.words[w] |= bit;
        } else {
            self.words[w] &= !bit;
        }
        if z {
            self.words[nw + w] |= bit;
        } else {
            self.words[nw + w] &= !bit;
        }
    }

    pub fn weight(&self) -> usize {
        let nw = self.nw();
        (0..nw)
            .map(|w| (self.words[w] | self.words[nw + w]).count_ones() as usize)
            .sum()
    }

    pub fn is_identity(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// True if the string has no X or Y letter.
    pub fn is_diagonal(&self) -> bool {
        self.x_words().iter().all(|&w| w == 0)
    }

    /// True if the string has no Z or Y letter.
    pub fn is_x_type(&self) -> bool {
        self.z_words().iter().all(|&w| w == 0)
    }

    /// Qubits with a non-identity letter, ascending.
    pub fn support(&self) -> Vec<usize> {
        let nw = self.nw();
        let mut out = Vec::new();
        for w in 0..nw {
            let mut bits = self.words[w] | self.words[nw + w];
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(w * WORD_BITS + b);
                bits &= bits - 1;
            }
        }
        out
    }

    /// True if any qubit in `qubits` carries a non-identity letter.
    #[inline]
    pub fn touches(&self, qubits: &[usize]) -> bool {
        qubits.iter().any(|&q| self.x_bit(q) || self.z_bit(q))
    }

    fn check_dims(&self, other: &PauliString) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Dimension {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    /// Commutation via the parity of the symplectic inner product.
    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        self.check_dims(other)?;
        Ok(self.commutes_unchecked(other))
    }

    #[inline]
    pub(crate) fn commutes_unchecked(&self, other: &PauliString) -> bool {
        let nw = self.nw();
        let mut acc = 0u64;
        for w in 0..nw {
            acc ^= (self.words[w] & other.words[nw + w]) ^ (self.words[nw + w] & other.words[w]);
        }
        acc.count_ones().is_multiple_of(2)
    }

    /// Operator product `self * other = phase * result`.
    pub fn multiply(&self, other: &PauliString) -> Result<(Phase, PauliString)> {
        self.check_dims(other)?;
        Ok(self.multiply_unchecked(other))
    }

    pub(crate) fn multiply_unchecked(&self, other: &PauliString) -> (Phase, PauliString) {
        // With sigma(x, z) = i^{xz} X^x Z^z, the product phase exponent is
        // |x1 z1| + |x2 z2| - |x3 z3| + 2 |z1 x2|  (mod 4).
        let nw = self.nw();
        let mut words: SmallVec<[u64; 4]> = SmallVec::with_capacity(2 * nw);
        words.extend((0..2 * nw).map(|i| self.words[i] ^ other.words[i]));
        let mut k: i64 = 0;
        for w in 0..nw {
            let (x1, z1) = (self.words[w], self.words[nw + w]);
            let (x2, z2) = (other.words[w], other.words[nw + w]);
            let (x3, z3) = (words[w], words[nw + w]);
            k += (x1 & z1).count_ones() as i64 + (x2 & z2).count_ones() as i64
                - (x3 & z3).count_ones() as i64
                + 2 * (z1 & x2).count_ones() as i64;
        }
        (
            Phase::from_exponent(k.rem_euclid(4) as u32),
            PauliString { n: self.n, words },
        )
    }

    /// Extracts the letters on `qubits` as a packed local code: qubit `j` of
    /// the list contributes `x << (2j)` and `z << (2j + 1)`.
    #[inline]
    pub(crate) fn local_code(&self, qubits: &[usize]) -> usize {
        let mut code = 0usize;
        for (j, &q) in qubits.iter().enumerate() {
            code |= (self.x_bit(q) as usize) << (2 * j);
            code |= (self.z_bit(q) as usize) << (2 * j + 1);
        }
        code
    }

    #[inline]
    pub(crate) fn set_local_code(&mut self, qubits: &[usize], code: usize) {
        for (j, &q) in qubits.iter().enumerate() {
            let x = (code >> (2 * j)) & 1 == 1;
            let z = (code >> (2 * j + 1)) & 1 == 1;
            self.set(q, Letter::from_bits(x, z));
        }
    }

    pub fn letters(&self) -> impl Iterator<Item = Letter> + '_ {
        (0..self.n).map(move |q| self.letter(q))
    }

    /// Sparse text form, e.g. `"Z0 Z1"`; the identity renders as `"I"`.
    pub fn to_sparse(&self) -> String {
        let parts: Vec<String> = self
            .support()
            .into_iter()
            .map(|q| format!("{}{}", self.letter(q).as_char(), q))
            .collect();
        if parts.is_empty() {
            "I".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// Lexicographic order on the letter string, with `I < X < Y < Z` and qubit 0
/// most significant.
impl Ord for PauliString {
    fn cmp(&self, other: &Self) -> Ordering {
        match self.n.cmp(&other.n) {
            Ordering::Equal => {}
            o => return o,
        }
        let nw = self.nw();
        for w in 0..nw {
            let diff = (self.words[w] ^ other.words[w]) | (self.words[nw + w] ^ other.words[nw + w]);
            if diff != 0 {
                let q = w * WORD_BITS + diff.trailing_zeros() as usize;
                return rank(self.letter(q)).cmp(&rank(other.letter(q)));
            }
        }
        Ordering::Equal
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[inline]
fn rank(l: Letter) -> u8 {
    match l {
        Letter::I => 0,
        Letter::X => 1,
        Letter::Y => 2,
        Letter::Z => 3,
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.letters() {
            write!(f, "{}", l.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.n <= 32 {
            write!(f, "PauliString({self})")
        } else {
            write!(f, "PauliString(n={}, {})", self.n, self.to_sparse())
        }
    }
}

impl Serialize for PauliString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PauliString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        PauliString::from_letters(&text).map_err(serde::de::Error::custom)
    }
}

/// A Pauli string with a real sign in `{+1, -1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPauli {
    pub pauli: PauliString,
    pub negative: bool,
}

impl SignedPauli {
    pub fn positive(pauli: PauliString) -> Self {
        SignedPauli {
            pauli,
            negative: false,
        }
    }

    #[inline]
    pub fn sign(&self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pauli_matrix_of;

    fn all_paulis(n: usize) -> Vec<PauliString> {
        (0..4usize.pow(n as u32))
            .map(|mut code| {
                let mut p = PauliString::identity(n);
                for q in 0..n {
                    let l = [Letter::I, Letter::X, Letter::Y, Letter::Z][code % 4];
                    code /= 4;
                    p.set(q, l);
                }
                p
            })
            .collect()
    }

    fn p(s: &str) -> PauliString {
        PauliString::from_letters(s).unwrap()
    }

    #[test]
    fn commutation_examples() {
        assert!(!p("X").commutes(&p("Z")).unwrap());
        assert!(p("XI").commutes(&p("IZ")).unwrap());
        assert!(p("XY").commutes(&p("YX")).unwrap());
    }

    #[test]
    fn commutation_matches_matrix_commutator() {
        for a in all_paulis(2) {
            for b in all_paulis(2) {
                let (ma, mb) = (pauli_matrix_of(&a), pauli_matrix_of(&b));
                let comm = ma.mul(&mb).sub(&mb.mul(&ma));
                let zero = comm.max_abs() < 1e-12;
                assert_eq!(a.commutes(&b).unwrap(), zero, "{a} {b}");
            }
        }
    }

    #[test]
    fn multiply_examples() {
        let (ph, r) = p("XYZ").multiply(&p("XYZ")).unwrap();
        assert_eq!(ph, Phase::One);
        assert!(r.is_identity());
        assert_eq!(p("Z").multiply(&p("X")).unwrap(), (Phase::I, p("Y")));
        assert_eq!(p("X").multiply(&p("Z")).unwrap(), (Phase::MinusI, p("Y")));
    }

    #[test]
    fn multiply_matches_matrix_product() {
        for a in all_paulis(2) {
            for b in all_paulis(2) {
                let (ph, r) = a.multiply(&b).unwrap();
                let lhs = pauli_matrix_of(&a).mul(&pauli_matrix_of(&b));
                let rhs = pauli_matrix_of(&r).scale(ph.to_complex());
                assert!(lhs.sub(&rhs).max_abs() < 1e-12, "{a} * {b}");
            }
        }
    }

    #[test]
    fn multiply_is_associative_with_phases() {
        for n in 1..=2 {
            let all = all_paulis(n);
            for a in &all {
                for b in &all {
                    for c in &all {
                        let (p_bc, bc) = b.multiply(c).unwrap();
                        let (p_a_bc, left) = a.multiply(&bc).unwrap();
                        let (p_ab, ab) = a.multiply(b).unwrap();
                        let (p_ab_c, right) = ab.multiply(c).unwrap();
                        assert_eq!(left, right);
                        assert_eq!(p_bc.mul(p_a_bc), p_ab.mul(p_ab_c));
                    }
                }
            }
        }
    }

    #[test]
    fn commutes_iff_products_share_phase() {
        for n in 1..=2 {
            let all = all_paulis(n);
            for a in &all {
                for b in &all {
                    let same = a.multiply(b).unwrap().0 == b.multiply(a).unwrap().0;
                    assert_eq!(a.commutes(b).unwrap(), same);
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            p("X").commutes(&p("XX")),
            Err(Error::Dimension { .. })
        ));
        assert!(p("X").multiply(&p("XX")).is_err());
    }

    #[test]
    fn weight_and_support() {
        assert_eq!(PauliString::identity(5).weight(), 0);
        let q = p("IXIYZ");
        assert_eq!(q.weight(), 3);
        assert_eq!(q.support(), vec![1, 3, 4]);
        assert_eq!(q.to_sparse(), "X1 Y3 Z4");
    }

    #[test]
    fn text_forms_agree() {
        let dense = PauliString::parse(4, "ZZII").unwrap();
        let sparse = PauliString::parse(4, "Z0 Z1").unwrap();
        assert_eq!(dense, sparse);
        assert_eq!(dense.to_string(), "ZZII");
        assert!(PauliString::parse(4, "ZZI").is_err());
        assert!(PauliString::parse(4, "Z4").is_err());
        assert!(PauliString::parse(4, "Z1 X1").is_err());
        assert!(PauliString::from_letters("XQ").is_err());
    }

    #[test]
    fn wide_strings_cross_word_boundaries() {
        let n = 130;
        let mut a = PauliString::identity(n);
        a.set(63, Letter::X);
        a.set(64, Letter::Z);
        a.set(129, Letter::Y);
        assert_eq!(a.weight(), 3);
        assert_eq!(a.support(), vec![63, 64, 129]);
        let b = PauliString::single(n, 64, Letter::X);
        assert!(!a.commutes(&b).unwrap());
        let (ph, r) = a.multiply(&a).unwrap();
        assert_eq!(ph, Phase::One);
        assert!(r.is_identity());
        assert!(PauliString::from_masks(3, &[0b1000], &[0]).is_err());
    }

    #[test]
    fn ordering_is_lexicographic_in_letters() {
        let mut v = all_paulis(2);
        v.sort();
        let texts: Vec<String> = v.iter().map(|p| p.to_string()).collect();
        let mut sorted = texts.clone();
        sorted.sort_by_key(|s| {
            s.chars()
                .map(|c| match c {
                    'I' => 0,
                    'X' => 1,
                    'Y' => 2,
                    _ => 3,
                })
                .collect::<Vec<_>>()
        });
        assert_eq!(texts, sorted);
        assert_eq!(texts[0], "II");
        assert_eq!(texts[1], "IX");
    }
}
