//! Observables as real linear combinations of Pauli strings.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString};

/// `O = sum_P a_P P` with distinct Paulis and nonzero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSpec {
    n: usize,
    terms: Vec<(PauliString, f64)>,
}

impl ObservableSpec {
    pub fn new(n: usize, terms: Vec<(PauliString, f64)>) -> Result<Self> {
        let mut seen = FxHashSet::default();
        for (i, (p, a)) in terms.iter().enumerate() {
            if p.num_qubits() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: p.num_qubits(),
                });
            }
            if !a.is_finite() || *a == 0.0 {
                return Err(Error::Validation(format!(
                    "term {i} ({p}) has coefficient {a}; coefficients must be finite and nonzero"
                )));
            }
            if !seen.insert(p.clone()) {
                return Err(Error::Validation(format!("duplicate Pauli {p} in observable")));
            }
        }
        Ok(ObservableSpec { n, terms })
    }

    pub fn single(p: PauliString, coeff: f64) -> Result<Self> {
        ObservableSpec::new(p.num_qubits(), vec![(p, coeff)])
    }

    /// `Z_i Z_j` on `n` qubits.
    pub fn zz(n: usize, i: usize, j: usize) -> Result<Self> {
        let p = PauliString::from_local(n, &[Letter::Z, Letter::Z], &[i, j])?;
        ObservableSpec::single(p, 1.0)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(PauliString, f64)] {
        &self.terms
    }

    pub fn num_paulis(&self) -> usize {
        self.terms.len()
    }

    pub fn norm1(&self) -> f64 {
        self.terms.iter().map(|(_, a)| a.abs()).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.terms.iter().map(|(_, a)| a * a).sum::<f64>().sqrt()
    }

    /// Upper bound on the operator norm, `||a||_1` (tight for one term).
    pub fn op_norm_bound(&self) -> f64 {
        self.norm1()
    }

    pub fn coeff(&self, p: &PauliString) -> f64 {
        self.terms.iter().find(|(q, _)| q == p).map_or(0.0, |(_, a)| *a)
    }

    /// Parses `{"terms":[{"pauli":..., "qubits":[...], "coeff":...}]}`.
    ///
    /// With `qubits`, the letters are local to the listed qubits; without,
    /// `pauli` is a full-width letter string or a sparse form such as `"Z0 Z1"`.
    pub fn from_json(n: usize, text: &str) -> Result<Self> {
        let doc: ObservableDoc = serde_json::from_str(text)
            .map_err(|e| Error::schema("$", e.to_string()))?;
        let mut terms = Vec::with_capacity(doc.terms.len());
        for (i, t) in doc.terms.iter().enumerate() {
            let path = format!("$.terms[{i}]");
            let p = match &t.qubits {
                Some(qs) => {
                    let letters: Vec<Letter> = t
                        .pauli
                        .chars()
                        .map(|c| {
                            Letter::from_char(c).ok_or_else(|| {
                                Error::schema(format!("{path}.pauli"), format!("bad letter {c:?}"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    if letters.len() != qs.len() {
                        return Err(Error::schema(
                            format!("{path}.qubits"),
                            format!("{} letters but {} qubits", letters.len(), qs.len()),
                        ));
                    }
                    PauliString::from_local(n, &letters, qs)
                        .map_err(|e| Error::schema(path.clone(), e.to_string()))?
                }
                None => PauliString::parse(n, &t.pauli)
                    .map_err(|e| Error::schema(format!("{path}.pauli"), e.to_string()))?,
            };
            terms.push((p, t.coeff));
        }
        ObservableSpec::new(n, terms).map_err(|e| Error::schema("$.terms", e.to_string()))
    }

    /// Sparse-form JSON that [`ObservableSpec::from_json`] reads back.
    pub fn to_json(&self) -> String {
        let doc = ObservableDoc {
            terms: self
                .terms
                .iter()
                .map(|(p, a)| TermDoc {
                    pauli: p.to_sparse(),
                    qubits: None,
                    coeff: *a,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("observable serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservableDoc {
    terms: Vec<TermDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    pauli: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qubits: Option<Vec<usize>>,
    coeff: f64,
}
