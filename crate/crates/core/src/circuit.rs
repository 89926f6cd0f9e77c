//! Circuit IR: Clifford gates interleaved with Pauli rotations
//! `exp(-i theta P / 2)`, in state-application order.

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::clifford::{CliffordGate, CliffordKind, ALL_KINDS};
use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString};

/// Angle source for a rotation.
///
/// `Free` and `Shared` are distinguished by use count: [`Circuit::new`]
/// rewrites an index referenced by one gate to `Free` and an index referenced
/// by several gates to `Shared`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamRef {
    Free(usize),
    Shared(usize),
    Fixed(f64),
}

impl ParamRef {
    pub fn index(&self) -> Option<usize> {
        match *self {
            ParamRef::Free(i) | ParamRef::Shared(i) => Some(i),
            ParamRef::Fixed(_) => None,
        }
    }

    #[inline]
    pub fn angle(&self, alpha: &[f64]) -> f64 {
        match *self {
            ParamRef::Free(i) | ParamRef::Shared(i) => alpha[i],
            ParamRef::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Clifford(CliffordGate),
    /// `generator` is full-width; it must not be the identity.
    Rotation { generator: PauliString, param: ParamRef },
}

impl Gate {
    pub fn rotation(generator: PauliString, param: ParamRef) -> Self {
        Gate::Rotation { generator, param }
    }

    /// Single-qubit rotation about `letter`.
    pub fn r1(n: usize, q: usize, letter: Letter, param: ParamRef) -> Self {
        Gate::rotation(PauliString::single(n, q, letter), param)
    }

    /// Two-qubit rotation about `a b`.
    pub fn r2(n: usize, q: (usize, usize), letters: (Letter, Letter), param: ParamRef) -> Result<Self> {
        let p = PauliString::from_local(n, &[letters.0, letters.1], &[q.0, q.1])?;
        Ok(Gate::rotation(p, param))
    }

    pub fn clifford(kind: CliffordKind, qubits: &[usize]) -> Result<Self> {
        Ok(Gate::Clifford(CliffordGate::new(kind, qubits)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n: usize,
    m: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    /// Validates qubit ranges, generators and parameter indices, and
    /// normalizes `Free`/`Shared` tags by use count.
    pub fn new(n: usize, m: usize, mut gates: Vec<Gate>) -> Result<Self> {
        let mut uses = vec![0usize; m];
        for (i, g) in gates.iter().enumerate() {
            match g {
                Gate::Clifford(c) => {
                    if let Some(q) = c.max_qubit() {
                        if q >= n {
                            return Err(Error::Validation(format!(
                                "gate {i}: qubit {q} out of range for n = {n}"
                            )));
                        }
                    }
                }
                Gate::Rotation { generator, param } => {
                    if generator.num_qubits() != n {
                        return Err(Error::Validation(format!(
                            "gate {i}: generator has {} qubits, circuit has {n}",
                            generator.num_qubits()
                        )));
                    }
                    if generator.is_identity() {
                        return Err(Error::Validation(format!("gate {i}: identity generator")));
                    }
                    match param {
                        ParamRef::Fixed(v) if !v.is_finite() => {
                            return Err(Error::Validation(format!("gate {i}: angle {v} is not finite")));
                        }
                        ParamRef::Fixed(_) => {}
                        ParamRef::Free(k) | ParamRef::Shared(k) => {
                            if *k >= m {
                                return Err(Error::Validation(format!(
                                    "gate {i}: parameter index {k} >= m = {m}"
                                )));
                            }
                            uses[*k] += 1;
                        }
                    }
                }
            }
        }
        if let Some(k) = uses.iter().position(|&u| u == 0) {
            return Err(Error::Validation(format!("parameter {k} is never referenced")));
        }
        for g in &mut gates {
            if let Gate::Rotation { param, .. } = g {
                if let Some(k) = param.index() {
                    *param = if uses[k] == 1 {
                        ParamRef::Free(k)
                    } else {
                        ParamRef::Shared(k)
                    };
                }
            }
        }
        Ok(Circuit { n, m, gates })
    }

    pub fn empty(n: usize) -> Self {
        Circuit { n, m: 0, gates: Vec::new() }
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn num_params(&self) -> usize {
        self.m
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_rotations(&self) -> usize {
        self.gates.iter().filter(|g| matches!(g, Gate::Rotation { .. })).count()
    }

    /// Rotations whose angle comes from the parameter vector.
    pub fn num_param_rotations(&self) -> usize {
        self.gates
            .iter()
            .filter(|g| matches!(g, Gate::Rotation { param, .. } if param.index().is_some()))
            .count()
    }

    /// Number of gates referencing each parameter.
    pub fn param_uses(&self) -> Vec<usize> {
        let mut uses = vec![0; self.m];
        for g in &self.gates {
            if let Gate::Rotation { param, .. } = g {
                if let Some(k) = param.index() {
                    uses[k] += 1;
                }
            }
        }
        uses
    }

    pub fn check_params(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                found: alpha.len(),
            });
        }
        Ok(())
    }

    /// Parses the circuit JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CircuitDoc =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        let mut gates = Vec::with_capacity(doc.gates.len());
        for (i, g) in doc.gates.iter().enumerate() {
            gates.push(g.to_gate(doc.n, &format!("$.gates[{i}]"))?);
        }
        Circuit::new(doc.n, doc.m, gates).map_err(|e| match e {
            Error::Validation(msg) => Error::schema("$.gates", msg),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let doc = CircuitDoc {
            n: self.n,
            m: self.m,
            gates: self.gates.iter().map(GateDoc::from_gate).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("circuit serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitDoc {
    n: usize,
    m: usize,
    gates: Vec<GateDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum GateDoc {
    Clifford {
        kind: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        qubits: Vec<usize>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        gates: Vec<GateDoc>,
    },
    Rot {
        pauli: String,
        qubits: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        param: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
    },
}

impl GateDoc {
    fn to_gate(&self, n: usize, path: &str) -> Result<Gate> {
        match self {
            GateDoc::Clifford { .. } => Ok(Gate::Clifford(self.to_clifford(n, path)?)),
            GateDoc::Rot {
                pauli,
                qubits,
                param,
                value,
            } => {
                let letters: Vec<Letter> = pauli
                    .chars()
                    .map(|c| {
                        Letter::from_char(c).ok_or_else(|| {
                            Error::schema(format!("{path}.pauli"), format!("bad letter {c:?}"))
                        })
                    })
                    .collect::<Result<_>>()?;
                if letters.len() != qubits.len() {
                    return Err(Error::schema(
                        format!("{path}.qubits"),
                        format!("{} letters but {} qubits", letters.len(), qubits.len()),
                    ));
                }
                check_qubits(n, qubits, path)?;
                let generator = PauliString::from_local(n, &letters, qubits)
                    .map_err(|e| Error::schema(path, e.to_string()))?;
                if generator.is_identity() {
                    return Err(Error::schema(format!("{path}.pauli"), "identity generator"));
                }
                let param = match (param, value) {
                    (Some(k), None) => ParamRef::Free(*k),
                    (None, Some(v)) => ParamRef::Fixed(*v),
                    _ => {
                        return Err(Error::schema(
                            path,
                            "rotation needs exactly one of \"param\" or \"value\"",
                        ))
                    }
                };
                Ok(Gate::Rotation { generator, param })
            }
        }
    }

    fn to_clifford(&self, n: usize, path: &str) -> Result<CliffordGate> {
        match self {
            GateDoc::Clifford { kind, qubits, gates } => {
                if kind == "seq" {
                    let inner = gates
                        .iter()
                        .enumerate()
                        .map(|(i, g)| g.to_clifford(n, &format!("{path}.gates[{i}]")))
                        .collect::<Result<_>>()?;
                    return Ok(CliffordGate::Sequence(inner));
                }
                let k = CliffordKind::from_name(kind).ok_or_else(|| {
                    Error::schema(format!("{path}.kind"), format!("unknown Clifford kind {kind:?}"))
                })?;
                check_qubits(n, qubits, path)?;
                CliffordGate::new(k, qubits).map_err(|e| Error::schema(path, e.to_string()))
            }
            GateDoc::Rot { .. } => Err(Error::schema(path, "rotation inside a Clifford sequence")),
        }
    }

    fn from_clifford(c: &CliffordGate) -> GateDoc {
        match c {
            CliffordGate::Generator { kind, qubits } => GateDoc::Clifford {
                kind: kind.name().to_string(),
                qubits: qubits.to_vec(),
                gates: Vec::new(),
            },
            CliffordGate::Sequence(gs) => GateDoc::Clifford {
                kind: "seq".to_string(),
                qubits: Vec::new(),
                gates: gs.iter().map(GateDoc::from_clifford).collect(),
            },
        }
    }

    fn from_gate(g: &Gate) -> GateDoc {
        match g {
            Gate::Clifford(c) => GateDoc::from_clifford(c),
            Gate::Rotation { generator, param } => {
                let qubits = generator.support();
                let pauli = qubits.iter().map(|&q| generator.letter(q).as_char()).collect();
                let (param, value) = match *param {
                    ParamRef::Free(k) | ParamRef::Shared(k) => (Some(k), None),
                    ParamRef::Fixed(v) => (None, Some(v)),
                };
                GateDoc::Rot {
                    pauli,
                    qubits,
                    param,
                    value,
                }
            }
        }
    }
}

fn check_qubits(n: usize, qubits: &[usize], path: &str) -> Result<()> {
    for (j, &q) in qubits.iter().enumerate() {
        if q >= n {
            return Err(Error::schema(
                format!("{path}.qubits[{j}]"),
                format!("qubit {q} out of range for n = {n}"),
            ));
        }
        if qubits[..j].contains(&q) {
            return Err(Error::schema(format!("{path}.qubits[{j}]"), format!("qubit {q} repeated")));
        }
    }
    Ok(())
}

/// Shape of a seeded random test circuit.
#[derive(Debug, Clone)]
pub struct RandomCircuitConfig {
    pub n: usize,
    pub rotations: usize,
    /// Expected Clifford generators inserted before each rotation.
    pub cliffords_per_rotation: f64,
    pub max_generator_weight: usize,
    /// Probability that a rotation reuses an existing parameter index.
    pub share_prob: f64,
}

pub fn random_circuit<R: Rng + ?Sized>(cfg: &RandomCircuitConfig, rng: &mut R) -> Circuit {
    let n = cfg.n;
    let mut gates = Vec::new();
    let mut m = 0usize;
    let random_qubits = |rng: &mut R, k: usize| -> SmallVec<[usize; 4]> {
        let mut qs: SmallVec<[usize; 4]> = SmallVec::new();
        while qs.len() < k {
            let q = rng.gen_range(0..n);
            if !qs.contains(&q) {
                qs.push(q);
            }
        }
        qs
    };
    for _ in 0..cfg.rotations {
        let mut budget = cfg.cliffords_per_rotation;
        while budget > 0.0 {
            if budget >= 1.0 || rng.gen_bool(budget) {
                let kinds: Vec<CliffordKind> = ALL_KINDS
                    .iter()
                    .copied()
                    .filter(|k| k.arity() <= n)
                    .collect();
                let kind = kinds[rng.gen_range(0..kinds.len())];
                let qs = random_qubits(rng, kind.arity());
                gates.push(Gate::clifford(kind, &qs).expect("distinct in-range qubits"));
            }
            budget -= 1.0;
        }
        let w = rng.gen_range(1..=cfg.max_generator_weight.min(n).max(1));
        let qs = random_qubits(rng, w);
        let letters: Vec<Letter> = (0..w)
            .map(|_| [Letter::X, Letter::Y, Letter::Z][rng.gen_range(0..3)])
            .collect();
        let generator = PauliString::from_local(n, &letters, &qs).expect("in range");
        let k = if m > 0 && rng.gen_bool(cfg.share_prob) {
            rng.gen_range(0..m)
        } else {
            m += 1;
            m - 1
        };
        gates.push(Gate::rotation(generator, ParamRef::Free(k)));
    }
    Circuit::new(n, m, gates).expect("random circuit is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimal_document() {
        let c = Circuit::from_json(
            r#"{"n":1,"m":1,"gates":[{"type":"rot","pauli":"X","qubits":[0],"param":0}]}"#,
        )
        .unwrap();
        assert_eq!(c.gates().len(), 1);
        assert_eq!(c.num_params(), 1);
    }

    #[test]
    fn param_index_out_of_range() {
        let e = Circuit::from_json(
            r#"{"n":1,"m":1,"gates":[{"type":"rot","pauli":"X","qubits":[0],"param":1}]}"#,
        )
        .unwrap_err();
        assert!(matches!(e, Error::Schema { .. }), "{e}");
    }

    #[test]
    fn schema_errors_name_the_path() {
        let e = Circuit::from_json(
            r#"{"n":2,"m":0,"gates":[{"type":"clifford","kind":"h","qubits":[0]},{"type":"clifford","kind":"cnot","qubits":[0,7]}]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("$.gates[1].qubits[1]"), "{e}");
        let e = Circuit::from_json(
            r#"{"n":1,"m":0,"gates":[{"type":"clifford","kind":"t","qubits":[0]}]}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("$.gates[0].kind"), "{e}");
        assert!(Circuit::from_json(
            r#"{"n":1,"m":1,"gates":[{"type":"rot","pauli":"X","qubits":[0],"param":0,"value":0.1}]}"#
        )
        .is_err());
        assert!(Circuit::from_json(r#"{"n":1,"m":1,"gates":[]}"#).is_err());
    }

    #[test]
    fn shared_tags_follow_use_count() {
        let c = Circuit::from_json(
            r#"{"n":2,"m":2,"gates":[
                {"type":"rot","pauli":"X","qubits":[0],"param":0},
                {"type":"rot","pauli":"ZZ","qubits":[0,1],"param":1},
                {"type":"rot","pauli":"X","qubits":[1],"param":0},
                {"type":"rot","pauli":"Y","qubits":[1],"value":0.25}]}"#,
        )
        .unwrap();
        let params: Vec<ParamRef> = c
            .gates()
            .iter()
            .map(|g| match g {
                Gate::Rotation { param, .. } => *param,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(
            params,
            vec![ParamRef::Shared(0), ParamRef::Free(1), ParamRef::Shared(0), ParamRef::Fixed(0.25)]
        );
        assert_eq!(c.param_uses(), vec![2, 1]);
    }

    #[test]
    fn sequence_round_trip() {
        let c = Circuit::from_json(
            r#"{"n":2,"m":0,"gates":[{"type":"clifford","kind":"seq","gates":[
                {"type":"clifford","kind":"h","qubits":[0]},
                {"type":"clifford","kind":"cz","qubits":[0,1]}]}]}"#,
        )
        .unwrap();
        assert_eq!(Circuit::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn random_circuits_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let cfg = RandomCircuitConfig {
                n: 5,
                rotations: 12,
                cliffords_per_rotation: 1.5,
                max_generator_weight: 3,
                share_prob: 0.3,
            };
            let c = random_circuit(&cfg, &mut rng);
            assert_eq!(c.num_rotations(), 12);
            assert_eq!(Circuit::from_json(&c.to_json()).unwrap(), c);
        }
    }
}
