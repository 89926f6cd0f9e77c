//! Heisenberg back-propagation of Pauli observables with small-angle
//! truncation.
//!
//! Gates are processed last to first, each mapping `O -> G^dagger O G`. A
//! rotation `exp(-i theta P / 2)` leaves commuting terms unchanged and maps
//! an anticommuting term `Q` to `cos(theta) Q + sin(theta) (i[P, Q]/2)`.
//!
//! Two modes share this machinery. [`Mode::Numeric`] binds the angles and
//! carries float coefficients; [`Mode::Symbolic`] keeps every coefficient as
//! a sum of trigonometric monomials in the free parameters.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::circuit::{Circuit, Gate, ParamRef};
use crate::clifford::CliffordGate;
use crate::error::{Error, Result};
use crate::observable::ObservableSpec;
use crate::pauli::{PauliString, Phase};

/// How numeric mode combines sine counts when two contributions land on the
/// same Pauli.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SineMerge {
    /// One coefficient per Pauli tagged with the smallest contributing count.
    #[default]
    Min,
    /// One coefficient per (Pauli, sine count); reproduces path-exact
    /// truncation and hence the symbolic mode.
    PerCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Maximum sine order; `None` keeps all paths.
    pub kappa: Option<u32>,
    /// Maximum Pauli weight; `None` keeps all weights.
    pub max_weight: Option<usize>,
    /// Sine branches with `|coefficient|` below this are dropped (numeric
    /// mode only).
    pub coeff_floor: f64,
    /// Largest number of live entries before propagation aborts.
    pub path_cap: Option<usize>,
    pub sine_merge: SineMerge,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            kappa: None,
            max_weight: None,
            coeff_floor: 0.0,
            path_cap: None,
            sine_merge: SineMerge::Min,
        }
    }
}

impl TruncationPolicy {
    pub fn exact() -> Self {
        TruncationPolicy::default()
    }

    pub fn kappa(k: u32) -> Self {
        TruncationPolicy {
            kappa: Some(k),
            ..Default::default()
        }
    }

    pub fn with_max_weight(mut self, w: usize) -> Self {
        self.max_weight = Some(w);
        self
    }

    pub fn with_sine_merge(mut self, merge: SineMerge) -> Self {
        self.sine_merge = merge;
        self
    }

    pub fn with_coeff_floor(mut self, floor: f64) -> Self {
        self.coeff_floor = floor;
        self
    }

    pub fn with_path_cap(mut self, cap: usize) -> Self {
        self.path_cap = Some(cap);
        self
    }

    fn validate(&self, mode: Mode) -> Result<()> {
        if self.max_weight == Some(0) {
            return Err(Error::Config("max_weight must be at least 1".into()));
        }
        if !(self.coeff_floor >= 0.0) || !self.coeff_floor.is_finite() {
            return Err(Error::Config(format!(
                "coefficient floor must be finite and nonnegative, got {}",
                self.coeff_floor
            )));
        }
        if mode == Mode::Symbolic && self.coeff_floor > 0.0 {
            return Err(Error::Config(
                "coefficient floor has no meaning in symbolic mode".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    fn sine_ok(&self, order: u32) -> bool {
        self.kappa.is_none_or(|k| order <= k)
    }

    #[inline]
    fn weight_ok(&self, p: &PauliString) -> bool {
        self.max_weight.is_none_or(|w| p.weight() <= w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Numeric,
    Symbolic,
}

/// Counters collected during propagation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStats {
    pub initial_paulis: usize,
    pub rotations: usize,
    pub cliffords: usize,
    /// Sine branches created (kept or truncated).
    pub paths_expanded: u64,
    pub truncated_sine: u64,
    pub truncated_weight: u64,
    pub truncated_coeff: u64,
    /// Peak number of live entries, summed over partitions.
    pub peak_entries: usize,
    /// Entries at the end: (Pauli, monomial) pairs in symbolic mode, (Pauli,
    /// sine count) pairs in numeric mode.
    pub final_paths: usize,
    pub final_paulis: usize,
    pub partitions: usize,
}

impl PathStats {
    fn absorb(&mut self, other: &PathStats) {
        self.paths_expanded += other.paths_expanded;
        self.truncated_sine += other.truncated_sine;
        self.truncated_weight += other.truncated_weight;
        self.truncated_coeff += other.truncated_coeff;
        self.peak_entries += other.peak_entries;
    }
}

impl fmt::Display for PathStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "expanded {}, truncated sine/weight/coeff {}/{}/{}, peak entries {}, final paths {} over {} Paulis",
            self.paths_expanded,
            self.truncated_sine,
            self.truncated_weight,
            self.truncated_coeff,
            self.peak_entries,
            self.final_paths,
            self.final_paulis
        )
    }
}

/// Product of `cos^a(alpha_i) sin^b(alpha_i)` factors, plus the number of
/// sine factors taken at fixed-angle gates (whose values are folded into the
/// weight).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonomialKey {
    /// Sorted by parameter index; `(param, cos_exp, sin_exp)`.
    pub factors: SmallVec<[(u32, u16, u16); 4]>,
    pub fixed_sines: u16,
}

impl MonomialKey {
    pub fn sine_order(&self) -> u32 {
        self.factors.iter().map(|f| f.2 as u32).sum::<u32>() + self.fixed_sines as u32
    }

    fn bumped(&self, param: u32, sine: bool) -> MonomialKey {
        let mut out = self.clone();
        match out.factors.binary_search_by_key(&param, |f| f.0) {
            Ok(i) => {
                if sine {
                    out.factors[i].2 += 1
                } else {
                    out.factors[i].1 += 1
                }
            }
            Err(i) => out
                .factors
                .insert(i, (param, u16::from(!sine), u16::from(sine))),
        }
        out
    }

    /// Value at precomputed per-parameter cosines and sines.
    #[inline]
    pub fn eval(&self, cos: &[f64], sin: &[f64]) -> f64 {
        let mut v = 1.0;
        for &(i, a, b) in &self.factors {
            let i = i as usize;
            if a > 0 {
                v *= cos[i].powi(a as i32);
            }
            if b > 0 {
                v *= sin[i].powi(b as i32);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermData {
    Numeric { coeff: f64, min_sines: u32 },
    /// Monomials sorted by key, keys unique.
    Symbolic(Vec<(MonomialKey, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedTerm {
    pub pauli: PauliString,
    pub data: TermData,
}

impl PropagatedTerm {
    pub fn numeric_coeff(&self) -> Option<f64> {
        match self.data {
            TermData::Numeric { coeff, .. } => Some(coeff),
            TermData::Symbolic(_) => None,
        }
    }

    pub fn monomials(&self) -> &[(MonomialKey, f64)] {
        match &self.data {
            TermData::Symbolic(ms) => ms,
            TermData::Numeric { .. } => &[],
        }
    }
}

/// The propagated observable `sum_P c_P(alpha) P`; terms sorted by Pauli.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedObservable {
    n: usize,
    m: usize,
    param_rotations: usize,
    mode: Mode,
    policy: TruncationPolicy,
    initial_norm_sq: f64,
    terms: Vec<PropagatedTerm>,
    stats: PathStats,
}

impl PropagatedObservable {
    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// Length of the parameter vector.
    pub fn num_params(&self) -> usize {
        self.m
    }

    /// Rotations driven by the parameter vector (the `m` of the bounds).
    pub fn num_param_rotations(&self) -> usize {
        self.param_rotations
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn policy(&self) -> &TruncationPolicy {
        &self.policy
    }

    pub fn terms(&self) -> &[PropagatedTerm] {
        &self.terms
    }

    pub fn stats(&self) -> &PathStats {
        &self.stats
    }

    pub fn num_paulis(&self) -> usize {
        self.terms.len()
    }

    /// `sum_P a_P^2` of the input observable.
    pub fn initial_norm_sq(&self) -> f64 {
        self.initial_norm_sq
    }

    /// Coefficient vector at `alpha` in term order. Numeric mode ignores
    /// `alpha`.
    pub fn coeffs_at(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            Mode::Numeric => Ok(self.terms.iter().map(|t| t.numeric_coeff().unwrap()).collect()),
            Mode::Symbolic => {
                if alpha.len() != self.m {
                    return Err(Error::Dimension {
                        expected: self.m,
                        found: alpha.len(),
                    });
                }
                let cos: Vec<f64> = alpha.iter().map(|a| a.cos()).collect();
                let sin: Vec<f64> = alpha.iter().map(|a| a.sin()).collect();
                Ok(self
                    .terms
                    .iter()
                    .map(|t| t.monomials().iter().map(|(k, w)| w * k.eval(&cos, &sin)).sum())
                    .collect())
            }
        }
    }

    /// `sqrt(sum_P c_P^2 / sum_P a_P^2)` at `alpha`.
    pub fn retained_norm(&self, alpha: &[f64]) -> Result<f64> {
        let c = self.coeffs_at(alpha)?;
        Ok((c.iter().map(|x| x * x).sum::<f64>() / self.initial_norm_sq).sqrt())
    }

    /// Writes the artifact as JSON, gzip-compressed when the path ends in `.gz`.
    pub fn write_artifact(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.to_doc())?;
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "gz") {
            let mut gz = flate2::write::GzEncoder::new(file, flate2::Compression::default());
            gz.write_all(&json)?;
            gz.finish()?.flush()?;
        } else {
            let mut file = file;
            file.write_all(&json)?;
            file.flush()?;
        }
        Ok(())
    }

    pub fn read_artifact(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(&[0x1f, 0x8b]) {
            let mut out = Vec::new();
            flate2::read::GzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
            bytes = out;
        }
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::schema("$", format!("artifact is not UTF-8: {e}")))?;
        PropagatedObservable::from_json(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ArtifactDoc =
            serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
        if doc.format != ARTIFACT_FORMAT || doc.version != ARTIFACT_VERSION {
            return Err(Error::schema(
                "$.version",
                format!(
                    "expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION}, found {} v{}",
                    doc.format, doc.version
                ),
            ));
        }
        let mut terms = Vec::with_capacity(doc.terms.len());
        for (i, t) in doc.terms.into_iter().enumerate() {
            if t.pauli.num_qubits() != doc.n {
                return Err(Error::schema(format!("$.terms[{i}].pauli"), "wrong width"));
            }
            let data = match (doc.mode, t.coeff, t.monomials) {
                (Mode::Numeric, Some(coeff), None) => TermData::Numeric {
                    coeff,
                    min_sines: t.sines.unwrap_or(0),
                },
                (Mode::Symbolic, None, Some(ms)) => TermData::Symbolic(
                    ms.into_iter()
                        .map(|m| {
                            (
                                MonomialKey {
                                    factors: m.params.into_iter().collect(),
                                    fixed_sines: m.fs,
                                },
                                m.w,
                            )
                        })
                        .collect(),
                ),
                _ => {
                    return Err(Error::schema(
                        format!("$.terms[{i}]"),
                        "term body does not match the artifact mode",
                    ))
                }
            };
            terms.push(PropagatedTerm { pauli: t.pauli, data });
        }
        Ok(PropagatedObservable {
            n: doc.n,
            m: doc.m,
            param_rotations: doc.param_rotations,
            mode: doc.mode,
            policy: doc.policy,
            initial_norm_sq: doc.initial_norm_sq,
            terms,
            stats: doc.stats,
        })
    }

    fn to_doc(&self) -> ArtifactDoc {
        ArtifactDoc {
            format: ARTIFACT_FORMAT.to_string(),
            version: ARTIFACT_VERSION,
            n: self.n,
            m: self.m,
            param_rotations: self.param_rotations,
            mode: self.mode,
            policy: self.policy.clone(),
            initial_norm_sq: self.initial_norm_sq,
            stats: self.stats.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| match &t.data {
                    TermData::Numeric { coeff, min_sines } => TermDoc {
                        pauli: t.pauli.clone(),
                        coeff: Some(*coeff),
                        sines: Some(*min_sines),
                        monomials: None,
                    },
                    TermData::Symbolic(ms) => TermDoc {
                        pauli: t.pauli.clone(),
                        coeff: None,
                        sines: None,
                        monomials: Some(
                            ms.iter()
                                .map(|(k, w)| MonomialDoc {
                                    params: k.factors.to_vec(),
                                    w: *w,
                                    fs: k.fixed_sines,
                                })
                                .collect(),
                        ),
                    },
                })
                .collect(),
        }
    }
}

const ARTIFACT_FORMAT: &str = "patchsurr-surrogate";
const ARTIFACT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactDoc {
    format: String,
    version: u32,
    n: usize,
    m: usize,
    param_rotations: usize,
    mode: Mode,
    policy: TruncationPolicy,
    initial_norm_sq: f64,
    stats: PathStats,
    terms: Vec<TermDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    pauli: PauliString,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sines: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    monomials: Option<Vec<MonomialDoc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MonomialDoc {
    params: Vec<(u32, u16, u16)>,
    w: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    fs: u16,
}

fn is_zero(v: &u16) -> bool {
    *v == 0
}

/// Path-count bounds for `m` splitting rotations at sine order `kappa`:
/// `sum_{i <= kappa} C(m, i)` and `(e m / kappa)^kappa`, per initial Pauli.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathBounds {
    pub binomial: f64,
    pub exponential: f64,
}

pub fn path_bounds(m: usize, kappa: Option<u32>) -> PathBounds {
    let k = kappa.map_or(m, |k| (k as usize).min(m));
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for i in 1..=k {
        term *= (m + 1 - i) as f64 / i as f64;
        sum += term;
    }
    let exponential = match kappa {
        None => 2f64.powi(m as i32),
        Some(0) => 1.0,
        Some(k) => (std::f64::consts::E * m as f64 / k as f64).powi(k as i32),
    };
    PathBounds {
        binomial: sum,
        exponential,
    }
}

/// Observed path statistics next to the analytic bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub stats: PathStats,
    pub m: usize,
    pub kappa: Option<u32>,
    pub bound_per_pauli: PathBounds,
    /// `binomial * initial_paulis`.
    pub bound_total: f64,
}

/// `m` counts every rotation gate, fixed-angle ones included, since their
/// sine branches count toward `kappa` as well.
pub fn path_stats(po: &PropagatedObservable) -> PathReport {
    let m = po.stats.rotations;
    let b = path_bounds(m, po.policy.kappa);
    PathReport {
        stats: po.stats.clone(),
        m,
        kappa: po.policy.kappa,
        bound_per_pauli: b,
        bound_total: b.binomial * po.stats.initial_paulis as f64,
    }
}

/// Real sign of `i[G, Q]/2` given `Q G = phase R`, for anticommuting `Q, G`.
#[inline]
fn sine_sign(phase: Phase) -> f64 {
    match phase {
        Phase::I => 1.0,
        Phase::MinusI => -1.0,
        _ => unreachable!("anticommuting Paulis multiply to an imaginary phase"),
    }
}

/// Result of one rotation applied to a single numeric term.
#[derive(Debug, Clone, PartialEq)]
pub struct Branches {
    pub cos: (PauliString, f64),
    pub sin: Option<(PauliString, f64)>,
}

/// Applies one rotation `exp(-i theta G / 2)` to `coeff * Q` in the
/// Heisenberg picture, with the sine branch subject to `policy` given that
/// `Q` already carries `sines` sine factors.
pub fn apply_rotation(
    q: &PauliString,
    coeff: f64,
    sines: u32,
    generator: &PauliString,
    theta: f64,
    policy: &TruncationPolicy,
    stats: &mut PathStats,
) -> Result<Branches> {
    if generator.is_identity() {
        return Err(Error::Validation("rotation generator is the identity".into()));
    }
    if q.commutes(generator)? {
        return Ok(Branches {
            cos: (q.clone(), coeff),
            sin: None,
        });
    }
    let (phase, r) = q.multiply_unchecked(generator);
    let sc = coeff * theta.sin() * sine_sign(phase);
    stats.paths_expanded += 1;
    let sin = if !policy.sine_ok(sines + 1) {
        stats.truncated_sine += 1;
        None
    } else if !policy.weight_ok(&r) {
        stats.truncated_weight += 1;
        None
    } else if sc == 0.0 || sc.abs() < policy.coeff_floor {
        stats.truncated_coeff += 1;
        None
    } else {
        Some((r, sc))
    };
    Ok(Branches {
        cos: (q.clone(), coeff * theta.cos()),
        sin,
    })
}

type NumEntry = SmallVec<[(u32, f64); 1]>;
type NumMap = FxHashMap<PauliString, NumEntry>;
type SymMap = FxHashMap<(PauliString, MonomialKey), f64>;

fn gate_qubits(g: &CliffordGate) -> SmallVec<[usize; 4]> {
    let mut qs: SmallVec<[usize; 4]> = SmallVec::new();
    g.for_each_generator(&mut |_, q: &[usize]| {
        for &x in q {
            if !qs.contains(&x) {
                qs.push(x);
            }
        }
    });
    qs
}

#[inline]
fn merge_numeric(map: &mut NumMap, p: PauliString, sines: u32, c: f64, merge: SineMerge) {
    let entry = map.entry(p).or_default();
    match merge {
        SineMerge::Min => {
            if let Some(e) = entry.first_mut() {
                e.0 = e.0.min(sines);
                e.1 += c;
            } else {
                entry.push((sines, c));
            }
        }
        SineMerge::PerCount => {
            if let Some(e) = entry.iter_mut().find(|e| e.0 == sines) {
                e.1 += c;
            } else {
                entry.push((sines, c));
            }
        }
    }
}

fn check_cap(policy: &TruncationPolicy, live: usize, stats: &mut PathStats) -> Result<()> {
    stats.peak_entries = stats.peak_entries.max(live);
    if let Some(cap) = policy.path_cap {
        if live > cap {
            return Err(Error::Overflow {
                cap,
                stats: Box::new(stats.clone()),
            });
        }
    }
    Ok(())
}

fn propagate_numeric(
    circuit: &Circuit,
    terms: &[(PauliString, f64)],
    alpha: &[f64],
    policy: &TruncationPolicy,
) -> Result<(NumMap, PathStats)> {
    let mut stats = PathStats::default();
    let mut map: NumMap = FxHashMap::default();
    for (p, a) in terms {
        map.insert(p.clone(), smallvec::smallvec![(0, *a)]);
    }
    let mut live = map.len();
    check_cap(policy, live, &mut stats)?;
    let mut buf: Vec<(PauliString, u32, f64)> = Vec::new();
    for gate in circuit.gates().iter().rev() {
        match gate {
            Gate::Clifford(g) => {
                let qs = gate_qubits(g);
                let moved: Vec<(PauliString, NumEntry)> =
                    map.extract_if(|p, _| p.touches(&qs)).collect();
                for (mut p, mut entry) in moved {
                    if g.conjugate_in_place(&mut p) {
                        entry.iter_mut().for_each(|e| e.1 = -e.1);
                    }
                    if policy.weight_ok(&p) {
                        map.insert(p, entry);
                    } else {
                        stats.truncated_weight += entry.len() as u64;
                        live -= entry.len();
                    }
                }
            }
            Gate::Rotation { generator, param } => {
                let theta = param.angle(alpha);
                let (c, s) = (theta.cos(), theta.sin());
                buf.clear();
                for (q, entry) in map.iter_mut() {
                    if q.commutes_unchecked(generator) {
                        continue;
                    }
                    let (phase, r) = q.multiply_unchecked(generator);
                    let sign = sine_sign(phase);
                    let heavy = !policy.weight_ok(&r);
                    for e in entry.iter_mut() {
                        let sc = e.1 * s * sign;
                        e.1 *= c;
                        stats.paths_expanded += 1;
                        if !policy.sine_ok(e.0 + 1) {
                            stats.truncated_sine += 1;
                        } else if heavy {
                            stats.truncated_weight += 1;
                        } else if sc == 0.0 || sc.abs() < policy.coeff_floor {
                            stats.truncated_coeff += 1;
                        } else {
                            buf.push((r.clone(), e.0 + 1, sc));
                        }
                    }
                }
                for (r, k, v) in buf.drain(..) {
                    merge_numeric(&mut map, r, k, v, policy.sine_merge);
                }
                live = map.values().map(|e| e.len()).sum();
            }
        }
        check_cap(policy, live, &mut stats)?;
    }
    Ok((map, stats))
}

fn propagate_symbolic(
    circuit: &Circuit,
    terms: &[(PauliString, f64)],
    policy: &TruncationPolicy,
) -> Result<(SymMap, PathStats)> {
    let mut stats = PathStats::default();
    let mut map: SymMap = FxHashMap::default();
    for (p, a) in terms {
        map.insert((p.clone(), MonomialKey::default()), *a);
    }
    check_cap(policy, map.len(), &mut stats)?;
    let mut buf: Vec<((PauliString, MonomialKey), f64)> = Vec::new();
    for gate in circuit.gates().iter().rev() {
        match gate {
            Gate::Clifford(g) => {
                let qs = gate_qubits(g);
                let moved: Vec<((PauliString, MonomialKey), f64)> =
                    map.extract_if(|(p, _), _| p.touches(&qs)).collect();
                for ((mut p, key), mut w) in moved {
                    if g.conjugate_in_place(&mut p) {
                        w = -w;
                    }
                    if policy.weight_ok(&p) {
                        map.insert((p, key), w);
                    } else {
                        stats.truncated_weight += 1;
                    }
                }
            }
            Gate::Rotation { generator, param } => {
                let moved: Vec<((PauliString, MonomialKey), f64)> = map
                    .extract_if(|(p, _), _| !p.commutes_unchecked(generator))
                    .collect();
                buf.clear();
                for ((q, key), w) in moved {
                    let (phase, r) = q.multiply_unchecked(generator);
                    let sign = sine_sign(phase);
                    stats.paths_expanded += 1;
                    let (cos_branch, sin_key, sin_w) = match *param {
                        ParamRef::Fixed(v) => {
                            let mut k2 = key.clone();
                            k2.fixed_sines += 1;
                            ((key, w * v.cos()), k2, w * v.sin() * sign)
                        }
                        ParamRef::Free(i) | ParamRef::Shared(i) => {
                            let i = i as u32;
                            let kc = key.bumped(i, false);
                            let ks = key.bumped(i, true);
                            ((kc, w), ks, w * sign)
                        }
                    };
                    if !policy.sine_ok(sin_key.sine_order()) {
                        stats.truncated_sine += 1;
                    } else if !policy.weight_ok(&r) {
                        stats.truncated_weight += 1;
                    } else if sin_w == 0.0 {
                        stats.truncated_coeff += 1;
                    } else {
                        buf.push(((r, sin_key), sin_w));
                    }
                    buf.push(((q, cos_branch.0), cos_branch.1));
                }
                for (k, w) in buf.drain(..) {
                    *map.entry(k).or_insert(0.0) += w;
                }
            }
        }
        check_cap(policy, map.len(), &mut stats)?;
    }
    Ok((map, stats))
}

/// Back-propagates `obs` through `circuit`. Numeric mode needs `alpha`;
/// symbolic mode forbids it.
pub fn backpropagate(
    circuit: &Circuit,
    obs: &ObservableSpec,
    policy: &TruncationPolicy,
    mode: Mode,
    alpha: Option<&[f64]>,
) -> Result<PropagatedObservable> {
    backpropagate_partitioned(circuit, obs, policy, mode, alpha, 1)
}

/// As [`backpropagate`], splitting the initial terms into `partitions`
/// contiguous chunks propagated in parallel and merged in chunk order.
pub fn backpropagate_partitioned(
    circuit: &Circuit,
    obs: &ObservableSpec,
    policy: &TruncationPolicy,
    mode: Mode,
    alpha: Option<&[f64]>,
    partitions: usize,
) -> Result<PropagatedObservable> {
    policy.validate(mode)?;
    if obs.num_qubits() != circuit.num_qubits() {
        return Err(Error::Dimension {
            expected: circuit.num_qubits(),
            found: obs.num_qubits(),
        });
    }
    match (mode, alpha) {
        (Mode::Numeric, None) => {
            return Err(Error::Mode("numeric propagation needs a parameter vector".into()))
        }
        (Mode::Numeric, Some(a)) => circuit.check_params(a)?,
        (Mode::Symbolic, Some(_)) => {
            return Err(Error::Mode(
                "symbolic propagation takes no parameter vector".into(),
            ))
        }
        (Mode::Symbolic, None) => {}
    }
    let partitions = partitions.max(1);
    let terms = obs.terms();
    let chunk = terms.len().div_ceil(partitions).max(1);
    let chunks: Vec<&[(PauliString, f64)]> = terms.chunks(chunk).collect();

    let mut stats = PathStats::default();
    let out_terms: Vec<PropagatedTerm> = match mode {
        Mode::Numeric => {
            let alpha = alpha.unwrap();
            let parts: Vec<Result<(NumMap, PathStats)>> = chunks
                .par_iter()
                .map(|c| propagate_numeric(circuit, c, alpha, policy))
                .collect();
            let mut merged: NumMap = FxHashMap::default();
            for part in parts {
                let (map, s) = part?;
                stats.absorb(&s);
                let mut keys: Vec<(PauliString, NumEntry)> = map.into_iter().collect();
                keys.sort_by(|a, b| a.0.cmp(&b.0));
                for (p, entry) in keys {
                    for (k, v) in entry {
                        merge_numeric(&mut merged, p.clone(), k, v, policy.sine_merge);
                    }
                }
            }
            stats.final_paths = merged.values().map(|e| e.len()).sum();
            let mut out: Vec<PropagatedTerm> = merged
                .into_iter()
                .map(|(pauli, entry)| {
                    let mut entry = entry.into_vec();
                    entry.sort_by_key(|e| e.0);
                    PropagatedTerm {
                        pauli,
                        data: TermData::Numeric {
                            coeff: entry.iter().map(|e| e.1).sum(),
                            min_sines: entry[0].0,
                        },
                    }
                })
                .collect();
            out.sort_by(|a, b| a.pauli.cmp(&b.pauli));
            out
        }
        Mode::Symbolic => {
            let parts: Vec<Result<(SymMap, PathStats)>> = chunks
                .par_iter()
                .map(|c| propagate_symbolic(circuit, c, policy))
                .collect();
            let mut merged: SymMap = FxHashMap::default();
            for part in parts {
                let (map, s) = part?;
                stats.absorb(&s);
                let mut entries: Vec<_> = map.into_iter().collect();
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                for (k, w) in entries {
                    *merged.entry(k).or_insert(0.0) += w;
                }
            }
            stats.final_paths = merged.len();
            let mut entries: Vec<((PauliString, MonomialKey), f64)> = merged.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out: Vec<PropagatedTerm> = Vec::new();
            for ((p, key), w) in entries {
                match out.last_mut() {
                    Some(t) if t.pauli == p => {
                        if let TermData::Symbolic(ms) = &mut t.data {
                            ms.push((key, w));
                        }
                    }
                    _ => out.push(PropagatedTerm {
                        pauli: p,
                        data: TermData::Symbolic(vec![(key, w)]),
                    }),
                }
            }
            out
        }
    };
    stats.initial_paulis = terms.len();
    stats.rotations = circuit.num_rotations();
    stats.cliffords = circuit.gates().len() - stats.rotations;
    stats.final_paulis = out_terms.len();
    stats.partitions = chunks.len();
    if let Some(cap) = policy.path_cap {
        if stats.final_paths > cap {
            return Err(Error::Overflow {
                cap,
                stats: Box::new(stats),
            });
        }
    }
    Ok(PropagatedObservable {
        n: circuit.num_qubits(),
        m: circuit.num_params(),
        param_rotations: circuit.num_param_rotations(),
        mode,
        policy: policy.clone(),
        initial_norm_sq: obs.norm2().powi(2),
        terms: out_terms,
        stats,
    })
}
