//! Simulated data acquisition: shot allocation over Paulis, randomized
//! single-Pauli measurements, Pauli classical shadows, and sample-complexity
//! formulas.

use std::f64::consts::E;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::clifford::{CliffordGate, CliffordKind};
use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString};
use crate::propagation::PropagatedObservable;
use crate::state::{overlap, InitialState, Statevector, DENSE_CAP};
use crate::surrogate::{effective_norm_avg, effective_norm_worst, BoundReport, PatchDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Uniform,
    AbsCoeff,
    #[serde(rename = "eff1norm-avg")]
    Eff1NormAvg,
    #[serde(rename = "eff1norm-worst")]
    Eff1NormWorst,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Uniform,
        Strategy::AbsCoeff,
        Strategy::Eff1NormAvg,
        Strategy::Eff1NormWorst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::AbsCoeff => "abs-coeff",
            Strategy::Eff1NormAvg => "eff1norm-avg",
            Strategy::Eff1NormWorst => "eff1norm-worst",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown allocation strategy {s:?}")))
    }
}

/// What the allocation is computed from.
#[derive(Debug, Clone, Copy)]
pub enum AllocationInput<'a> {
    /// Fixed coefficients `a_P`.
    Coeffs(&'a [(PauliString, f64)]),
    /// A symbolic surrogate and the patch half-width.
    Surrogate { po: &'a PropagatedObservable, r: f64 },
}

/// Sampling distribution `beta(P)` over Paulis plus a shot budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    entries: Vec<(PauliString, f64)>,
    strategy: Strategy,
    shots: usize,
    cumulative: Vec<f64>,
    index: FxHashMap<PauliString, usize>,
}

impl AllocationPlan {
    /// Normalizes positive weights into a plan.
    pub fn from_weights(
        weights: Vec<(PauliString, f64)>,
        strategy: Strategy,
        shots: usize,
    ) -> Result<Self> {
        let weights: Vec<(PauliString, f64)> =
            weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
        if weights.is_empty() {
            return Err(Error::EmptySupport);
        }
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let entries: Vec<(PauliString, f64)> =
            weights.into_iter().map(|(p, w)| (p, w / total)).collect();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = entries
            .iter()
            .map(|(_, b)| {
                acc += b;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        let mut index = FxHashMap::default();
        for (i, (p, _)) in entries.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::Validation(format!("Pauli {p} appears twice in the plan")));
            }
        }
        Ok(AllocationPlan {
            entries,
            strategy,
            shots,
            cumulative,
            index,
        })
    }

    pub fn entries(&self) -> &[(PauliString, f64)] {
        &self.entries
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn with_shots(mut self, shots: usize) -> Self {
        self.shots = shots;
        self
    }

    pub fn index_of(&self, p: &PauliString) -> Option<usize> {
        self.index.get(p).copied()
    }

    #[inline]
    fn draw(&self, u: f64) -> usize {
        self.cumulative.partition_point(|&c| c <= u).min(self.entries.len() - 1)
    }
}

pub fn make_allocation(
    strategy: Strategy,
    input: AllocationInput<'_>,
    shots: usize,
) -> Result<AllocationPlan> {
    let weights: Vec<(PauliString, f64)> = match input {
        AllocationInput::Coeffs(cs) => {
            let support: Vec<&(PauliString, f64)> = cs.iter().filter(|(_, a)| *a != 0.0).collect();
            if support.is_empty() {
                return Err(Error::EmptySupport);
            }
            match strategy {
                Strategy::Uniform => support.iter().map(|(p, _)| (p.clone(), 1.0)).collect(),
                Strategy::AbsCoeff => support.iter().map(|(p, a)| (p.clone(), a.abs())).collect(),
                Strategy::Eff1NormAvg | Strategy::Eff1NormWorst => {
                    return Err(Error::Config(format!(
                        "{} allocation needs a symbolic surrogate and r",
                        strategy.name()
                    )))
                }
            }
        }
        AllocationInput::Surrogate { po, r } => {
            let terms = po.terms();
            if terms.is_empty() {
                return Err(Error::EmptySupport);
            }
            let per: Vec<f64> = match strategy {
                Strategy::Uniform => vec![1.0; terms.len()],
                Strategy::AbsCoeff => terms
                    .iter()
                    .map(|t| t.monomials().iter().map(|(_, w)| w.abs()).sum())
                    .collect(),
                Strategy::Eff1NormAvg => {
                    effective_norm_avg(po, &PatchDistribution::centered(po.num_params(), r)?)?
                        .per_pauli
                }
                Strategy::Eff1NormWorst => effective_norm_worst(po, r)?.per_pauli,
            };
            terms.iter().zip(per).map(|(t, w)| (t.pauli.clone(), w)).collect()
        }
    };
    AllocationPlan::from_weights(weights, strategy, shots)
}

/// One randomized single-Pauli measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShotRecord {
    /// Index of the measured Pauli in the plan.
    pub pauli: u32,
    pub outcome: i8,
    pub draw: u64,
    pub stream: u64,
}

const CHUNK: usize = 1 << 14;

/// Rounding slack accepted on `|Tr[rho P]| <= 1`.
const TRUTH_SLACK: f64 = 1e-9;

fn base_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `Tr[rho P]` for every plan entry.
pub fn plan_truths(plan: &AllocationPlan, state: &InitialState) -> Result<Vec<f64>> {
    plan.entries()
        .par_iter()
        .map(|(p, _)| overlap(state, p))
        .collect()
}

/// Draws `plan.shots()` records: a Pauli from `beta`, then an outcome `+1`
/// with probability `(1 + tr_P) / 2`. `truths` is aligned with the plan.
pub fn simulate_direct(
    plan: &AllocationPlan,
    truths: &[f64],
    seed: u64,
    stream: u64,
) -> Result<Vec<ShotRecord>> {
    if truths.len() != plan.entries().len() {
        return Err(Error::OracleMiss(format!(
            "{} expectation values for {} plan entries",
            truths.len(),
            plan.entries().len()
        )));
    }
    if let Some(i) = truths.iter().position(|t| !(t.abs() <= 1.0 + TRUTH_SLACK)) {
        return Err(Error::OracleMiss(format!(
            "{}: expectation {} is not in [-1, 1]",
            plan.entries()[i].0,
            truths[i]
        )));
    }
    let n = plan.shots();
    let base = base_rng(seed, stream);
    let chunks: Vec<Vec<ShotRecord>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = base.clone();
            // two f64 draws per shot, two 32-bit words each
            rng.set_word_pos((c * CHUNK * 4) as u128);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi)
                .map(|draw| {
                    let i = plan.draw(rng.gen::<f64>());
                    let up = rng.gen::<f64>() < 0.5 * (1.0 + truths[i]);
                    ShotRecord {
                        pauli: i as u32,
                        outcome: if up { 1 } else { -1 },
                        draw: draw as u64,
                        stream,
                    }
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Per-Pauli counts and outcome sums; reused across every `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSummary {
    pub shots: usize,
    pub counts: Vec<u64>,
    pub sums: Vec<i64>,
}

impl RecordSummary {
    pub fn new(plan: &AllocationPlan, records: &[ShotRecord]) -> Result<Self> {
        let k = plan.entries().len();
        let mut counts = vec![0u64; k];
        let mut sums = vec![0i64; k];
        for r in records {
            let i = r.pauli as usize;
            if i >= k || r.outcome.abs() != 1 {
                return Err(Error::Validation(format!(
                    "record {} does not match the plan ({k} entries)",
                    r.draw
                )));
            }
            counts[i] += 1;
            sums[i] += r.outcome as i64;
        }
        Ok(RecordSummary {
            shots: records.len(),
            counts,
            sums,
        })
    }

    /// Mean of `c_{P_i} / beta(P_i) * x_i` with coefficients aligned to the
    /// plan.
    pub fn estimate_aligned(&self, plan: &AllocationPlan, coeffs: &[f64]) -> f64 {
        if self.shots == 0 {
            return 0.0;
        }
        let total: f64 = plan
            .entries()
            .iter()
            .zip(coeffs)
            .zip(&self.sums)
            .map(|(((_, b), c), s)| c / b * *s as f64)
            .sum();
        total / self.shots as f64
    }
}

/// Reweights one record set with coefficients `c_P`. Coefficients for Paulis
/// outside the plan must be zero.
pub fn estimate(
    records: &[ShotRecord],
    coeffs: &[(PauliString, f64)],
    plan: &AllocationPlan,
) -> Result<f64> {
    let summary = RecordSummary::new(plan, records)?;
    let mut aligned = vec![0.0; plan.entries().len()];
    for (p, c) in coeffs {
        match plan.index_of(p) {
            Some(i) => aligned[i] += c,
            None if *c != 0.0 => {
                return Err(Error::OutsideSupport {
                    pauli: p.to_string(),
                    coeff: *c,
                })
            }
            None => {}
        }
    }
    Ok(summary.estimate_aligned(plan, &aligned))
}

/// One Pauli classical shadow snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShadowRecord {
    /// Measurement basis per qubit, one of X, Y, Z.
    pub bases: Vec<Letter>,
    /// Outcome bit per qubit; `false` is eigenvalue `+1`.
    pub bits: Vec<bool>,
}

fn basis_of(word: u32) -> Letter {
    match ((word as u64 * 3) >> 32) as u8 {
        0 => Letter::X,
        1 => Letter::Y,
        _ => Letter::Z,
    }
}

/// Cumulative outcome distribution of `sv` measured in `bases`.
fn rotated_cdf(sv: &Statevector, bases: &[Letter]) -> Vec<f64> {
    let mut rot = sv.clone();
    for (q, b) in bases.iter().enumerate() {
        let gates: &[CliffordKind] = match b {
            Letter::X => &[CliffordKind::H],
            Letter::Y => &[CliffordKind::Sdg, CliffordKind::H],
            _ => &[],
        };
        for &k in gates {
            rot.apply_clifford(&CliffordGate::new(k, &[q]).expect("single-qubit gate"))
                .expect("qubit in range");
        }
    }
    let mut acc = 0.0;
    rot.probabilities()
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Draws `shots` snapshots, each with an independent uniform basis per qubit.
pub fn simulate_shadows(
    state: &InitialState,
    shots: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<ShadowRecord>> {
    let n = state.num_qubits();
    let dense = match state {
        InitialState::AllZero(_) | InitialState::AllPlus(_) => None,
        InitialState::Dense(sv) | InitialState::TrotterEvolvedZero(sv) => {
            if n > DENSE_CAP {
                return Err(Error::OracleCap { n, cap: DENSE_CAP });
            }
            Some(sv.clone())
        }
    };
    // n words for bases plus n f64 draws (2n words) per shot
    let words_per_shot = 3 * n;
    let base = base_rng(seed, stream);
    let cache_ok = n <= 8;
    let chunks: Vec<Vec<ShadowRecord>> = (0..shots.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = base.clone();
            rng.set_word_pos((c * CHUNK * words_per_shot) as u128);
            let mut cache: FxHashMap<Vec<Letter>, Vec<f64>> = FxHashMap::default();
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(shots);
            (lo..hi)
                .map(|_| {
                    let bases: Vec<Letter> = (0..n).map(|_| basis_of(rng.next_u32())).collect();
                    let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                    let bits = match (&dense, state) {
                        (None, InitialState::AllZero(_)) => bases
                            .iter()
                            .zip(&u)
                            .map(|(b, &x)| *b != Letter::Z && x < 0.5)
                            .collect(),
                        (None, _) => bases
                            .iter()
                            .zip(&u)
                            .map(|(b, &x)| *b != Letter::X && x < 0.5)
                            .collect(),
                        (Some(sv), _) => {
                            let fresh;
                            let cdf = if cache_ok {
                                cache
                                    .entry(bases.clone())
                                    .or_insert_with(|| rotated_cdf(sv, &bases))
                                    as &Vec<f64>
                            } else {
                                fresh = rotated_cdf(sv, &bases);
                                &fresh
                            };
                            let idx = cdf.partition_point(|&c| c <= u[0]).min(cdf.len() - 1);
                            (0..n).map(|q| (idx >> q) & 1 == 1).collect()
                        }
                    };
                    ShadowRecord { bases, bits }
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Single-snapshot estimator of `Tr[rho P]`.
#[inline]
fn shadow_value(r: &ShadowRecord, support: &[(usize, Letter)]) -> f64 {
    let mut v = 1.0;
    for &(q, l) in support {
        if r.bases[q] != l {
            return 0.0;
        }
        v *= if r.bits[q] { -3.0 } else { 3.0 };
    }
    v
}

fn shadow_support(p: &PauliString) -> Vec<(usize, Letter)> {
    p.support().into_iter().map(|q| (q, p.letter(q))).collect()
}

/// Mean over snapshots of `3^|P| prod(+-1)` when all bases match `P`.
pub fn shadow_estimate(records: &[ShadowRecord], p: &PauliString) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let support = shadow_support(p);
    records.iter().map(|r| shadow_value(r, &support)).sum::<f64>() / records.len() as f64
}

/// Median of `batches` batch means.
pub fn shadow_estimate_median_of_means(records: &[ShadowRecord], p: &PauliString, batches: usize) -> f64 {
    let batches = batches.clamp(1, records.len().max(1));
    let size = records.len() / batches;
    if size == 0 {
        return shadow_estimate(records, p);
    }
    let mut means: Vec<f64> = records
        .chunks_exact(size)
        .take(batches)
        .map(|c| shadow_estimate(c, p))
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let k = means.len();
    if k % 2 == 1 {
        means[k / 2]
    } else {
        0.5 * (means[k / 2 - 1] + means[k / 2])
    }
}

/// Per-snapshot estimator values for `P` (for variance checks).
pub fn shadow_samples(records: &[ShadowRecord], p: &PauliString) -> Vec<f64> {
    let support = shadow_support(p);
    records.iter().map(|r| shadow_value(r, &support)).collect()
}

/// Sample-complexity formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleComplexity {
    /// `(3 e m / kappa)^kappa` randomized Pauli measurements.
    AvgPauli { m: usize, kappa: u32 },
    /// `N_Paulis (e m / kappa)^kappa` with shots split evenly.
    DirectEven { n_paulis: usize, m: usize, kappa: u32 },
    /// `3^k log(1/delta) / eps^2` for one weight-`k` Pauli.
    ShadowPauli { k: usize, eps: f64, delta: f64 },
    /// `min(log n, log(m N_Paulis)) log(1/delta) / eps`, up to constants.
    ShadowSurrogate { n: usize, m: usize, n_paulis: usize, eps: f64, delta: f64 },
    /// `2 log(2/delta) ||c||_{1,worst}^2 Lambda^2 / eps^2`.
    WorstHoeffding { norm_worst: f64, lambda: f64, eps: f64, delta: f64 },
    /// `Lambda^2 ||c||_{1,avg}^2 / eps^2` for root-MSE `eps`.
    MseAvg { norm_avg: f64, lambda: f64, eps: f64 },
}

fn check_eps_delta(formula: &'static str, eps: f64, delta: Option<f64>) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::Hypothesis {
            formula,
            condition: format!("eps > 0 (got {eps})"),
        });
    }
    if let Some(d) = delta {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Hypothesis {
                formula,
                condition: format!("0 < delta < 1 (got {d})"),
            });
        }
    }
    Ok(())
}

fn kappa_power(base_factor: f64, m: usize, kappa: u32) -> f64 {
    if kappa == 0 {
        1.0
    } else {
        (base_factor * E * m as f64 / kappa as f64).powi(kappa as i32)
    }
}

pub fn sample_complexity(kind: SampleComplexity) -> Result<BoundReport> {
    Ok(match kind {
        SampleComplexity::AvgPauli { m, kappa } => BoundReport::new(
            "shots-avg-pauli",
            &[("m", m as f64), ("kappa", kappa as f64)],
            kappa_power(3.0, m, kappa),
        ),
        SampleComplexity::DirectEven { n_paulis, m, kappa } => BoundReport::new(
            "shots-direct-even",
            &[("n_paulis", n_paulis as f64), ("m", m as f64), ("kappa", kappa as f64)],
            n_paulis as f64 * kappa_power(1.0, m, kappa),
        ),
        SampleComplexity::ShadowPauli { k, eps, delta } => {
            check_eps_delta("shots-shadow-pauli", eps, Some(delta))?;
            BoundReport::new(
                "shots-shadow-pauli",
                &[("k", k as f64), ("eps", eps), ("delta", delta)],
                3f64.powi(k as i32) * (1.0 / delta).ln() / (eps * eps),
            )
        }
        SampleComplexity::ShadowSurrogate {
            n,
            m,
            n_paulis,
            eps,
            delta,
        } => {
            check_eps_delta("shots-shadow-surrogate", eps, Some(delta))?;
            let log_term = (n as f64).ln().min(((m * n_paulis) as f64).ln()).max(1.0);
            BoundReport::new(
                "shots-shadow-surrogate",
                &[
                    ("n", n as f64),
                    ("m", m as f64),
                    ("n_paulis", n_paulis as f64),
                    ("eps", eps),
                    ("delta", delta),
                ],
                log_term * (1.0 / delta).ln() / eps,
            )
            .with_note("asymptotic scaling, constants omitted")
        }
        SampleComplexity::WorstHoeffding {
            norm_worst,
            lambda,
            eps,
            delta,
        } => {
            check_eps_delta("shots-worst-hoeffding", eps, Some(delta))?;
            BoundReport::new(
                "shots-worst-hoeffding",
                &[("norm_worst", norm_worst), ("lambda", lambda), ("eps", eps), ("delta", delta)],
                2.0 * (2.0 / delta).ln() * norm_worst * norm_worst * lambda * lambda / (eps * eps),
            )
        }
        SampleComplexity::MseAvg { norm_avg, lambda, eps } => {
            check_eps_delta("shots-mse-avg", eps, None)?;
            BoundReport::new(
                "shots-mse-avg",
                &[("norm_avg", norm_avg), ("lambda", lambda), ("eps", eps)],
                lambda * lambda * norm_avg * norm_avg / (eps * eps),
            )
        }
    })
}

const SHOT_HEADER: &str = "#shots v1";
const SHADOW_HEADER: &str = "#shadows v1";

fn log_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::schema(format!("{}:{line}", path.display()), msg)
}

/// Writes the plan and records as a line-based log.
pub fn write_shot_log(path: &Path, plan: &AllocationPlan, records: &[ShotRecord]) -> Result<()> {
    let n = plan.entries()[0].0.num_qubits();
    let stream = records.first().map_or(0, |r| r.stream);
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "{SHOT_HEADER} n={n} strategy={} shots={} stream={stream}",
        plan.strategy().name(),
        records.len()
    )?;
    for (p, b) in plan.entries() {
        writeln!(out, "#plan {p} {b:e}")?;
    }
    let mut line = String::new();
    for r in records {
        line.clear();
        writeln!(line, "{} {}", r.pauli, r.outcome).expect("write to string");
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn header_field<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header
        .split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
}

/// Reads a log written by [`write_shot_log`].
pub fn read_shot_log(path: &Path) -> Result<(AllocationPlan, Vec<ShotRecord>)> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| log_err(path, 1, "empty log"))??;
    if !header.starts_with(SHOT_HEADER) {
        return Err(log_err(path, 1, format!("expected header {SHOT_HEADER:?}")));
    }
    let field = |k: &str| header_field(&header, k).ok_or_else(|| log_err(path, 1, format!("missing {k}")));
    let n: usize = field("n")?.parse().map_err(|_| log_err(path, 1, "bad n"))?;
    let strategy = Strategy::from_name(field("strategy")?)?;
    let stream: u64 = field("stream")?.parse().map_err(|_| log_err(path, 1, "bad stream"))?;
    let mut weights = Vec::new();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let ln = i + 2;
        if let Some(rest) = line.strip_prefix("#plan ") {
            let mut parts = rest.split_whitespace();
            let p = parts.next().ok_or_else(|| log_err(path, ln, "missing Pauli"))?;
            let b: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| log_err(path, ln, "bad probability"))?;
            weights.push((PauliString::parse(n, p)?, b));
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(idx), Some(out)) = (parts.next(), parts.next()) else {
            return Err(log_err(path, ln, "expected `<pauli index> <outcome>`"));
        };
        let pauli: u32 = idx.parse().map_err(|_| log_err(path, ln, "bad index"))?;
        let outcome: i8 = out.parse().map_err(|_| log_err(path, ln, "bad outcome"))?;
        if outcome.abs() != 1 || pauli as usize >= weights.len() {
            return Err(log_err(path, ln, "record out of range"));
        }
        records.push(ShotRecord {
            pauli,
            outcome,
            draw: records.len() as u64,
            stream,
        });
    }
    let plan = AllocationPlan::from_weights(weights, strategy, records.len())?;
    Ok((plan, records))
}

pub fn write_shadow_log(path: &Path, records: &[ShadowRecord]) -> Result<()> {
    let n = records.first().map_or(0, |r| r.bases.len());
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{SHADOW_HEADER} n={n} shots={}", records.len())?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.extend(r.bases.iter().map(|b| b.as_char()));
        line.push(' ');
        line.extend(r.bits.iter().map(|&b| if b { '1' } else { '0' }));
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_shadow_log(path: &Path) -> Result<Vec<ShadowRecord>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| log_err(path, 1, "empty log"))??;
    if !header.starts_with(SHADOW_HEADER) {
        return Err(log_err(path, 1, format!("expected header {SHADOW_HEADER:?}")));
    }
    let n: usize = header_field(&header, "n")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| log_err(path, 1, "bad n"))?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let ln = i + 2;
        let (b, o) = line
            .split_once(' ')
            .ok_or_else(|| log_err(path, ln, "expected `<bases> <bits>`"))?;
        let bases: Vec<Letter> = b
            .chars()
            .map(|c| match Letter::from_char(c) {
                Some(l) if l != Letter::I => Ok(l),
                _ => Err(log_err(path, ln, format!("bad basis {c:?}"))),
            })
            .collect::<Result<_>>()?;
        let bits: Vec<bool> = o
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(log_err(path, ln, format!("bad bit {c:?}"))),
            })
            .collect::<Result<_>>()?;
        if bases.len() != n || bits.len() != n {
            return Err(log_err(path, ln, format!("expected {n} qubits")));
        }
        out.push(ShadowRecord { bases, bits });
    }
    Ok(out)
}
