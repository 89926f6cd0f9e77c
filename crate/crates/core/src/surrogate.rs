//! Surrogate evaluation, trigonometric moments, effective norms and the
//! closed-form truncation error bounds.

use std::collections::BTreeMap;
use std::f64::consts::{E, FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{Mode, MonomialKey, PropagatedObservable};
use crate::state::{overlap, InitialState};

/// Uniform distribution over the hypercube `center + [-r, r]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDistribution {
    pub center: Vec<f64>,
    pub r: f64,
}

impl PatchDistribution {
    pub fn new(center: Vec<f64>, r: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Validation(format!("half-width must be nonnegative, got {r}")));
        }
        Ok(PatchDistribution { center, r })
    }

    pub fn centered(m: usize, r: f64) -> Result<Self> {
        PatchDistribution::new(vec![0.0; m], r)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.center
            .iter()
            .map(|c| if self.r > 0.0 { c + rng.gen_range(-self.r..=self.r) } else { *c })
            .collect()
    }

    /// Point `index` of a scrambled Sobol sequence mapped into the patch.
    /// Supports up to `2^16` points and 256 dimensions.
    pub fn sobol_point(&self, index: u32, seed: u32) -> Vec<f64> {
        self.center
            .iter()
            .enumerate()
            .map(|(d, c)| {
                let u = sobol_burley::sample(index, d as u32, seed) as f64;
                c + self.r * (2.0 * u - 1.0)
            })
            .collect()
    }
}

/// Evaluates a symbolic surrogate against a fixed initial state, with the
/// overlaps `Tr[rho P]` computed once.
#[derive(Debug, Clone)]
pub struct SurrogateEvaluator {
    m: usize,
    /// `(d_P, monomials)` for terms with nonzero overlap.
    terms: Vec<(f64, Vec<(MonomialKey, f64)>)>,
}

impl SurrogateEvaluator {
    pub fn new(po: &PropagatedObservable, state: &InitialState) -> Result<Self> {
        if po.mode() != Mode::Symbolic {
            return Err(Error::Mode("surrogate evaluation needs a symbolic artifact".into()));
        }
        let overlaps: Vec<Result<f64>> =
            po.terms().par_iter().map(|t| overlap(state, &t.pauli)).collect();
        let mut terms = Vec::new();
        for (t, d) in po.terms().iter().zip(overlaps) {
            let d = d?;
            if d != 0.0 {
                terms.push((d, t.monomials().to_vec()));
            }
        }
        Ok(SurrogateEvaluator {
            m: po.num_params(),
            terms,
        })
    }

    pub fn num_params(&self) -> usize {
        self.m
    }

    /// Terms whose overlap with the state is nonzero.
    pub fn num_active_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn evaluate(&self, alpha: &[f64]) -> Result<f64> {
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
            .map(|(d, ms)| d * ms.iter().map(|(k, w)| w * k.eval(&cos, &sin)).sum::<f64>())
            .sum())
    }
}

/// `f~(alpha) = sum_P c_P(alpha) Tr[rho P]` for a symbolic surrogate.
pub fn evaluate(po: &PropagatedObservable, alpha: &[f64], state: &InitialState) -> Result<f64> {
    SurrogateEvaluator::new(po, state)?.evaluate(alpha)
}

/// `sum_P c_P Tr[rho P]` for a numeric propagation.
pub fn numeric_value(po: &PropagatedObservable, state: &InitialState) -> Result<f64> {
    if po.mode() != Mode::Numeric {
        return Err(Error::Mode("numeric value needs a numeric propagation".into()));
    }
    po.terms()
        .iter()
        .map(|t| Ok(t.numeric_coeff().unwrap() * overlap(state, &t.pauli)?))
        .sum()
}

fn binomials(n: usize) -> Vec<f64> {
    let mut row = vec![1.0f64; n + 1];
    for k in 1..n {
        row[k] = row[k - 1] * (n + 1 - k) as f64 / k as f64;
    }
    row
}

/// `E[e^{i k alpha}]` for `alpha ~ Unif[-r, r]`.
fn sinc_moment(k: i64, r: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        let x = k as f64 * r;
        x.sin() / x
    }
}

/// Taylor coefficients of `f` truncated at `deg`.
fn series_pow(base: &[f64], power: usize, deg: usize) -> Vec<f64> {
    let mut out = vec![0.0; deg + 1];
    out[0] = 1.0;
    for _ in 0..power {
        let mut next = vec![0.0; deg + 1];
        for (i, &a) in out.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in base.iter().enumerate().take(deg + 1 - i) {
                next[i + j] += a * b;
            }
        }
        out = next;
    }
    out
}

/// `E[cos^p(alpha) sin^q(alpha)]` for `alpha ~ Unif[-r, r]`, `r` in `(0, pi]`.
///
/// Large `(p + q) r` expands into complex exponentials with
/// `E[e^{i k alpha}] = sin(k r) / (k r)`; small `(p + q) r` integrates the
/// power series term by term, which avoids cancellation when the moment is
/// tiny.
pub fn trig_moment(p: u32, q: u32, r: f64) -> Result<f64> {
    if !(r > 0.0 && r <= PI) {
        return Err(Error::Validation(format!("half-width {r} outside (0, pi]")));
    }
    if q % 2 == 1 {
        return Ok(0.0);
    }
    let (p, q) = (p as usize, q as usize);
    let total = p + q;
    if total == 0 {
        return Ok(1.0);
    }
    if total as f64 * r > 3.0 {
        Ok(moment_exponential(p, q, r))
    } else {
        Ok(moment_series(p, q, r))
    }
}

fn moment_exponential(p: usize, q: usize, r: f64) -> f64 {
    let total = p + q;
    // cos^p sin^q = 2^{-(p+q)} i^{-q} sum_{j,l} C(p,j) C(q,l) (-1)^{q-l}
    //               e^{i(2j - p + 2l - q) alpha}
    let (cp, cq) = (binomials(p), binomials(q));
    let sign_q = if (q / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut acc = 0.0;
    for (j, a) in cp.iter().enumerate() {
        for (l, b) in cq.iter().enumerate() {
            let s = if (q - l).is_multiple_of(2) { 1.0 } else { -1.0 };
            let k = (2 * j + 2 * l) as i64 - total as i64;
            acc += a * b * s * sinc_moment(k, r);
        }
    }
    acc * sign_q / 2f64.powi(total as i32)
}

fn moment_series(p: usize, q: usize, r: f64) -> f64 {
    let deg = 40 + q;
    let mut cos_s = vec![0.0; deg + 1];
    let mut sin_s = vec![0.0; deg + 1];
    let mut fact = 1.0;
    for k in 0..=deg {
        if k > 0 {
            fact *= k as f64;
        }
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            cos_s[k] = sign / fact;
        } else {
            sin_s[k] = sign / fact;
        }
    }
    let cp = series_pow(&cos_s, p, deg);
    let sq = series_pow(&sin_s, q, deg);
    let prod = series_pow_mul(&cp, &sq, deg);
    // E[alpha^j] = r^j / (j + 1) for even j, zero for odd j.
    let mut acc = 0.0;
    let mut rj = 1.0;
    for (j, c) in prod.iter().enumerate() {
        if j % 2 == 0 {
            acc += c * rj / (j + 1) as f64;
        }
        rj *= r;
    }
    acc
}

fn series_pow_mul(a: &[f64], b: &[f64], deg: usize) -> Vec<f64> {
    let mut out = vec![0.0; deg + 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(deg + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Moments `E[cos^p sin^q]` of a symmetric single-angle distribution.
pub trait AngleMoments: Sync {
    fn moment(&self, p: u32, q: u32) -> f64;
}

/// Uniform on `[-r, r]`; `r = 0` is the point mass at zero.
#[derive(Debug, Clone)]
pub struct UniformMoments {
    r: f64,
    table: Vec<Vec<f64>>,
}

impl UniformMoments {
    pub fn new(r: f64, max_p: u32, max_q: u32) -> Result<Self> {
        if !(0.0..=PI).contains(&r) {
            return Err(Error::Validation(format!("half-width {r} outside [0, pi]")));
        }
        let table = (0..=max_p)
            .map(|p| {
                (0..=max_q)
                    .map(|q| {
                        if r == 0.0 {
                            Ok(if q == 0 { 1.0 } else { 0.0 })
                        } else {
                            trig_moment(p, q, r)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(UniformMoments { r, table })
    }

    pub fn half_width(&self) -> f64 {
        self.r
    }
}

impl AngleMoments for UniformMoments {
    fn moment(&self, p: u32, q: u32) -> f64 {
        if let Some(v) = self.table.get(p as usize).and_then(|row| row.get(q as usize)) {
            return *v;
        }
        if self.r == 0.0 {
            return if q == 0 { 1.0 } else { 0.0 };
        }
        trig_moment(p, q, self.r).expect("r validated at construction")
    }
}

/// Result of an effective-norm computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    /// Per-term contributions in the artifact's term order.
    pub per_pauli: Vec<f64>,
    /// Set when at least one term fell back to Monte-Carlo sampling.
    pub monte_carlo: bool,
    /// Set when the value is an over-approximation.
    pub upper_bound: bool,
}

/// Monomial count per Pauli above which pairwise moments are replaced by
/// Monte-Carlo sampling.
pub const PAIRWISE_CAP: usize = 10_000;
const MC_SAMPLES: usize = 1_000_000;
const MC_SEED: u64 = 0x5eed_0a11;

/// `E[Phi_a Phi_b]` for two monomials via per-parameter factorization.
fn pair_moment(a: &MonomialKey, b: &MonomialKey, mom: &dyn AngleMoments) -> f64 {
    let (fa, fb) = (&a.factors, &b.factors);
    let (mut i, mut j) = (0, 0);
    let mut v = 1.0;
    while i < fa.len() || j < fb.len() {
        let (p, q) = if j == fb.len() || (i < fa.len() && fa[i].0 < fb[j].0) {
            i += 1;
            (fa[i - 1].1 as u32, fa[i - 1].2 as u32)
        } else if i == fa.len() || fb[j].0 < fa[i].0 {
            j += 1;
            (fb[j - 1].1 as u32, fb[j - 1].2 as u32)
        } else {
            i += 1;
            j += 1;
            (
                (fa[i - 1].1 + fb[j - 1].1) as u32,
                (fa[i - 1].2 + fb[j - 1].2) as u32,
            )
        };
        if q % 2 == 1 {
            return 0.0;
        }
        v *= mom.moment(p, q);
    }
    v
}

/// `E[c_P(alpha)^2]` for one term.
fn second_moment(ms: &[(MonomialKey, f64)], mom: &dyn AngleMoments) -> f64 {
    let mut acc = 0.0;
    for (a, (ka, wa)) in ms.iter().enumerate() {
        acc += wa * wa * pair_moment(ka, ka, mom);
        for (kb, wb) in &ms[a + 1..] {
            acc += 2.0 * wa * wb * pair_moment(ka, kb, mom);
        }
    }
    acc.max(0.0)
}

fn second_moment_mc(ms: &[(MonomialKey, f64)], m: usize, r: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cos = vec![0.0; m];
    let mut sin = vec![0.0; m];
    let mut acc = 0.0;
    for _ in 0..MC_SAMPLES {
        for i in 0..m {
            let a: f64 = if r > 0.0 { rng.gen_range(-r..=r) } else { 0.0 };
            cos[i] = a.cos();
            sin[i] = a.sin();
        }
        let c: f64 = ms.iter().map(|(k, w)| w * k.eval(&cos, &sin)).sum();
        acc += c * c;
    }
    acc / MC_SAMPLES as f64
}

fn require_symbolic(po: &PropagatedObservable) -> Result<()> {
    if po.mode() != Mode::Symbolic {
        return Err(Error::Mode("effective norms need a symbolic artifact".into()));
    }
    Ok(())
}

/// Average-case effective 1-norm `sum_P sqrt(E[c_P^2])` over a zero-centered
/// uniform patch.
pub fn effective_norm_avg(po: &PropagatedObservable, dist: &PatchDistribution) -> Result<NormReport> {
    require_symbolic(po)?;
    if dist.center.iter().any(|&c| c != 0.0) {
        return Err(Error::Validation(
            "average effective norm is defined for zero-centered patches".into(),
        ));
    }
    if dist.dim() != po.num_params() {
        return Err(Error::Dimension {
            expected: po.num_params(),
            found: dist.dim(),
        });
    }
    let (mut max_p, mut max_q) = (0u32, 0u32);
    for t in po.terms() {
        for (k, _) in t.monomials() {
            for f in &k.factors {
                max_p = max_p.max(2 * f.1 as u32);
                max_q = max_q.max(2 * f.2 as u32);
            }
        }
    }
    let mom = UniformMoments::new(dist.r, max_p, max_q)?;
    effective_norm_avg_with(po, &mom, dist.r)
}

/// As [`effective_norm_avg`] with a caller-supplied moment table. `r` is used
/// only by the Monte-Carlo fallback.
pub fn effective_norm_avg_with(
    po: &PropagatedObservable,
    mom: &dyn AngleMoments,
    r: f64,
) -> Result<NormReport> {
    require_symbolic(po)?;
    let m = po.num_params();
    let parts: Vec<(f64, bool)> = po
        .terms()
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let ms = t.monomials();
            if ms.len() > PAIRWISE_CAP {
                (second_moment_mc(ms, m, r, MC_SEED ^ i as u64).sqrt(), true)
            } else {
                (second_moment(ms, mom).sqrt(), false)
            }
        })
        .collect();
    Ok(NormReport {
        value: parts.iter().map(|p| p.0).sum(),
        per_pauli: parts.iter().map(|p| p.0).collect(),
        monte_carlo: parts.iter().any(|p| p.1),
        upper_bound: false,
    })
}

/// Over-approximation of `sum_P max |c_P(alpha)|` over the zero-centered
/// patch of half-width `r`: each monomial is bounded factor-wise by
/// `|cos| <= 1` and `|sin| <= sin(min(r, pi/2))`.
pub fn effective_norm_worst(po: &PropagatedObservable, r: f64) -> Result<NormReport> {
    require_symbolic(po)?;
    if !(r >= 0.0) {
        return Err(Error::Validation(format!("half-width must be nonnegative, got {r}")));
    }
    let s = r.min(FRAC_PI_2).sin();
    let per: Vec<f64> = po
        .terms()
        .iter()
        .map(|t| {
            t.monomials()
                .iter()
                .map(|(k, w)| {
                    let sines: u32 = k.factors.iter().map(|f| f.2 as u32).sum();
                    w.abs() * s.powi(sines as i32)
                })
                .sum()
        })
        .collect();
    Ok(NormReport {
        value: per.iter().sum(),
        per_pauli: per,
        monte_carlo: false,
        upper_bound: true,
    })
}

/// A closed-form bound evaluated at concrete inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub formula: String,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    pub fn new(formula: &str, inputs: &[(&str, f64)], value: f64) -> Self {
        BoundReport {
            formula: formula.to_string(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            value,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bound report serializes")
    }
}

pub const FORMULA_MSE: &str = "cor-d2-mse";
pub const FORMULA_WORST: &str = "thm-d3-worst";
pub const FORMULA_CORRELATED: &str = "prop-d4-corr";

fn check_bound_inputs(formula: &'static str, r: f64, a1: f64) -> Result<()> {
    if !(r >= 0.0) || !(a1 >= 0.0) {
        return Err(Error::Hypothesis {
            formula,
            condition: format!("r >= 0 and ||a||_1 >= 0 (got r = {r}, ||a||_1 = {a1})"),
        });
    }
    Ok(())
}

/// `x^kappa` with `0^0 = 1`.
fn pow_k(x: f64, kappa: u32) -> f64 {
    if kappa == 0 {
        1.0
    } else {
        x.powi(kappa as i32)
    }
}

/// Mean squared truncation error bound `||a||_1^2 (e m r^2 / (3 kappa))^kappa`,
/// valid for `r^2 <= 3 kappa / m`.
pub fn bound_mse_truncation(m: usize, r: f64, kappa: u32, a1: f64) -> Result<BoundReport> {
    check_bound_inputs(FORMULA_MSE, r, a1)?;
    if r * r * m as f64 > 3.0 * kappa as f64 {
        return Err(Error::Hypothesis {
            formula: FORMULA_MSE,
            condition: format!("r^2 <= 3 kappa / m (r = {r}, kappa = {kappa}, m = {m})"),
        });
    }
    let base = if kappa == 0 {
        0.0
    } else {
        E * m as f64 * r * r / (3.0 * kappa as f64)
    };
    Ok(BoundReport::new(
        FORMULA_MSE,
        &[("m", m as f64), ("r", r), ("kappa", kappa as f64), ("a1", a1)],
        a1 * a1 * pow_k(base, kappa),
    ))
}

/// Worst-case truncation error bound `||a||_1 (e m r / kappa)^kappa`, valid
/// for `r <= kappa / m`.
pub fn bound_worst_truncation(m: usize, r: f64, kappa: u32, a1: f64) -> Result<BoundReport> {
    worst_value(FORMULA_WORST, m, r, kappa, a1).map(|v| {
        BoundReport::new(
            FORMULA_WORST,
            &[("m", m as f64), ("r", r), ("kappa", kappa as f64), ("a1", a1)],
            v,
        )
    })
}

fn worst_value(formula: &'static str, m: usize, r: f64, kappa: u32, a1: f64) -> Result<f64> {
    check_bound_inputs(formula, r, a1)?;
    if r * m as f64 > kappa as f64 {
        return Err(Error::Hypothesis {
            formula,
            condition: format!("r <= kappa / m (r = {r}, kappa = {kappa}, m = {m})"),
        });
    }
    let base = if kappa == 0 {
        0.0
    } else {
        E * m as f64 * r / kappa as f64
    };
    Ok(a1 * pow_k(base, kappa))
}

/// Mean absolute error bound for circuits whose rotations share one angle:
/// the worst-case bound divided by `kappa + 1`.
pub fn bound_correlated_avg(m: usize, r: f64, kappa: u32, a1: f64) -> Result<BoundReport> {
    let v = worst_value(FORMULA_CORRELATED, m, r, kappa, a1)? / (kappa as f64 + 1.0);
    Ok(BoundReport::new(
        FORMULA_CORRELATED,
        &[("m", m as f64), ("r", r), ("kappa", kappa as f64), ("a1", a1)],
        v,
    ))
}
