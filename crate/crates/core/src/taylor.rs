//! Order-kappa multivariate Taylor surrogate around an arbitrary center,
//! built from parameter-shift derivatives of a loss oracle.

use std::collections::BTreeMap;
use std::f64::consts::{E, FRAC_PI_2};
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use rustc_hash::FxHasher;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::measurement::{make_allocation, plan_truths, simulate_direct, AllocationInput, RecordSummary, Strategy};
use crate::observable::ObservableSpec;
use crate::state::{exact_expectation, InitialState};
use crate::surrogate::BoundReport;

/// A callable loss `alpha -> f(alpha)` plus the constants the bounds need.
pub trait LossOracle: Sync {
    fn num_params(&self) -> usize;

    /// Derivative-growth constant: `|d^k f| <= ||O|| gamma^k`.
    fn gamma(&self) -> f64;

    fn op_norm(&self) -> f64;

    /// Whether the two-point shift rule is exact for every parameter.
    fn shift_rule_exact(&self) -> bool {
        true
    }

    fn evaluate(&self, alpha: &[f64]) -> Result<f64>;

    /// Evaluation with an explicit shot budget; exact oracles ignore it.
    fn evaluate_with_shots(&self, alpha: &[f64], _shots: usize) -> Result<f64> {
        self.evaluate(alpha)
    }
}

/// `gamma = 2 max_l ||H_l||` for gates `exp(-i alpha c_l P_l / 2)`.
pub fn gamma_for_generator_scales(scales: &[f64]) -> f64 {
    scales.iter().fold(0.0f64, |g, c| g.max(c.abs()))
}

/// Derivative-growth constant of a Pauli-rotation circuit. A parameter driving
/// `u` rotations contributes `u`.
pub fn derivative_growth_gamma(circuit: &Circuit) -> f64 {
    let uses = circuit.param_uses();
    if uses.is_empty() {
        return 1.0;
    }
    gamma_for_generator_scales(&uses.iter().map(|&u| u as f64).collect::<Vec<_>>())
}

/// Exact loss `Tr[O U(alpha) rho U(alpha)^dagger]` from the dense simulator.
#[derive(Debug, Clone)]
pub struct CircuitOracle {
    circuit: Circuit,
    obs: ObservableSpec,
    state: InitialState,
}

impl CircuitOracle {
    pub fn new(circuit: Circuit, obs: ObservableSpec, state: InitialState) -> Result<Self> {
        let n = circuit.num_qubits();
        for found in [obs.num_qubits(), state.num_qubits()] {
            if found != n {
                return Err(Error::Dimension { expected: n, found });
            }
        }
        Ok(CircuitOracle { circuit, obs, state })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn observable(&self) -> &ObservableSpec {
        &self.obs
    }

    pub fn state(&self) -> &InitialState {
        &self.state
    }
}

impl LossOracle for CircuitOracle {
    fn num_params(&self) -> usize {
        self.circuit.num_params()
    }

    fn gamma(&self) -> f64 {
        derivative_growth_gamma(&self.circuit)
    }

    fn op_norm(&self) -> f64 {
        self.obs.op_norm_bound()
    }

    fn shift_rule_exact(&self) -> bool {
        self.circuit.gates().iter().all(|g| match g {
            Gate::Rotation { param, .. } => param.index().is_none_or(|i| self.circuit.param_uses()[i] == 1),
            Gate::Clifford(_) => true,
        })
    }

    fn evaluate(&self, alpha: &[f64]) -> Result<f64> {
        exact_expectation(&self.circuit, alpha, &self.obs, &self.state)
    }
}

/// Wraps a [`CircuitOracle`] with simulated shot noise: each evaluation draws
/// `shots` randomized single-Pauli measurements allocated by `|a_P|`.
#[derive(Debug, Clone)]
pub struct NoisyCircuitOracle {
    inner: CircuitOracle,
    shots: usize,
    seed: u64,
}

impl NoisyCircuitOracle {
    pub fn new(inner: CircuitOracle, shots: usize, seed: u64) -> Self {
        NoisyCircuitOracle { inner, shots, seed }
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    fn stream_for(alpha: &[f64]) -> u64 {
        let mut h = FxHasher::default();
        for a in alpha {
            a.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

impl LossOracle for NoisyCircuitOracle {
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn op_norm(&self) -> f64 {
        self.inner.op_norm()
    }

    fn shift_rule_exact(&self) -> bool {
        self.inner.shift_rule_exact()
    }

    fn evaluate(&self, alpha: &[f64]) -> Result<f64> {
        self.evaluate_with_shots(alpha, self.shots)
    }

    fn evaluate_with_shots(&self, alpha: &[f64], shots: usize) -> Result<f64> {
        let mut sv = self.inner.state.to_statevector()?;
        sv.apply_circuit(&self.inner.circuit, alpha)?;
        let evolved = InitialState::dense(sv)?;
        let terms = self.inner.obs.terms();
        let plan = make_allocation(Strategy::AbsCoeff, AllocationInput::Coeffs(terms), shots)?;
        let truths = plan_truths(&plan, &evolved)?;
        let records = simulate_direct(&plan, &truths, self.seed, Self::stream_for(alpha))?;
        let coeffs: Vec<f64> = plan.entries().iter().map(|(p, _)| self.inner.obs.coeff(p)).collect();
        Ok(RecordSummary::new(&plan, &records)?.estimate_aligned(&plan, &coeffs))
    }
}

/// Any closure with declared constants.
pub struct FnOracle<F> {
    m: usize,
    gamma: f64,
    op_norm: f64,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnOracle<F> {
    pub fn new(m: usize, gamma: f64, op_norm: f64, f: F) -> Self {
        FnOracle { m, gamma, op_norm, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> LossOracle for FnOracle<F> {
    fn num_params(&self) -> usize {
        self.m
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn op_norm(&self) -> f64 {
        self.op_norm
    }

    fn evaluate(&self, alpha: &[f64]) -> Result<f64> {
        Ok((self.f)(alpha))
    }
}

/// How a single partial derivative is turned into oracle calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DerivativeRecipe {
    /// `d_l f = [f(alpha + pi/2 e_l) - f(alpha - pi/2 e_l)] / 2`, iterated.
    ShiftRule,
    /// Iterated central differences with step `h`; truncation error `O(h^2)`
    /// per order.
    FiniteDifference { h: f64 },
}

impl DerivativeRecipe {
    fn step(self) -> f64 {
        match self {
            DerivativeRecipe::ShiftRule => FRAC_PI_2,
            DerivativeRecipe::FiniteDifference { h } => h,
        }
    }

    /// Magnitude of each oracle-call coefficient for an order-`k` derivative.
    fn coeff_scale(self, k: u32) -> f64 {
        match self {
            DerivativeRecipe::ShiftRule => 0.5f64.powi(k as i32),
            DerivativeRecipe::FiniteDifference { h } => (2.0 * h).powi(-(k as i32)),
        }
    }
}

/// How shots are split across oracle calls of a noisy build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShotBudget {
    /// The oracle's own per-call budget.
    PerCall,
    /// `total` shots split across unique evaluation points in proportion to
    /// each point's expected weight in the surrogate over a patch of
    /// half-width `r`.
    Weighted { total: usize, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorOptions {
    pub recipe: DerivativeRecipe,
    pub budget: ShotBudget,
}

impl Default for TaylorOptions {
    fn default() -> Self {
        TaylorOptions {
            recipe: DerivativeRecipe::ShiftRule,
            budget: ShotBudget::PerCall,
        }
    }
}

/// Oracle-call accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorLedger {
    /// Unique partial derivatives computed.
    pub derivatives: usize,
    /// Oracle calls asked for, summed over derivatives.
    pub requested_evaluations: usize,
    /// Distinct shift points actually evaluated.
    pub unique_evaluations: usize,
    /// Oracle calls per derivative of the highest order.
    pub nd: usize,
    /// Smallest per-call coefficient magnitude.
    pub b0: f64,
    /// `N_d [e (m + kappa - 1) / kappa]^kappa`.
    pub call_bound: f64,
    pub recipe: DerivativeRecipe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_shots: Option<usize>,
}

/// Sparse multi-index `[(l, k_l)]` with `k_l > 0`, ascending in `l`.
pub type MultiIndex = Vec<(u32, u32)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorEntry {
    pub k: MultiIndex,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSurrogate {
    pub center: Vec<f64>,
    pub order: u32,
    pub entries: Vec<TaylorEntry>,
    pub ledger: TaylorLedger,
}

const TAYLOR_FORMAT: &str = "patchsurr-taylor";
const TAYLOR_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TaylorFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: TaylorSurrogate,
}

/// `C(n, k)` as `f64`.
fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `N_d [e (m + kappa - 1) / kappa]^kappa`, or `N_d` when `kappa = 0`.
pub fn call_bound(m: usize, kappa: u32, nd: usize) -> f64 {
    if kappa == 0 {
        return nd as f64;
    }
    let k = kappa as f64;
    nd as f64 * (E * (m as f64 + k - 1.0) / k).powi(kappa as i32)
}

/// Number of unique partial derivatives of order at most `kappa`.
pub fn unique_derivative_count(m: usize, kappa: u32) -> usize {
    binom(m + kappa as usize, kappa as usize).round() as usize
}

/// Nondecreasing index sequences of length `k` over `0..m`, lexicographic.
fn multisets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(m: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(m, k, i, cur, out);
            cur.pop();
        }
    }
    rec(m, k, 0, &mut cur, &mut out);
    out
}

fn to_multi_index(seq: &[usize]) -> MultiIndex {
    let mut out: MultiIndex = Vec::new();
    for &l in seq {
        match out.last_mut() {
            Some((last, c)) if *last as usize == l => *c += 1,
            _ => out.push((l as u32, 1)),
        }
    }
    out
}

/// Shift point as integer multiples of the recipe step, sparse and sorted.
type ShiftKey = Vec<(u32, i32)>;

/// Oracle calls `(key, signed coefficient)` for one derivative.
fn derivative_calls(seq: &[usize], recipe: DerivativeRecipe) -> Vec<(ShiftKey, f64)> {
    let k = seq.len();
    let scale = recipe.coeff_scale(k as u32);
    (0..1usize << k)
        .map(|signs| {
            let mut key: BTreeMap<u32, i32> = BTreeMap::new();
            let mut sign = 1.0;
            for (j, &l) in seq.iter().enumerate() {
                let s = if (signs >> j) & 1 == 1 { -1 } else { 1 };
                if s < 0 {
                    sign = -sign;
                }
                *key.entry(l as u32).or_default() += s;
            }
            let key: ShiftKey = key.into_iter().filter(|&(_, v)| v != 0).collect();
            (key, sign * scale)
        })
        .collect()
}

fn shift_point(center: &[f64], key: &ShiftKey, step: f64) -> Vec<f64> {
    let mut a = center.to_vec();
    for &(l, v) in key {
        a[l as usize] += v as f64 * step;
    }
    a
}

fn check_recipe(oracle: &dyn LossOracle, recipe: DerivativeRecipe) -> Result<()> {
    match recipe {
        DerivativeRecipe::ShiftRule if !oracle.shift_rule_exact() => Err(Error::Unsupported(
            "two-point shift rule needs each parameter to drive a single Pauli rotation; use finite differences"
                .into(),
        )),
        DerivativeRecipe::FiniteDifference { h } if !(h > 0.0 && h.is_finite()) => {
            Err(Error::Config(format!("finite-difference step must be positive, got {h}")))
        }
        _ => Ok(()),
    }
}

fn check_center(oracle: &dyn LossOracle, center: &[f64]) -> Result<()> {
    if center.len() != oracle.num_params() {
        return Err(Error::Dimension {
            expected: oracle.num_params(),
            found: center.len(),
        });
    }
    Ok(())
}

/// `d^k f(alpha*)` for a multi-index given as `(l, k_l)` pairs.
pub fn shift_derivative(
    oracle: &dyn LossOracle,
    center: &[f64],
    k: &[(u32, u32)],
    recipe: DerivativeRecipe,
) -> Result<f64> {
    check_center(oracle, center)?;
    check_recipe(oracle, recipe)?;
    let mut seq = Vec::new();
    for &(l, c) in k {
        if l as usize >= center.len() {
            return Err(Error::Dimension {
                expected: center.len(),
                found: l as usize + 1,
            });
        }
        seq.extend(std::iter::repeat_n(l as usize, c as usize));
    }
    seq.sort_unstable();
    let step = recipe.step();
    derivative_calls(&seq, recipe)
        .into_iter()
        .map(|(key, w)| Ok(w * eval_point(oracle, center, &key, step, None)?))
        .sum()
}

fn eval_point(
    oracle: &dyn LossOracle,
    center: &[f64],
    key: &ShiftKey,
    step: f64,
    shots: Option<usize>,
) -> Result<f64> {
    let a = shift_point(center, key, step);
    let v = match shots {
        Some(s) => oracle.evaluate_with_shots(&a, s),
        None => oracle.evaluate(&a),
    };
    v.map_err(|e| Error::OracleFailure {
        shift: key.iter().map(|&(l, v)| (l as usize, v as f64 * step)).collect(),
        source: Box::new(e),
    })
}

/// Builds the order-`kappa` surrogate around `center`, evaluating every
/// distinct shift point once.
pub fn build_taylor(
    oracle: &dyn LossOracle,
    center: &[f64],
    kappa: u32,
    opts: TaylorOptions,
) -> Result<TaylorSurrogate> {
    check_center(oracle, center)?;
    check_recipe(oracle, opts.recipe)?;
    let m = center.len();
    let step = opts.recipe.step();

    let mut seqs = Vec::new();
    for k in 0..=kappa as usize {
        seqs.extend(multisets(m, k));
    }
    let calls: Vec<Vec<(ShiftKey, f64)>> = seqs.iter().map(|s| derivative_calls(s, opts.recipe)).collect();
    let requested: usize = calls.iter().map(Vec::len).sum();

    let mut unique: BTreeMap<ShiftKey, usize> = BTreeMap::new();
    for c in calls.iter().flatten() {
        let next = unique.len();
        unique.entry(c.0.clone()).or_insert(next);
    }
    let mut points: Vec<(ShiftKey, usize)> = unique.iter().map(|(k, &i)| (k.clone(), i)).collect();
    points.sort_by_key(|p| p.1);

    let shots: Option<Vec<usize>> = match opts.budget {
        ShotBudget::PerCall => None,
        ShotBudget::Weighted { total, r } => {
            let mut w = vec![0.0; points.len()];
            for (seq, cs) in seqs.iter().zip(&calls) {
                let mi = to_multi_index(seq);
                // E|prod delta_l^k_l / k_l!| for delta uniform on [-r, r]
                let mag: f64 = mi
                    .iter()
                    .map(|&(_, c)| r.powi(c as i32) / ((c + 1) as f64 * factorial(c)))
                    .product();
                for (key, coef) in cs {
                    w[unique[key]] += coef.abs() * mag;
                }
            }
            let sum: f64 = w.iter().sum();
            Some(
                w.iter()
                    .map(|x| ((total as f64 * x / sum).round() as usize).max(1))
                    .collect(),
            )
        }
    };

    let values: Vec<f64> = points
        .par_iter()
        .map(|(key, i)| eval_point(oracle, center, key, step, shots.as_ref().map(|s| s[*i])))
        .collect::<Result<_>>()?;

    let entries: Vec<TaylorEntry> = seqs
        .iter()
        .zip(&calls)
        .map(|(seq, cs)| TaylorEntry {
            k: to_multi_index(seq),
            value: cs.iter().map(|(key, w)| w * values[unique[key]]).sum(),
        })
        .collect();
    if let Some(e) = entries.iter().find(|e| !e.value.is_finite()) {
        return Err(Error::Validation(format!("derivative {:?} is not finite", e.k)));
    }

    let nd = 1usize << kappa;
    Ok(TaylorSurrogate {
        center: center.to_vec(),
        order: kappa,
        ledger: TaylorLedger {
            derivatives: entries.len(),
            requested_evaluations: requested,
            unique_evaluations: points.len(),
            nd,
            b0: opts.recipe.coeff_scale(kappa),
            call_bound: call_bound(m, kappa, nd),
            recipe: opts.recipe,
            total_shots: shots.map(|s| s.iter().sum()),
        },
        entries,
    })
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// `sum_k d^k f(alpha*) prod_l delta_l^k_l / k_l!`.
pub fn eval_taylor(ts: &TaylorSurrogate, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != ts.center.len() {
        return Err(Error::Dimension {
            expected: ts.center.len(),
            found: alpha.len(),
        });
    }
    let delta: Vec<f64> = alpha.iter().zip(&ts.center).map(|(a, c)| a - c).collect();
    Ok(ts
        .entries
        .iter()
        .map(|e| {
            e.value
                * e.k
                    .iter()
                    .map(|&(l, c)| delta[l as usize].powi(c as i32) / factorial(c))
                    .product::<f64>()
        })
        .sum())
}

impl TaylorSurrogate {
    pub fn num_params(&self) -> usize {
        self.center.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TaylorFile {
            format: TAYLOR_FORMAT.into(),
            version: TAYLOR_VERSION,
            body: self.clone(),
        })
        .expect("taylor surrogate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: TaylorFile = serde_json::from_str(text)?;
        if f.format != TAYLOR_FORMAT {
            return Err(Error::schema("format", format!("expected {TAYLOR_FORMAT:?}")));
        }
        if f.version != TAYLOR_VERSION {
            return Err(Error::schema("version", format!("unsupported version {}", f.version)));
        }
        let ts = f.body;
        let m = ts.center.len();
        for (i, e) in ts.entries.iter().enumerate() {
            let deg: u32 = e.k.iter().map(|p| p.1).sum();
            if deg > ts.order || e.k.iter().any(|&(l, c)| l as usize >= m || c == 0) || !e.value.is_finite() {
                return Err(Error::schema(format!("entries[{i}]"), "invalid multi-index or value"));
            }
        }
        Ok(ts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaylorBoundKind {
    Worst,
    Mse,
}

pub const FORMULA_TAYLOR_WORST: &str = "taylor-worst";
pub const FORMULA_TAYLOR_MSE: &str = "taylor-mse";

/// Worst case `||O|| (gamma r m)^(kappa+1) / (kappa+1)!`; mean square
/// `(2 gamma^2 m r^2 / 3)^((kappa+1)/2) ||O|| e^(gamma^2 m r^2 / 3) / sqrt((kappa+1)!)`.
pub fn taylor_bounds(
    kind: TaylorBoundKind,
    m: usize,
    r: f64,
    kappa: u32,
    gamma: f64,
    op_norm: f64,
) -> Result<BoundReport> {
    if !(r >= 0.0) || !(gamma >= 0.0) || !(op_norm >= 0.0) {
        return Err(Error::Validation(format!(
            "bound inputs must be non-negative (r = {r}, gamma = {gamma}, ||O|| = {op_norm})"
        )));
    }
    let mf = m as f64;
    let k1 = kappa + 1;
    let inputs = [
        ("m", mf),
        ("r", r),
        ("kappa", kappa as f64),
        ("gamma", gamma),
        ("op_norm", op_norm),
    ];
    Ok(match kind {
        TaylorBoundKind::Worst => {
            let x = gamma * r * mf;
            let report = BoundReport::new(
                FORMULA_TAYLOR_WORST,
                &inputs,
                op_norm * x.powi(k1 as i32) / factorial(k1),
            );
            if x > 1.0 {
                report.with_note("gamma r m > 1: outside the r ~ 1/m regime")
            } else {
                report
            }
        }
        TaylorBoundKind::Mse => {
            let s = gamma * gamma * mf * r * r / 3.0;
            let report = BoundReport::new(
                FORMULA_TAYLOR_MSE,
                &inputs,
                (2.0 * s).powf(k1 as f64 / 2.0) * op_norm * s.exp() / factorial(k1).sqrt(),
            );
            if s > 1.0 {
                report.with_note("gamma^2 m r^2 / 3 > 1: outside the r ~ 1/sqrt(m) regime")
            } else {
                report
            }
        }
    })
}
