//! Batch studies: truncation RMSE sweeps, shot-allocation comparisons,
//! Kibble-Zurek defect scans and Taylor patch reports, with CSV output and
//! run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::measurement::{
    make_allocation, plan_truths, shadow_estimate, simulate_direct, simulate_shadows, AllocationInput,
    RecordSummary, Strategy,
};
use crate::observable::ObservableSpec;
use crate::pauli::{Letter, PauliString};
use crate::propagation::{backpropagate_partitioned, Mode, PropagatedObservable, TruncationPolicy};
use crate::state::{overlap, InitialState};
use crate::surrogate::{bound_mse_truncation, PatchDistribution, SurrogateEvaluator};
use crate::taylor::{
    build_taylor, eval_taylor, taylor_bounds, LossOracle, TaylorBoundKind, TaylorLedger, TaylorOptions,
};
use crate::topology::Topology;
use crate::trotter::{build_tfi_trotter, Binding, RampKind, RampSample, TrotterSpec};

pub const CSV_VERSION: u32 = 1;

/// A row type with a fixed, versioned CSV layout.
pub trait CsvRow {
    const COMMAND: &'static str;
    const HEADER: &'static str;
    fn write_fields(&self, out: &mut String);
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn csv_string<R: CsvRow>(rows: &[R]) -> String {
    let mut out = format!("# patchsurr {} v{CSV_VERSION}\n{}\n", R::COMMAND, R::HEADER);
    for r in rows {
        r.write_fields(&mut out);
        out.push('\n');
    }
    out
}

pub fn write_csv<R: CsvRow>(path: &Path, rows: &[R]) -> Result<()> {
    std::fs::write(path, csv_string(rows))?;
    Ok(())
}

/// Provenance for one output file, written next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub partitions: usize,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub artifact_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>, partitions: usize) -> Result<Self> {
        Ok(RunManifest {
            command: command.into(),
            config: serde_json::to_value(config)?,
            seeds,
            partitions,
            timings: BTreeMap::new(),
            artifact_version: format!("patchsurr {} csv-v{CSV_VERSION}", env!("CARGO_PKG_VERSION")),
        })
    }

    pub fn record_timing(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.into(), seconds);
    }

    /// Writes `<out>.manifest.json` and returns its path.
    pub fn write_sidecar(&self, out: &Path) -> Result<PathBuf> {
        let path = manifest_path(out);
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Circuit, observable and initial state of one landscape-patch study.
#[derive(Debug, Clone)]
pub struct PatchProblem {
    pub circuit: Circuit,
    pub obs: ObservableSpec,
    pub state: InitialState,
}

/// Transverse-field Ising HVA on a grid: the state is the all-zero state
/// evolved by `prep_layers` exact Trotter layers, and the surrogated circuit
/// is `hva_layers` Trotter-structured layers with one free angle per gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Config {
    pub rows: usize,
    pub cols: usize,
    pub prep_layers: usize,
    pub hva_layers: usize,
    pub dt: f64,
    pub h: f64,
    pub j: f64,
    /// Defaults to the site nearest the grid center.
    pub obs_qubit: Option<usize>,
}

impl Fig2Config {
    /// 4x4 grid, 16 qubits.
    pub fn full() -> Self {
        Fig2Config {
            rows: 4,
            cols: 4,
            prep_layers: 4,
            hva_layers: 4,
            dt: 0.1,
            h: 1.0,
            j: 1.0,
            obs_qubit: None,
        }
    }

    /// 3x3 grid, 9 qubits.
    pub fn desk() -> Self {
        Fig2Config {
            rows: 3,
            cols: 3,
            ..Fig2Config::full()
        }
    }

    pub fn middle_qubit(&self) -> usize {
        ((self.rows - 1) / 2) * self.cols + (self.cols - 1) / 2
    }

    pub fn build(&self) -> Result<PatchProblem> {
        let top = Topology::grid(self.rows, self.cols)?;
        let n = top.num_sites();
        let q = self.obs_qubit.unwrap_or_else(|| self.middle_qubit());
        if q >= n {
            return Err(Error::Config(format!("observable qubit {q} outside the {n}-site grid")));
        }
        let prep = build_tfi_trotter(&top, &TrotterSpec::uniform(&top, self.prep_layers, self.dt, self.h, self.j))?;
        let state = InitialState::trotter_evolved_zero(&prep, &[])?;
        let circuit = build_tfi_trotter(
            &top,
            &TrotterSpec::uniform(&top, self.hva_layers, self.dt, self.h, self.j).with_binding(Binding::Free),
        )?;
        let obs = ObservableSpec::single(PauliString::single(n, q, Letter::Z), 1.0)?;
        Ok(PatchProblem { circuit, obs, state })
    }
}

fn patch_draws(m: usize, r: f64, samples: usize, seed: u64, stream: u64) -> Result<Vec<Vec<f64>>> {
    let dist = PatchDistribution::centered(m, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok((0..samples).map(|_| dist.sample(&mut rng)).collect())
}

fn exact_values(p: &PatchProblem, alphas: &[Vec<f64>]) -> Result<Vec<f64>> {
    alphas
        .par_iter()
        .map(|a| crate::state::exact_expectation(&p.circuit, a, &p.obs, &p.state))
        .collect()
}

fn symbolic(p: &PatchProblem, kappa: u32, partitions: usize) -> Result<PropagatedObservable> {
    backpropagate_partitioned(
        &p.circuit,
        &p.obs,
        &TruncationPolicy::kappa(kappa),
        Mode::Symbolic,
        None,
        partitions,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub r: f64,
    pub kappa: u32,
    pub n_paulis: usize,
    pub rmse: f64,
    /// Square root of the mean-square truncation bound where its hypothesis
    /// holds.
    pub bound: Option<f64>,
}

impl CsvRow for RmseRow {
    const COMMAND: &'static str = "rmse-sweep";
    const HEADER: &'static str = "r,kappa,n_paulis,rmse,bound";
    fn write_fields(&self, out: &mut String) {
        write!(out, "{},{},{},{},{}", self.r, self.kappa, self.n_paulis, self.rmse, opt(self.bound)).unwrap();
    }
}

/// Truncation RMSE over `samples` uniform draws per `r`, for every `kappa`.
/// Draws for a given `r` are shared across `kappa`.
pub fn rmse_sweep(
    p: &PatchProblem,
    rs: &[f64],
    kappas: &[u32],
    samples: usize,
    seed: u64,
    partitions: usize,
) -> Result<Vec<RmseRow>> {
    let m = p.circuit.num_params();
    let mut draws = Vec::with_capacity(rs.len());
    for (i, &r) in rs.iter().enumerate() {
        let alphas = patch_draws(m, r, samples, seed, i as u64)?;
        let exact = exact_values(p, &alphas)?;
        draws.push((alphas, exact));
    }
    let a1 = p.obs.norm1();
    let mut rows = Vec::new();
    for &kappa in kappas {
        let po = symbolic(p, kappa, partitions)?;
        let ev = SurrogateEvaluator::new(&po, &p.state)?;
        for (&r, (alphas, exact)) in rs.iter().zip(&draws) {
            let sq: f64 = alphas
                .par_iter()
                .zip(exact)
                .map(|(a, e)| ev.evaluate(a).map(|v| (v - e) * (v - e)))
                .collect::<Result<Vec<f64>>>()?
                .iter()
                .sum();
            let bound = bound_mse_truncation(po.num_param_rotations(), r, kappa, a1)
                .ok()
                .map(|b| b.value.sqrt());
            rows.push(RmseRow {
                r,
                kappa,
                n_paulis: po.num_paulis(),
                rmse: (sq / alphas.len().max(1) as f64).sqrt(),
                bound,
            });
        }
    }
    Ok(rows)
}

/// How the initial state is measured in a shot comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotMethod {
    Direct(Strategy),
    Shadows,
}

impl ShotMethod {
    pub fn name(self) -> &'static str {
        match self {
            ShotMethod::Direct(s) => s.name(),
            ShotMethod::Shadows => "shadows",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        if s == "shadows" {
            Ok(ShotMethod::Shadows)
        } else {
            Strategy::from_name(s).map(ShotMethod::Direct)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotRow {
    pub method: String,
    pub r: f64,
    pub shots: usize,
    pub rmse: f64,
    /// RMSE with exact overlaps (infinite shots).
    pub truncation_rmse: f64,
}

impl CsvRow for ShotRow {
    const COMMAND: &'static str = "shot-compare";
    const HEADER: &'static str = "method,r,shots,rmse,truncation_rmse";
    fn write_fields(&self, out: &mut String) {
        write!(out, "{},{},{},{},{}", self.method, self.r, self.shots, self.rmse, self.truncation_rmse).unwrap();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotCompareConfig {
    pub kappa: u32,
    pub r: f64,
    pub shots: Vec<usize>,
    pub repeats: usize,
    /// Patch points at which each record set is reweighted.
    pub draws: usize,
    pub seed: u64,
    pub partitions: usize,
}

fn stream_id(method: usize, shot_idx: usize, rep: usize) -> u64 {
    ((method as u64) << 48) | ((shot_idx as u64) << 32) | rep as u64
}

/// Total RMSE (truncation plus shot noise) against the exact landscape for
/// each method and shot budget. One record set per repeat is reused across
/// all patch points.
pub fn shot_compare(p: &PatchProblem, methods: &[ShotMethod], cfg: &ShotCompareConfig) -> Result<Vec<ShotRow>> {
    let m = p.circuit.num_params();
    let po = symbolic(p, cfg.kappa, cfg.partitions)?;
    let alphas = patch_draws(m, cfg.r, cfg.draws, cfg.seed, u64::MAX)?;
    let exact = exact_values(p, &alphas)?;
    let coeffs: Vec<Vec<f64>> = alphas.iter().map(|a| po.coeffs_at(a)).collect::<Result<_>>()?;
    let overlaps: Vec<f64> = po
        .terms()
        .par_iter()
        .map(|t| overlap(&p.state, &t.pauli))
        .collect::<Result<_>>()?;
    let trunc_sq: f64 = coeffs
        .iter()
        .zip(&exact)
        .map(|(c, e)| {
            let v: f64 = c.iter().zip(&overlaps).map(|(c, d)| c * d).sum();
            (v - e) * (v - e)
        })
        .sum();
    let truncation_rmse = (trunc_sq / alphas.len() as f64).sqrt();
    let denom = (cfg.repeats * alphas.len()) as f64;

    let mut rows = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        let plan_info = match method {
            ShotMethod::Direct(s) => {
                let plan = make_allocation(s, AllocationInput::Surrogate { po: &po, r: cfg.r }, 0)?;
                let term_idx: Vec<usize> = plan
                    .entries()
                    .iter()
                    .map(|(q, _)| po.terms().binary_search_by(|t| t.pauli.cmp(q)).expect("plan Pauli is a term"))
                    .collect();
                let truths = plan_truths(&plan, &p.state)?;
                Some((plan, term_idx, truths))
            }
            ShotMethod::Shadows => None,
        };
        for (si, &n_s) in cfg.shots.iter().enumerate() {
            let sq: Vec<f64> = (0..cfg.repeats)
                .into_par_iter()
                .map(|rep| -> Result<f64> {
                    let stream = stream_id(mi, si, rep);
                    let estimates: Vec<f64> = match &plan_info {
                        Some((plan, term_idx, truths)) => {
                            let plan = plan.clone().with_shots(n_s);
                            let recs = simulate_direct(&plan, truths, cfg.seed, stream)?;
                            let summary = RecordSummary::new(&plan, &recs)?;
                            coeffs
                                .iter()
                                .map(|c| {
                                    let aligned: Vec<f64> = term_idx.iter().map(|&i| c[i]).collect();
                                    summary.estimate_aligned(&plan, &aligned)
                                })
                                .collect()
                        }
                        None => {
                            let recs = simulate_shadows(&p.state, n_s, cfg.seed, stream)?;
                            let o: Vec<f64> = po.terms().iter().map(|t| shadow_estimate(&recs, &t.pauli)).collect();
                            coeffs
                                .iter()
                                .map(|c| c.iter().zip(&o).map(|(c, o)| c * o).sum())
                                .collect()
                        }
                    };
                    Ok(estimates.iter().zip(&exact).map(|(v, e)| (v - e) * (v - e)).sum())
                })
                .collect::<Result<_>>()?;
            rows.push(ShotRow {
                method: method.name().into(),
                r: cfg.r,
                shots: n_s,
                rmse: (sq.iter().sum::<f64>() / denom).sqrt(),
                truncation_rmse,
            });
        }
    }
    Ok(rows)
}

/// Annealed transverse-field Ising scan: `n_def = 1 - <Z_i Z_j>` after a ramp
/// from the transverse field into the coupling over time `t_f`, starting in
/// `|+>^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KzConfig {
    pub topology: String,
    pub dt: f64,
    pub tfs: Vec<f64>,
    pub ramps: Vec<RampKind>,
    pub edge: (usize, usize),
    pub kappa: Option<u32>,
    pub max_weight: Option<usize>,
    pub h: f64,
    pub j: f64,
    pub sample: RampSample,
    pub partitions: usize,
}

impl KzConfig {
    /// 31-site chain, linear ramp, untruncated.
    pub fn desk() -> Self {
        KzConfig {
            topology: "chain31".into(),
            dt: 0.3,
            tfs: vec![3.0, 6.0, 12.0, 24.0],
            ramps: vec![RampKind::Linear],
            edge: (15, 16),
            kappa: None,
            max_weight: None,
            h: 1.0,
            j: 1.0,
            sample: RampSample::End,
            partitions: 1,
        }
    }

    /// 127-site heavy-hex lattice, 50 layers at `t_f = 15`, `kappa = 21`,
    /// weight cap 5.
    pub fn heavyhex() -> Self {
        KzConfig {
            topology: "heavyhex127".into(),
            tfs: vec![15.0],
            edge: (62, 63),
            kappa: Some(21),
            max_weight: Some(5),
            ..KzConfig::desk()
        }
    }

    pub fn layers_for(&self, tf: f64) -> usize {
        ((tf / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KzRow {
    pub ramp: String,
    pub tf: f64,
    pub layers: usize,
    pub n_def: f64,
    pub retained_norm: f64,
    pub n_paulis: usize,
}

impl CsvRow for KzRow {
    const COMMAND: &'static str = "kz-scan";
    const HEADER: &'static str = "ramp,t_f,layers,n_def,retained_norm,n_paulis";
    fn write_fields(&self, out: &mut String) {
        write!(
            out,
            "{},{},{},{},{},{}",
            self.ramp, self.tf, self.layers, self.n_def, self.retained_norm, self.n_paulis
        )
        .unwrap();
    }
}

/// Fixed-angle annealing circuit, `Z_i Z_j` observable and `|+>^n` state for
/// one `(ramp, t_f)` point.
pub fn kz_problem(cfg: &KzConfig, ramp: RampKind, tf: f64) -> Result<PatchProblem> {
    let top = Topology::by_name(&cfg.topology)?;
    let (i, j) = cfg.edge;
    if !top.has_edge(i, j) {
        return Err(Error::Config(format!("({i}, {j}) is not an edge of {}", cfg.topology)));
    }
    let mut spec = TrotterSpec::uniform(&top, cfg.layers_for(tf), cfg.dt, cfg.h, cfg.j).with_ramp(ramp, tf);
    if let Some(r) = spec.ramp.as_mut() {
        r.sample = cfg.sample;
    }
    Ok(PatchProblem {
        circuit: build_tfi_trotter(&top, &spec)?,
        obs: ObservableSpec::zz(top.num_sites(), i, j)?,
        state: InitialState::AllPlus(top.num_sites()),
    })
}

/// Builds the fixed-angle surrogate for one `(ramp, t_f)` point.
pub fn kz_surrogate(cfg: &KzConfig, ramp: RampKind, tf: f64) -> Result<PropagatedObservable> {
    let p = kz_problem(cfg, ramp, tf)?;
    let mut policy = TruncationPolicy::exact();
    policy.kappa = cfg.kappa;
    policy.max_weight = cfg.max_weight;
    backpropagate_partitioned(&p.circuit, &p.obs, &policy, Mode::Numeric, Some(&[]), cfg.partitions)
}

pub fn kz_scan(cfg: &KzConfig) -> Result<Vec<KzRow>> {
    let mut rows = Vec::new();
    for &ramp in &cfg.ramps {
        for &tf in &cfg.tfs {
            let po = kz_surrogate(cfg, ramp, tf)?;
            let zz = crate::surrogate::numeric_value(&po, &InitialState::AllPlus(po.num_qubits()))?;
            rows.push(KzRow {
                ramp: ramp.name().into(),
                tf,
                layers: cfg.layers_for(tf),
                n_def: 1.0 - zz,
                retained_norm: po.retained_norm(&[])?,
                n_paulis: po.num_paulis(),
            });
        }
    }
    Ok(rows)
}

/// Error of a Taylor surrogate scanned over its patch, next to the bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorReport {
    pub m: usize,
    pub order: u32,
    pub r: f64,
    pub gamma: f64,
    pub op_norm: f64,
    pub scan_points: usize,
    pub max_error: f64,
    pub rms_error: f64,
    pub worst_bound: f64,
    pub mse_bound: f64,
    pub ledger: TaylorLedger,
}

/// Builds the surrogate with `oracle` and scans `scan_points` Sobol points of
/// the patch, comparing against `exact`.
#[allow(clippy::too_many_arguments)]
pub fn taylor_report(
    oracle: &dyn LossOracle,
    exact: &dyn LossOracle,
    center: &[f64],
    order: u32,
    opts: TaylorOptions,
    r: f64,
    scan_points: u32,
    seed: u32,
) -> Result<(crate::taylor::TaylorSurrogate, TaylorReport)> {
    let ts = build_taylor(oracle, center, order, opts)?;
    let dist = PatchDistribution::new(center.to_vec(), r)?;
    let errs: Vec<f64> = (0..scan_points)
        .into_par_iter()
        .map(|i| {
            let a = dist.sobol_point(i, seed);
            Ok((eval_taylor(&ts, &a)? - exact.evaluate(&a)?).abs())
        })
        .collect::<Result<_>>()?;
    let m = center.len();
    let gamma = exact.gamma();
    let op_norm = exact.op_norm();
    let report = TaylorReport {
        m,
        order,
        r,
        gamma,
        op_norm,
        scan_points: scan_points as usize,
        max_error: errs.iter().cloned().fold(0.0, f64::max),
        rms_error: (errs.iter().map(|e| e * e).sum::<f64>() / errs.len().max(1) as f64).sqrt(),
        worst_bound: taylor_bounds(TaylorBoundKind::Worst, m, r, order, gamma, op_norm)?.value,
        mse_bound: taylor_bounds(TaylorBoundKind::Mse, m, r, order, gamma, op_norm)?.value,
        ledger: ts.ledger.clone(),
    };
    Ok((ts, report))
}
