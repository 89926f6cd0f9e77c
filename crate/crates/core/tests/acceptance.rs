//! Acceptance suite: one PASS/FAIL line per criterion. Runs with a custom
//! harness so every criterion reports even when an earlier one fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use patchsurr::circuit::{random_circuit, RandomCircuitConfig};
use patchsurr::experiments::{
    csv_string, kz_scan, kz_surrogate, loglog_slope, rmse_sweep, shot_compare, Fig2Config, KzConfig,
    ShotCompareConfig, ShotMethod,
};
use patchsurr::measurement::{
    make_allocation, plan_truths, shadow_samples, simulate_direct, simulate_shadows, AllocationInput,
    RecordSummary, Strategy,
};
use patchsurr::propagation::{backpropagate, Mode, PropagatedObservable, TruncationPolicy};
use patchsurr::state::{exact_expectation, Statevector};
use patchsurr::surrogate::{
    bound_mse_truncation, bound_worst_truncation, numeric_value, PatchDistribution, SurrogateEvaluator,
};
use patchsurr::taylor::{
    build_taylor, call_bound, derivative_growth_gamma, eval_taylor, shift_derivative, taylor_bounds, CircuitOracle,
    DerivativeRecipe, LossOracle, TaylorBoundKind, TaylorOptions,
};
use patchsurr::topology::Topology;
use patchsurr::trotter::{build_tfi_trotter, Binding, RampKind, TrotterSpec};
use patchsurr::{Circuit, InitialState, Letter, ObservableSpec, PauliString};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5eed_0001;

// 1
const EXACT_TOL: f64 = 1e-10;
const EXACT_CIRCUITS: usize = 30;
const EXACT_DRAWS: usize = 50;
// 2, 3
const BOUND_CIRCUITS: usize = 20;
const MSE_DRAWS: usize = 400;
const SOBOL_POINTS: u32 = 10_000;
// 5
const FIG2_RMSE_MAX: f64 = 1e-5;
const FIG2_DRAWS: usize = 200;
const FIG2_PAULIS: (usize, usize) = (30, 1000);
// 6
const SHOT_SLOPE: (f64, f64) = (-0.6, -0.4);
const SHOT_REPEATS: usize = 50;
// 7
const ALLOCATION_RATIO: f64 = 10.0;
const ALLOCATION_SHOTS: usize = 10_000;
const ALLOCATION_REPEATS: usize = 1000;
// 8
const SHADOW_SHOTS: usize = 100_000;
const SHADOW_SIGMAS: f64 = 4.0;
// 9
const KZ_SLOPE: (f64, f64) = (-0.65, -0.35);
// 10
const HH_BUILD_SECS: f64 = 300.0;
const HH_RETAINED_MIN: f64 = 0.8;
const HH_EVAL_SECS: f64 = 5.0;
// 11
const SHIFT_VS_FD_TOL: f64 = 1e-6;
const FD_STEP: f64 = 1e-2;
const TAYLOR_SCAN: u32 = 4096;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> Statevector {
    let amps: Vec<Complex64> = (0..1usize << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Statevector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

fn random_observable(n: usize, terms: usize, rng: &mut ChaCha8Rng) -> ObservableSpec {
    let mut out: Vec<(PauliString, f64)> = Vec::new();
    while out.len() < terms {
        let w = rng.gen_range(1..=n.min(3));
        let mut qs: Vec<usize> = Vec::new();
        while qs.len() < w {
            let q = rng.gen_range(0..n);
            if !qs.contains(&q) {
                qs.push(q);
            }
        }
        let letters: Vec<Letter> = (0..w).map(|_| [Letter::X, Letter::Y, Letter::Z][rng.gen_range(0..3)]).collect();
        let p = PauliString::from_local(n, &letters, &qs).unwrap();
        if out.iter().all(|(q, _)| *q != p) {
            out.push((p, rng.gen_range(-1.0..1.0)));
        }
    }
    ObservableSpec::new(n, out).unwrap()
}

fn random_initial_state(n: usize, rng: &mut ChaCha8Rng) -> InitialState {
    match rng.gen_range(0..3) {
        0 => InitialState::AllZero(n),
        1 => InitialState::AllPlus(n),
        _ => InitialState::dense(random_state(n, rng)).unwrap(),
    }
}

fn crit_oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut shared = 0;
    for _ in 0..EXACT_CIRCUITS {
        let n = rng.gen_range(2..=10);
        let cfg = RandomCircuitConfig {
            n,
            rotations: rng.gen_range(6..=20),
            cliffords_per_rotation: 1.0,
            max_generator_weight: 3,
            share_prob: 0.3,
        };
        let c = random_circuit(&cfg, &mut rng);
        if c.param_uses().iter().any(|&u| u > 1) {
            shared += 1;
        }
        let obs = random_observable(n, rng.gen_range(1..=3), &mut rng);
        let state = random_initial_state(n, &mut rng);
        for _ in 0..EXACT_DRAWS {
            let alpha: Vec<f64> = (0..c.num_params()).map(|_| rng.gen_range(-3.2..3.2)).collect();
            let po = backpropagate(&c, &obs, &TruncationPolicy::exact(), Mode::Numeric, Some(&alpha)).unwrap();
            let v = numeric_value(&po, &state).unwrap();
            let e = exact_expectation(&c, &alpha, &obs, &state).unwrap();
            worst = worst.max((v - e).abs());
        }
    }
    verdict(
        worst <= EXACT_TOL,
        format!("max |numeric - dense| = {worst:.2e} (tol {EXACT_TOL:.0e}); {shared}/{EXACT_CIRCUITS} circuits share parameters"),
    )
}

struct BoundCase {
    circuit: Circuit,
    obs: ObservableSpec,
    state: InitialState,
}

fn bound_cases() -> Vec<BoundCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    (0..BOUND_CIRCUITS)
        .map(|_| {
            let n = rng.gen_range(3..=6);
            let cfg = RandomCircuitConfig {
                n,
                rotations: rng.gen_range(6..=12),
                cliffords_per_rotation: 1.0,
                max_generator_weight: 3,
                share_prob: 0.0,
            };
            let circuit = random_circuit(&cfg, &mut rng);
            let obs = random_observable(n, rng.gen_range(1..=3), &mut rng);
            let state = random_initial_state(n, &mut rng);
            BoundCase { circuit, obs, state }
        })
        .collect()
}

fn surrogate(case: &BoundCase, kappa: u32) -> (PropagatedObservable, SurrogateEvaluator) {
    let po = backpropagate(&case.circuit, &case.obs, &TruncationPolicy::kappa(kappa), Mode::Symbolic, None).unwrap();
    let ev = SurrogateEvaluator::new(&po, &case.state).unwrap();
    (po, ev)
}

fn crit_mse_bound() -> Verdict {
    let cases = bound_cases();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let (mut checked, mut violations, mut skipped) = (0, 0, 0);
    let mut tightest = 0.0f64;
    for case in &cases {
        let m = case.circuit.num_param_rotations();
        for kappa in 1..=3u32 {
            let (_, ev) = surrogate(case, kappa);
            for r in [0.05, 0.1] {
                if r * r * m as f64 > 3.0 * kappa as f64 {
                    skipped += 1;
                    continue;
                }
                let dist = PatchDistribution::centered(case.circuit.num_params(), r).unwrap();
                let mse = (0..MSE_DRAWS)
                    .map(|_| {
                        let a = dist.sample(&mut rng);
                        let d = ev.evaluate(&a).unwrap() - exact_expectation(&case.circuit, &a, &case.obs, &case.state).unwrap();
                        d * d
                    })
                    .sum::<f64>()
                    / MSE_DRAWS as f64;
                let bound = bound_mse_truncation(m, r, kappa, case.obs.norm1()).unwrap().value;
                checked += 1;
                tightest = tightest.max(mse / bound);
                if mse > bound {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        violations == 0,
        format!("{checked} cases, {violations} violations, {skipped} outside hypothesis; max mse/bound = {tightest:.2e}"),
    )
}

fn crit_worst_bound() -> Verdict {
    let cases = bound_cases();
    let (mut checked, mut violations) = (0, 0);
    let mut tightest = 0.0f64;
    for case in &cases {
        let m = case.circuit.num_param_rotations();
        for kappa in 1..=3u32 {
            let (_, ev) = surrogate(case, kappa);
            for frac in [1.0, 0.5] {
                let r = frac * kappa as f64 / m as f64;
                let dist = PatchDistribution::centered(case.circuit.num_params(), r).unwrap();
                let max_err = (0..SOBOL_POINTS)
                    .map(|i| {
                        let a = dist.sobol_point(i, SEED as u32);
                        (ev.evaluate(&a).unwrap() - exact_expectation(&case.circuit, &a, &case.obs, &case.state).unwrap())
                            .abs()
                    })
                    .fold(0.0, f64::max);
                let bound = bound_worst_truncation(m, r, kappa, case.obs.norm1()).unwrap().value;
                checked += 1;
                tightest = tightest.max(max_err / bound);
                if max_err > bound {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        violations == 0,
        format!("{checked} cases x {SOBOL_POINTS} Sobol points, {violations} violations; max err/bound = {tightest:.2e}"),
    )
}

fn crit_correlated_bound() -> Verdict {
    let top = Topology::chain(6).unwrap();
    let circuit = build_tfi_trotter(&top, &TrotterSpec::uniform(&top, 3, 0.1, 1.0, 1.0).with_binding(Binding::Shared)).unwrap();
    let obs = ObservableSpec::zz(6, 2, 3).unwrap();
    let state = InitialState::AllZero(6);
    let m = circuit.num_param_rotations();
    let case = BoundCase { circuit, obs, state };
    let (mut checked, mut violations) = (0, 0);
    let mut tightest = 0.0f64;
    let nodes = 4001;
    for kappa in 1..=3u32 {
        let (_, ev) = surrogate(&case, kappa);
        for frac in [1.0, 0.5, 0.25] {
            let r = frac * kappa as f64 / m as f64;
            // midpoint rule over [-r, r]
            let mean = (0..nodes)
                .map(|i| {
                    let a = [-r + (i as f64 + 0.5) * 2.0 * r / nodes as f64];
                    (ev.evaluate(&a).unwrap() - exact_expectation(&case.circuit, &a, &case.obs, &case.state).unwrap()).abs()
                })
                .sum::<f64>()
                / nodes as f64;
            let bound = bound_worst_truncation(m, r, kappa, case.obs.norm1()).unwrap().value / (kappa + 1) as f64;
            checked += 1;
            tightest = tightest.max(mean / bound);
            if mean > bound {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("m = {m} gates on one angle, {checked} cases, {violations} violations; max mean/bound = {tightest:.2e}"),
    )
}

fn crit_fig2_anchor() -> Verdict {
    let p = Fig2Config::full().build().unwrap();
    let rows = rmse_sweep(&p, &[0.1], &[6], FIG2_DRAWS, SEED, 1).unwrap();
    let row = &rows[0];
    let ok = row.rmse < FIG2_RMSE_MAX && (FIG2_PAULIS.0..=FIG2_PAULIS.1).contains(&row.n_paulis);
    verdict(
        ok,
        format!(
            "16 qubits, m = {}, r = 0.1, kappa = 6: rmse = {:.2e} (< {FIG2_RMSE_MAX:.0e}), {} Paulis (accept {}-{})",
            p.circuit.num_params(),
            row.rmse,
            row.n_paulis,
            FIG2_PAULIS.0,
            FIG2_PAULIS.1
        ),
    )
}

fn crit_shot_slope() -> Verdict {
    let p = Fig2Config::full().build().unwrap();
    let shots = vec![1_000, 10_000, 100_000, 1_000_000];
    let cfg = ShotCompareConfig {
        kappa: 6,
        r: 0.0,
        shots: shots.clone(),
        repeats: SHOT_REPEATS,
        draws: 1,
        seed: SEED,
        partitions: 1,
    };
    let rows = shot_compare(&p, &[ShotMethod::Direct(Strategy::Eff1NormAvg)], &cfg).unwrap();
    let xs: Vec<f64> = shots.iter().map(|&s| s as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
    let slope = loglog_slope(&xs, &ys);
    verdict(
        (SHOT_SLOPE.0..=SHOT_SLOPE.1).contains(&slope),
        format!(
            "slope {slope:.3} (accept {} to {}); rmse {}",
            SHOT_SLOPE.0,
            SHOT_SLOPE.1,
            ys.iter().map(|y| format!("{y:.2e}")).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn crit_allocation_ordering() -> Verdict {
    let n = 4;
    let tau = 0.1;
    let mut terms = vec![(PauliString::from_letters("ZZZZ").unwrap(), 1.0)];
    for bits in 0..16u32 {
        let s: String = (0..n).map(|q| if (bits >> q) & 1 == 1 { 'Y' } else { 'X' }).collect();
        terms.push((PauliString::from_letters(&s).unwrap(), tau / 16.0));
    }
    let obs = ObservableSpec::new(n, terms).unwrap();
    let gates = (0..n)
        .map(|q| patchsurr::Gate::r1(n, q, Letter::Z, patchsurr::circuit::ParamRef::Free(q)))
        .collect();
    let circuit = Circuit::new(n, n, gates).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    let state = InitialState::dense(random_state(n, &mut rng)).unwrap();
    let r = 0.1;
    let po = backpropagate(&circuit, &obs, &TruncationPolicy::kappa(6), Mode::Symbolic, None).unwrap();
    let dist = PatchDistribution::centered(n, r).unwrap();
    let alphas: Vec<Vec<f64>> = (0..5).map(|_| dist.sample(&mut rng)).collect();
    let ev = SurrogateEvaluator::new(&po, &state).unwrap();
    let target: Vec<f64> = alphas.iter().map(|a| ev.evaluate(a).unwrap()).collect();
    let mse = |strategy: Strategy, stream_base: u64| -> f64 {
        let plan = make_allocation(strategy, AllocationInput::Surrogate { po: &po, r }, ALLOCATION_SHOTS).unwrap();
        let truths = plan_truths(&plan, &state).unwrap();
        let idx: Vec<usize> = plan
            .entries()
            .iter()
            .map(|(p, _)| po.terms().iter().position(|t| t.pauli == *p).unwrap())
            .collect();
        let coeffs: Vec<Vec<f64>> = alphas
            .iter()
            .map(|a| {
                let c = po.coeffs_at(a).unwrap();
                idx.iter().map(|&i| c[i]).collect()
            })
            .collect();
        let mut total = 0.0;
        for rep in 0..ALLOCATION_REPEATS {
            let recs = simulate_direct(&plan, &truths, SEED, stream_base + rep as u64).unwrap();
            let s = RecordSummary::new(&plan, &recs).unwrap();
            for (c, t) in coeffs.iter().zip(&target) {
                let d = s.estimate_aligned(&plan, c) - t;
                total += d * d;
            }
        }
        total / (ALLOCATION_REPEATS * alphas.len()) as f64
    };
    let uniform = mse(Strategy::Uniform, 0);
    let eff = mse(Strategy::Eff1NormAvg, 1 << 32);
    let ratio = uniform / eff;
    verdict(
        ratio >= ALLOCATION_RATIO,
        format!("{} surrogate Paulis; mse uniform {uniform:.3e}, eff1norm-avg {eff:.3e}, ratio {ratio:.1} (need >= {ALLOCATION_RATIO})", po.num_paulis()),
    )
}

fn crit_shadows() -> Verdict {
    let n = 4;
    let cases: [(InitialState, &[&str]); 2] = [
        (InitialState::AllZero(n), &["ZIII", "ZZII", "ZZZI", "ZZZZ", "XIII", "XZII", "YXZI", "XYZX"]),
        (InitialState::AllPlus(n), &["IXII", "XXII", "XXXI", "XXXX", "IZII", "ZXII", "XYXI", "YXXZ"]),
    ];
    let mut failures = Vec::new();
    let mut raw_var_exceed = 0;
    for (si, (state, paulis)) in cases.iter().enumerate() {
        let recs = simulate_shadows(state, SHADOW_SHOTS, SEED, si as u64).unwrap();
        for s in paulis.iter() {
            let p = PauliString::from_letters(s).unwrap();
            let k = p.weight() as i32;
            let truth = patchsurr::overlap(state, &p).unwrap();
            let xs = shadow_samples(&recs, &p);
            let nf = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / nf;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (nf - 1.0);
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
            let var_se = ((m4 - var * var) / nf).max(0.0).sqrt();
            let cap = 3f64.powi(k);
            if (mean - truth).abs() > SHADOW_SIGMAS * (var / nf).sqrt() {
                failures.push(format!("{s}: mean {mean:.4} vs {truth}"));
            }
            if var > cap {
                raw_var_exceed += 1;
            }
            if var > cap + SHADOW_SIGMAS * var_se {
                failures.push(format!("{s}: variance {var:.3} > 3^{k}"));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "16 Paulis, k <= 4, N = {SHADOW_SHOTS}; {} failures {:?}; {raw_var_exceed} raw variances above 3^k within sampling error",
            failures.len(),
            failures
        ),
    )
}

fn crit_kz_scaling() -> Verdict {
    let mut cfg = KzConfig::desk();
    cfg.ramps = RampKind::ALL.to_vec();
    let rows = kz_scan(&cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for ramp in RampKind::ALL {
        let sel: Vec<_> = rows.iter().filter(|r| r.ramp == ramp.name()).collect();
        let xs: Vec<f64> = sel.iter().map(|r| r.tf).collect();
        let ys: Vec<f64> = sel.iter().map(|r| r.n_def).collect();
        let slope = loglog_slope(&xs, &ys);
        ok &= (KZ_SLOPE.0..=KZ_SLOPE.1).contains(&slope);
        parts.push(format!("{} {slope:.3}", ramp.name()));
    }
    verdict(
        ok,
        format!("chain31, dt 0.3, t_f 3/6/12/24: slopes {} (accept {} to {})", parts.join(", "), KZ_SLOPE.0, KZ_SLOPE.1),
    )
}

fn crit_heavyhex_smoke() -> Verdict {
    let cfg = KzConfig::heavyhex();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for ramp in RampKind::ALL {
        let t = Instant::now();
        let po = pool.install(|| kz_surrogate(&cfg, ramp, 15.0)).unwrap();
        let build = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let zz = pool.install(|| numeric_value(&po, &InitialState::AllPlus(127))).unwrap();
        let eval = t.elapsed().as_secs_f64();
        let retained = po.retained_norm(&[]).unwrap();
        if ramp == RampKind::Linear {
            ok = build < HH_BUILD_SECS && retained >= HH_RETAINED_MIN && eval < HH_EVAL_SECS;
        }
        parts.push(format!(
            "{}: build {build:.1}s, eval {eval:.3}s, retained {retained:.3}, n_def {:.3}, {} Paulis",
            ramp.name(),
            1.0 - zz,
            po.num_paulis()
        ));
    }
    verdict(
        ok,
        format!(
            "50 layers, kappa 21, W 5, 1 thread (gate on linear: build < {HH_BUILD_SECS}s, retained >= {HH_RETAINED_MIN}, eval < {HH_EVAL_SECS}s); {}",
            parts.join("; ")
        ),
    )
}

/// Iterated central differences on `f` around `x` for the sorted index list
/// `idx`, with Richardson extrapolation over `h` and `h / 2`.
fn richardson(f: &dyn Fn(&[f64]) -> f64, x: &[f64], idx: &[usize], h: f64) -> f64 {
    fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], idx: &[usize], h: f64) -> f64 {
        match idx.split_first() {
            None => f(x),
            Some((&l, rest)) => {
                let mut p = x.to_vec();
                p[l] += h;
                let mut q = x.to_vec();
                q[l] -= h;
                (central(f, &p, rest, h) - central(f, &q, rest, h)) / (2.0 * h)
            }
        }
    }
    let d1 = central(f, x, idx, h);
    let d2 = central(f, x, idx, h / 2.0);
    (4.0 * d2 - d1) / 3.0
}

fn taylor_circuit(m: usize, seed: u64) -> CircuitOracle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4;
    let cfg = RandomCircuitConfig {
        n,
        rotations: m,
        cliffords_per_rotation: 1.0,
        max_generator_weight: 2,
        share_prob: 0.0,
    };
    let c = random_circuit(&cfg, &mut rng);
    let obs = random_observable(n, 2, &mut rng);
    let state = InitialState::dense(random_state(n, &mut rng)).unwrap();
    CircuitOracle::new(c, obs, state).unwrap()
}

fn crit_taylor() -> Verdict {
    let mut worst_fd = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 11);
    for s in 0..5u64 {
        let o = taylor_circuit(6, SEED + s);
        let center: Vec<f64> = (0..o.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = |a: &[f64]| o.evaluate(a).unwrap();
        for idx in [vec![0], vec![2], vec![1, 1], vec![0, 3], vec![0, 0, 0], vec![1, 2, 4], vec![3, 3, 5]] {
            let mut k: Vec<(u32, u32)> = Vec::new();
            for &l in &idx {
                match k.last_mut() {
                    Some((q, c)) if *q as usize == l => *c += 1,
                    _ => k.push((l as u32, 1)),
                }
            }
            let shift = shift_derivative(&o, &center, &k, DerivativeRecipe::ShiftRule).unwrap();
            worst_fd = worst_fd.max((shift - richardson(&f, &center, &idx, FD_STEP)).abs());
        }
    }

    let mut worst_ratio = 0.0f64;
    let mut violations = 0;
    for s in 0..5u64 {
        let m = 3 + s as usize;
        let o = taylor_circuit(m, SEED + 100 + s);
        let gamma = derivative_growth_gamma(o.circuit());
        let r = 0.5 / m as f64;
        let center = vec![0.0; m];
        let ts = build_taylor(&o, &center, 3, TaylorOptions::default()).unwrap();
        let dist = PatchDistribution::new(center, r).unwrap();
        let max_err = (0..TAYLOR_SCAN)
            .map(|i| {
                let a = dist.sobol_point(i, 7);
                (eval_taylor(&ts, &a).unwrap() - o.evaluate(&a).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        let bound = taylor_bounds(TaylorBoundKind::Worst, m, r, 3, gamma, o.op_norm()).unwrap().value;
        worst_ratio = worst_ratio.max(max_err / bound);
        if max_err > bound {
            violations += 1;
        }
    }

    let o = taylor_circuit(10, SEED + 200);
    let ts = build_taylor(&o, &[0.05; 10], 2, TaylorOptions::default()).unwrap();
    let l = &ts.ledger;
    let first_order_bound = call_bound(10, 2, 2);
    let ledger_ok = l.derivatives == 66
        && l.requested_evaluations as f64 <= l.call_bound
        && l.requested_evaluations as f64 <= first_order_bound;

    verdict(
        worst_fd <= SHIFT_VS_FD_TOL && violations == 0 && ledger_ok,
        format!(
            "shift vs Richardson max diff {worst_fd:.2e} (tol {SHIFT_VS_FD_TOL:.0e}); scan {violations} violations, max err/bound {worst_ratio:.2e}; \
             m=10 kappa=2: {} derivatives, {} requested / {} unique calls <= {:.0} (N_d = 2^kappa) and {:.0} (N_d = 2)",
            l.derivatives, l.requested_evaluations, l.unique_evaluations, l.call_bound, first_order_bound
        ),
    )
}

fn crit_reproducibility(earlier: &[(u32, bool)]) -> Verdict {
    let props_ok = earlier.iter().filter(|(id, _)| (1..=4).contains(id)).all(|(_, p)| *p);
    let desk = Fig2Config {
        hva_layers: 1,
        ..Fig2Config::desk()
    }
    .build()
    .unwrap();
    let rmse = || csv_string(&rmse_sweep(&desk, &[0.0, 0.1], &[0, 2, 4], 20, SEED, 2).unwrap());
    let shots = || {
        let cfg = ShotCompareConfig {
            kappa: 4,
            r: 0.1,
            shots: vec![1000, 10_000],
            repeats: 5,
            draws: 5,
            seed: SEED,
            partitions: 2,
        };
        let methods = [ShotMethod::Direct(Strategy::Uniform), ShotMethod::Direct(Strategy::Eff1NormAvg), ShotMethod::Shadows];
        csv_string(&shot_compare(&desk, &methods, &cfg).unwrap())
    };
    let kz = || {
        let cfg = KzConfig {
            topology: "chain10".into(),
            edge: (4, 5),
            tfs: vec![1.5, 3.0],
            ..KzConfig::desk()
        };
        csv_string(&kz_scan(&cfg).unwrap())
    };
    let same = [rmse() == rmse(), shots() == shots(), kz() == kz()];
    verdict(
        props_ok && same.iter().all(|s| *s),
        format!("property criteria 1-4 green: {props_ok}; byte-identical reruns (rmse, shots, kz): {same:?}"),
    )
}

type Criterion = (u32, &'static str, bool, fn() -> Verdict);

fn main() -> ExitCode {
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [Criterion; 11] = [
        (1, "oracle equivalence", true, crit_oracle_equivalence),
        (2, "mean-square bound", true, crit_mse_bound),
        (3, "worst-case bound", true, crit_worst_bound),
        (4, "correlated-angle bound", true, crit_correlated_bound),
        (5, "16-qubit patch anchor", true, crit_fig2_anchor),
        (6, "shot-noise slope", true, crit_shot_slope),
        (7, "allocation ordering", true, crit_allocation_ordering),
        (8, "shadow bias and variance", true, crit_shadows),
        (9, "defect scaling", true, crit_kz_scaling),
        (10, "heavy-hex smoke (soft)", false, crit_heavyhex_smoke),
        (11, "taylor patch", true, crit_taylor),
    ];
    let mut results: Vec<(u32, bool)> = Vec::new();
    let mut gating_failures = 0;
    let mut report = |id: u32, name: &str, gating: bool, run: &dyn Fn() -> Verdict, results: &mut Vec<(u32, bool)>| {
        if filter.is_some_and(|f| f != id) {
            return;
        }
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let status = match (v.pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (soft, not gating)",
        };
        if !v.pass && gating {
            gating_failures += 1;
        }
        println!("criterion {id:>2} {name:<26} {status} [{:.1}s] {}", t.elapsed().as_secs_f64(), v.detail);
        results.push((id, v.pass));
    };
    for (id, name, gating, f) in criteria {
        report(id, name, gating, &f, &mut results);
    }
    let earlier = results.clone();
    report(12, "seeded reproducibility", true, &|| crit_reproducibility(&earlier), &mut results);
    if gating_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
