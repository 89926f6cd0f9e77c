use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchsurr::experiments::{
    kz_problem, kz_scan, loglog_slope, rmse_sweep, shot_compare, taylor_report, write_csv, Fig2Config, KzConfig, PatchProblem,
    RunManifest, ShotCompareConfig, ShotMethod,
};
use patchsurr::propagation::{backpropagate_partitioned, path_stats, Mode, TruncationPolicy};
use patchsurr::state::Statevector;
use patchsurr::taylor::{CircuitOracle, DerivativeRecipe, LossOracle, NoisyCircuitOracle, TaylorOptions};
use patchsurr::trotter::{RampKind, RampSample};
use patchsurr::{Circuit, Error, InitialState, ObservableSpec};

#[derive(Parser)]
#[command(name = "patchsurr", version, about = "Landscape-patch surrogates from truncated Pauli propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Back-propagate an observable and write the surrogate artifact.
    Build(BuildArgs),
    /// Truncation RMSE against the exact landscape.
    ///
    /// CSV columns: r, kappa, n_paulis, rmse, bound (square root of the
    /// mean-square bound, empty outside its hypothesis).
    RmseSweep(RmseArgs),
    /// Total RMSE with simulated measurements under several allocations.
    ///
    /// CSV columns: method, r, shots, rmse, truncation_rmse.
    ShotCompare(ShotArgs),
    /// Defect density after annealing ramps.
    ///
    /// CSV columns: ramp, t_f, layers, n_def, retained_norm, n_paulis.
    KzScan(KzArgs),
    /// Taylor surrogate around a center, with a scanned error report.
    Taylor(TaylorArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 16-qubit 4x4 grid HVA.
    Fig2,
    /// 9-qubit 3x3 grid HVA.
    Fig2Desk,
    /// 127-qubit heavy-hex annealing circuit, 50 fixed-angle layers, Z62 Z63.
    Heavyhex,
}

#[derive(Args)]
struct ProblemArgs {
    /// Built-in problem; overrides --circuit, --observable and --state.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Circuit JSON file.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Observable JSON file.
    #[arg(long)]
    observable: Option<PathBuf>,
    /// `zero`, `plus`, or a binary statevector file.
    #[arg(long, default_value = "zero")]
    state: String,
}

impl ProblemArgs {
    fn load(&self) -> patchsurr::Result<PatchProblem> {
        if let Some(p) = self.preset {
            return match p {
                Preset::Fig2 => Fig2Config::full().build(),
                Preset::Fig2Desk => Fig2Config::desk().build(),
                Preset::Heavyhex => kz_problem(&KzConfig::heavyhex(), RampKind::Linear, 15.0),
            };
        }
        let (Some(c), Some(o)) = (&self.circuit, &self.observable) else {
            return Err(Error::Config("give --preset or both --circuit and --observable".into()));
        };
        let circuit = Circuit::from_json(&std::fs::read_to_string(c)?)?;
        let obs = ObservableSpec::from_json(circuit.num_qubits(), &std::fs::read_to_string(o)?)?;
        let n = circuit.num_qubits();
        let state = match self.state.as_str() {
            "zero" => InitialState::AllZero(n),
            "plus" => InitialState::AllPlus(n),
            path => InitialState::dense(Statevector::load_binary(Path::new(path))?)?,
        };
        Ok(PatchProblem { circuit, obs, state })
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "preset": self.preset.map(|p| match p {
                Preset::Fig2 => "fig2",
                Preset::Fig2Desk => "fig2-desk",
                Preset::Heavyhex => "heavyhex",
            }),
            "circuit": self.circuit,
            "observable": self.observable,
            "state": self.state,
        })
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Sine-order truncation; omit for none.
    #[arg(long)]
    kappa: Option<u32>,
    /// Pauli-weight truncation.
    #[arg(long)]
    max_weight: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    coeff_floor: f64,
    /// Abort when the live term count exceeds this.
    #[arg(long)]
    path_cap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    /// Artifact path; `.gz` compresses.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RmseArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Patch half-widths.
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2")]
    r: Vec<f64>,
    #[arg(long, default_value_t = 6)]
    kappa_max: u32,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, env = "PATCHSURR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ShotArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Any of uniform, abs-coeff, eff1norm-avg, eff1norm-worst, shadows.
    #[arg(long, value_delimiter = ',', default_value = "uniform,abs-coeff,eff1norm-avg,eff1norm-worst")]
    strategy: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    shots: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    /// Patch points per record set.
    #[arg(long, default_value_t = 20)]
    draws: usize,
    #[arg(long, default_value_t = 6)]
    kappa: u32,
    #[arg(long, default_value_t = 0.1)]
    r: f64,
    #[arg(long, env = "PATCHSURR_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sample {
    End,
    Mid,
}

#[derive(Args)]
struct KzArgs {
    /// chainN, gridRxC or heavyhex127.
    #[arg(long, default_value = "chain31")]
    topology: String,
    #[arg(long, default_value_t = 0.3)]
    dt: f64,
    /// Any of linear, square, tanh.
    #[arg(long, value_delimiter = ',', default_value = "linear,square,tanh")]
    ramp: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "3,6,12,24")]
    tf: Vec<f64>,
    /// Edge for n_def = 1 - <Z_i Z_j>; defaults to the chain middle.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    obs_edge: Option<Vec<usize>>,
    #[arg(long)]
    kappa: Option<u32>,
    #[arg(long)]
    max_weight: Option<usize>,
    #[arg(long, value_enum, default_value = "end")]
    ramp_sample: Sample,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TaylorArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// JSON array with the center; zeros when omitted.
    #[arg(long)]
    center: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: u32,
    /// Shots per oracle call; exact oracle when omitted.
    #[arg(long)]
    shots: Option<usize>,
    /// Patch half-width for the error scan; defaults to 0.5 / m.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, default_value_t = 256)]
    scan: u32,
    /// Use central finite differences with this step instead of the shift rule.
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long, env = "PATCHSURR_SEED", default_value_t = 1)]
    seed: u64,
    /// Surrogate JSON path; the report goes to `<out>.report.json`.
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Overflow { .. } => 3,
        Error::OracleCap { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::RmseSweep(a) => cmd_rmse(a),
        Command::ShotCompare(a) => cmd_shots(a),
        Command::KzScan(a) => cmd_kz(a),
        Command::Taylor(a) => cmd_taylor(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn cmd_build(a: BuildArgs) -> patchsurr::Result<()> {
    let p = a.problem.load()?;
    let mut policy = TruncationPolicy::exact().with_coeff_floor(a.coeff_floor);
    policy.kappa = a.kappa;
    policy.max_weight = a.max_weight;
    policy.path_cap = a.path_cap;
    let (mode, alpha) = if p.circuit.num_params() == 0 {
        (Mode::Numeric, Some(&[][..]))
    } else {
        (Mode::Symbolic, None)
    };
    let t = Instant::now();
    let po = backpropagate_partitioned(&p.circuit, &p.obs, &policy, mode, alpha, a.partitions)?;
    let elapsed = t.elapsed().as_secs_f64();
    po.write_artifact(&a.out)?;
    let report = path_stats(&po);
    println!("{}", report.stats);
    println!(
        "paulis {} | paths {} | m {} | bound per Pauli {:.3e} (binomial) {:.3e} (exponential) | {elapsed:.3}s",
        po.num_paulis(),
        report.stats.final_paths,
        report.m,
        report.bound_per_pauli.binomial,
        report.bound_per_pauli.exponential
    );
    let config = serde_json::json!({
        "problem": a.problem.echo(),
        "kappa": a.kappa,
        "max_weight": a.max_weight,
        "coeff_floor": a.coeff_floor,
        "path_cap": a.path_cap,
    });
    let mut m = RunManifest::new("build", &config, vec![], a.partitions)?;
    m.record_timing("build", elapsed);
    m.write_sidecar(&a.out)?;
    Ok(())
}

fn cmd_rmse(a: RmseArgs) -> patchsurr::Result<()> {
    let p = a.problem.load()?;
    let t = Instant::now();
    let kappas: Vec<u32> = (0..=a.kappa_max).collect();
    let rows = rmse_sweep(&p, &a.r, &kappas, a.samples, a.seed, a.partitions)?;
    write_csv(&a.out, &rows)?;
    let config = serde_json::json!({
        "problem": a.problem.echo(),
        "r": a.r,
        "kappa_max": a.kappa_max,
        "samples": a.samples,
    });
    let mut m = RunManifest::new("rmse-sweep", &config, vec![a.seed], a.partitions)?;
    m.record_timing("total", t.elapsed().as_secs_f64());
    m.write_sidecar(&a.out)?;
    Ok(())
}

fn cmd_shots(a: ShotArgs) -> patchsurr::Result<()> {
    let p = a.problem.load()?;
    let methods: Vec<ShotMethod> = a.strategy.iter().map(|s| ShotMethod::from_name(s)).collect::<Result<_, _>>()?;
    let cfg = ShotCompareConfig {
        kappa: a.kappa,
        r: a.r,
        shots: a.shots.clone(),
        repeats: a.repeats,
        draws: a.draws,
        seed: a.seed,
        partitions: a.partitions,
    };
    let t = Instant::now();
    let rows = shot_compare(&p, &methods, &cfg)?;
    write_csv(&a.out, &rows)?;
    let config = serde_json::json!({ "problem": a.problem.echo(), "strategy": a.strategy, "compare": cfg });
    let mut m = RunManifest::new("shot-compare", &config, vec![a.seed], a.partitions)?;
    m.record_timing("total", t.elapsed().as_secs_f64());
    m.write_sidecar(&a.out)?;
    Ok(())
}

fn cmd_kz(a: KzArgs) -> patchsurr::Result<()> {
    let ramps: Vec<RampKind> = a.ramp.iter().map(|s| RampKind::from_name(s)).collect::<Result<_, _>>()?;
    let edge = match &a.obs_edge {
        Some(e) => (e[0], e[1]),
        None => {
            let n = patchsurr::Topology::by_name(&a.topology)?.num_sites();
            (n / 2 - 1, n / 2)
        }
    };
    let cfg = KzConfig {
        topology: a.topology.clone(),
        dt: a.dt,
        tfs: a.tf.clone(),
        ramps: ramps.clone(),
        edge,
        kappa: a.kappa,
        max_weight: a.max_weight,
        sample: match a.ramp_sample {
            Sample::End => RampSample::End,
            Sample::Mid => RampSample::Mid,
        },
        partitions: a.partitions,
        ..KzConfig::desk()
    };
    let t = Instant::now();
    let rows = kz_scan(&cfg)?;
    write_csv(&a.out, &rows)?;
    if cfg.tfs.len() > 1 {
        for ramp in &ramps {
            let sel: Vec<_> = rows.iter().filter(|r| r.ramp == ramp.name()).collect();
            let xs: Vec<f64> = sel.iter().map(|r| r.tf).collect();
            let ys: Vec<f64> = sel.iter().map(|r| r.n_def).collect();
            println!("{}: log-log slope {:.4}", ramp.name(), loglog_slope(&xs, &ys));
        }
    }
    let mut m = RunManifest::new("kz-scan", &cfg, vec![], a.partitions)?;
    m.record_timing("total", t.elapsed().as_secs_f64());
    m.write_sidecar(&a.out)?;
    Ok(())
}

fn cmd_taylor(a: TaylorArgs) -> patchsurr::Result<()> {
    let p = a.problem.load()?;
    let exact = CircuitOracle::new(p.circuit, p.obs, p.state)?;
    let m = exact.circuit().num_params();
    let center: Vec<f64> = match &a.center {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => vec![0.0; m],
    };
    let r = a.r.unwrap_or(0.5 / m.max(1) as f64);
    let opts = TaylorOptions {
        recipe: a.fd_step.map_or(DerivativeRecipe::ShiftRule, |h| DerivativeRecipe::FiniteDifference { h }),
        ..TaylorOptions::default()
    };
    let t = Instant::now();
    let noisy = a.shots.map(|n| NoisyCircuitOracle::new(exact.clone(), n, a.seed));
    let oracle: &dyn LossOracle = match &noisy {
        Some(o) => o,
        None => &exact,
    };
    let (ts, report) = taylor_report(oracle, &exact, &center, a.order, opts, r, a.scan, a.seed as u32)?;
    std::fs::write(&a.out, ts.to_json())?;
    let mut report_path = a.out.as_os_str().to_owned();
    report_path.push(".report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    println!(
        "derivatives {} | evaluations {} requested, {} unique (bound {:.1}) | max error {:.3e} vs worst bound {:.3e} | rms {:.3e} vs mse bound {:.3e}",
        report.ledger.derivatives,
        report.ledger.requested_evaluations,
        report.ledger.unique_evaluations,
        report.ledger.call_bound,
        report.max_error,
        report.worst_bound,
        report.rms_error,
        report.mse_bound.sqrt()
    );
    let config = serde_json::json!({
        "problem": a.problem.echo(),
        "center": center,
        "order": a.order,
        "shots": a.shots,
        "r": r,
        "scan": a.scan,
        "fd_step": a.fd_step,
    });
    let mut m = RunManifest::new("taylor", &config, vec![a.seed], 1)?;
    m.record_timing("total", t.elapsed().as_secs_f64());
    m.write_sidecar(&a.out)?;
    Ok(())
}
