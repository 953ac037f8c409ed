//! Command-line front end.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 some experiment
//! cells failed, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lowrank_dp::decomposition::{decompose, Decomposition, SolverConfig};
use lowrank_dp::harness::{
    emit_report, reports_to_csv, reports_to_json, run_experiment, ExperimentConfig, MechanismId,
    ReportFormat,
};
use lowrank_dp::io::{load_decomposition, load_workload, save_decomposition, save_workload};
use lowrank_dp::lrm::ErrorAnalysis;
use lowrank_dp::mechanisms::{expected_error_nod, expected_error_nor, PrivacyParams};
use lowrank_dp::workload::{WorkloadKind, WorkloadMatrix, WorkloadSpec, DEFAULT_FLIP_PROBABILITY};
use serde::Serialize;

const EXIT_INPUT: u8 = 1;
const EXIT_CELL_FAILURES: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "lowrank-dp", version, about = "Differentially private batch linear queries via low-rank decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic workload: writes the CSV and a `.meta.json` sidecar.
    GenerateWorkload(GenerateArgs),
    /// Decompose a workload into B·L and write B.csv, L.csv, meta.json.
    Decompose(DecomposeArgs),
    /// Run an experiment grid from a JSON config and emit the error report.
    Run(RunArgs),
    /// Print expected errors and spectral bounds for a workload.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// WDiscrete, WRange or WRelated.
    #[arg(long)]
    kind: WorkloadKind,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of a +1 entry (WDiscrete).
    #[arg(long, default_value_t = DEFAULT_FLIP_PROBABILITY)]
    p: f64,
    /// Number of base queries (WRelated).
    #[arg(long)]
    s: Option<usize>,
    /// Output CSV path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Inner dimension; defaults to round(1.2·rank).
    #[arg(long)]
    r: Option<usize>,
    /// Residual tolerance on ‖W − BL‖_F.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    outer_max: Option<usize>,
    #[arg(long)]
    nesterov_max: Option<usize>,
    #[arg(long)]
    solver_seed: Option<u64>,
    /// JSON file with solver settings; flags override it.
    #[arg(long)]
    solver_config: Option<PathBuf>,
}

impl SolverArgs {
    fn resolve(&self) -> anyhow::Result<SolverConfig> {
        let mut cfg = match &self.solver_config {
            Some(path) => {
                let text = read_text(path)?;
                serde_json::from_str(&text)
                    .map_err(|e| lowrank_dp::Error::Config(format!("{}: {e}", path.display())))?
            }
            None => SolverConfig::default(),
        };
        if self.r.is_some() {
            cfg.r = self.r;
        }
        if let Some(g) = self.gamma {
            cfg.gamma = g;
        }
        if let Some(v) = self.outer_max {
            cfg.outer_max = v;
        }
        if let Some(v) = self.nesterov_max {
            cfg.nesterov_max = v;
        }
        if let Some(v) = self.solver_seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    /// Workload CSV.
    #[arg(long, short)]
    workload: PathBuf,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON). Omit to use the defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Report path; printed to stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Comma-separated subset of LRM,NOD,NOR,MM,WM,HM.
    #[arg(long, value_delimiter = ',')]
    mechanisms: Option<Vec<MechanismId>>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    cell_timeout_secs: Option<f64>,
    /// Write wall-clock times (reports are then no longer byte-reproducible).
    #[arg(long)]
    record_timings: bool,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long, short)]
    workload: PathBuf,
    /// Existing decomposition directory; computed with the solver flags otherwise.
    #[arg(long)]
    decomposition: Option<PathBuf>,
    /// Comma-separated privacy budgets.
    #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01")]
    epsilons: Vec<f64>,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    #[command(flatten)]
    solver: SolverArgs,
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        lowrank_dp::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn generate(args: GenerateArgs) -> anyhow::Result<u8> {
    let mut spec = WorkloadSpec::new(args.kind, args.m, args.n, args.seed).with_p(args.p);
    spec.s = args.s;
    spec.validate()?;
    let w: WorkloadMatrix<f64> = spec.generate()?;
    save_workload(&args.out, &w, Some(&spec))?;
    eprintln!("wrote {}x{} {} workload to {}", w.m(), w.n(), spec.kind, args.out.display());
    Ok(0)
}

#[derive(Serialize)]
struct DecomposeSummary {
    r: usize,
    rank: usize,
    gamma: f64,
    residual: f64,
    objective: f64,
    l_sensitivity: f64,
    iterations: usize,
    converged: bool,
}

fn decompose_cmd(args: DecomposeArgs) -> anyhow::Result<u8> {
    let (w, _) = load_workload::<f64>(&args.workload)?;
    let cfg = args.solver.resolve()?;
    let d = decompose(&w, &cfg)?;
    save_decomposition(&args.out, &d)?;
    let summary = DecomposeSummary {
        r: d.r(),
        rank: w.rank(),
        gamma: d.gamma,
        residual: d.residual,
        objective: d.objective,
        l_sensitivity: d.l_sensitivity,
        iterations: d.stats.outer_iterations,
        converged: d.converged(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(0)
}

fn run_cmd(args: RunArgs) -> anyhow::Result<u8> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.master_seed {
        cfg.master_seed = v;
    }
    if let Some(v) = args.epsilons {
        cfg.epsilons = v;
    }
    if let Some(v) = args.mechanisms {
        cfg.mechanisms = v;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if let Some(v) = args.cell_timeout_secs {
        cfg.cell_timeout_secs = v;
    }
    if args.record_timings {
        cfg.record_timings = true;
    }
    let reports = run_experiment(&cfg)?;
    match &args.output {
        Some(path) => emit_report(&reports, args.format, path)?,
        None => {
            let text = match args.format {
                ReportFormat::Csv => reports_to_csv(&reports)?,
                ReportFormat::Json => reports_to_json(&reports)?,
            };
            print!("{text}");
        }
    }
    let failed = reports.iter().filter(|r| r.is_failure()).count();
    if failed > 0 {
        eprintln!("{failed} of {} report rows failed", reports.len());
        return Ok(EXIT_CELL_FAILURES);
    }
    Ok(0)
}

/// One row of the `bounds` table. Names carry the noise convention:
/// `_laplace` includes the factor 2 of the Laplace variance, `_raw` does not.
#[derive(Serialize)]
struct BoundsRow {
    epsilon: f64,
    m: usize,
    n: usize,
    rank: usize,
    r: usize,
    residual: f64,
    condition_ratio: f64,
    lrm_expected_laplace: f64,
    nod_expected_laplace: f64,
    nor_expected_laplace: f64,
    upper_bound_raw: f64,
    upper_bound_laplace: f64,
    /// Hidden constant taken as 1.
    lower_bound_raw: f64,
    approx_ratio: f64,
    approx_ratio_in_proven_regime: bool,
}

fn bounds_cmd(args: BoundsArgs) -> anyhow::Result<u8> {
    let (w, _) = load_workload::<f64>(&args.workload)?;
    let d: Decomposition<f64> = match &args.decomposition {
        Some(dir) => load_decomposition(dir, &w)?,
        None => decompose(&w, &args.solver.resolve()?)?,
    };
    let spectrum = w.spectrum();
    let mut rows = Vec::new();
    for &eps in &args.epsilons {
        let params = PrivacyParams::new(eps)?;
        let a = ErrorAnalysis::with_spectrum(&spectrum, &d, &params);
        rows.push(BoundsRow {
            epsilon: eps,
            m: w.m(),
            n: w.n(),
            rank: a.rank,
            r: a.r,
            residual: a.residual,
            condition_ratio: a.approx_ratio.condition_ratio,
            lrm_expected_laplace: a.expected_error,
            nod_expected_laplace: expected_error_nod(&w, &params),
            nor_expected_laplace: expected_error_nor(&w, &params),
            upper_bound_raw: a.upper_bound,
            upper_bound_laplace: a.upper_bound_laplace,
            lower_bound_raw: a.lower_bound_value,
            approx_ratio: a.approx_ratio.value,
            approx_ratio_in_proven_regime: a.approx_ratio.in_proven_regime,
        });
    }
    match args.format {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        ReportFormat::Csv => {
            let mut out = csv::Writer::from_writer(std::io::stdout());
            for row in &rows {
                out.serialize(row).context("writing bounds table")?;
            }
            out.flush()?;
        }
    }
    Ok(0)
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use lowrank_dp::Error as E;
    match err.downcast_ref::<E>() {
        Some(
            E::Input(_)
            | E::Config(_)
            | E::Parameter(_)
            | E::Parse { .. }
            | E::Io { .. }
            | E::Csv(_)
            | E::Json(_),
        ) => EXIT_INPUT,
        Some(E::Precondition(_) | E::Domain(_)) => EXIT_INTERNAL,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_INPUT,
        None => EXIT_INTERNAL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = std::panic::catch_unwind(|| match cli.command {
        Command::GenerateWorkload(a) => generate(a),
        Command::Decompose(a) => decompose_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Bounds(a) => bounds_cmd(a),
    });
    match result {
        Ok(Ok(code)) => ExitCode::from(code),
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
