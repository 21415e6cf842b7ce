#[macro_use]
mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use qcpp_core::anneal::{anneal_restarts, rank_reports, write_trace_csv, StopReason};
use qcpp_core::evaluate::{cross_fidelities, CrossFidelity};
use qcpp_core::experiment::{run_sweep, write_sweep_csv, SolverKind, SweepConfig};
use qcpp_core::ising::{brute_force_ground_state, build_coefficients};
use qcpp_core::newton::{distinct_solutions, run_restarts};
use qcpp_core::record::SolutionRecord;
use qcpp_core::scenario::{generate_scenario_with, load_scenario, Scenario, ScenarioOptions};
use qcpp_core::statement::{statement_sweep, write_statement_csv, StatementConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{
    AnnealRunConfig, BruteConfig, GenerateConfig, NewtonRunConfig, SweepRunConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qcpp_core::Error),
    #[error("{0}")]
    NotConverged(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use qcpp_core::Error as E;
        match self {
            CliError::Core(E::Validation { .. })
            | CliError::Core(E::DimensionMismatch { .. })
            | CliError::Core(E::NonPhysical(_))
            | CliError::Core(E::Constraint(_)) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Core(E::Size(_)) => 4,
            CliError::Core(E::Parse(_)) | CliError::Parse(_) => 5,
            CliError::Core(E::Io(_)) | CliError::Io(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Solver toolkit for separating pure states from mixed detector states.
#[derive(Parser)]
#[command(name = "qcpp", version, about)]
struct Cli {
    /// Worker threads for restarts and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario file.
    Generate(GenerateArgs),
    /// Multi-restart Newton solve of a scenario.
    SolveNewton(NewtonArgs),
    /// Simulated annealing over the spin mapping of a scenario.
    SolveAnneal(AnnealArgs),
    /// Exhaustive ground state of the spin mapping.
    Brute(BruteArgs),
    /// Fidelity sweep over detector counts and seeds (CSV).
    Sweep(SweepArgs),
    /// Residual of the best +-1 signal combination versus M (CSV).
    Statement(StatementArgs),
}

#[derive(Args)]
struct Common {
    /// Config file (TOML, or JSON for a .json extension); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Hilbert space dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Number of sources.
    #[arg(long)]
    n: Option<usize>,
    /// Number of detectors.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    orthogonality_threshold: Option<f64>,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario file written by `generate`.
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct NewtonArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: ScenarioArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    loss_tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct AnnealFlags {
    #[arg(long)]
    initial_temperature: Option<f64>,
    #[arg(long)]
    flips_per_epoch: Option<u64>,
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    entropy_threshold: Option<f64>,
    #[arg(long)]
    psd_tolerance: Option<f64>,
    /// Return the last state of each chain instead of the best one.
    #[arg(long)]
    return_final: bool,
}

#[derive(Args)]
struct AnnealArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: ScenarioArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<u64>,
    #[command(flatten)]
    anneal: AnnealFlags,
    /// Write the per-epoch trace of the best chain as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BruteArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    input: ScenarioArg,
    /// Also export the coupling tensors as text.
    #[arg(long)]
    coefficients: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated detector counts.
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    /// Comma-separated scenario seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Single scenario seed (ignored when --seeds is given).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[command(flatten)]
    anneal: AnnealFlags,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Newton,
    Anneal,
}

#[derive(Args)]
struct StatementArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sources.
    #[arg(long)]
    n: Option<usize>,
    /// Source vector dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Index of the source to approximate.
    #[arg(long)]
    target: Option<usize>,
    /// Draw fresh signals for every M instead of extending one list.
    #[arg(long)]
    independent: bool,
}

fn apply_anneal_flags(cfg: &mut qcpp_core::anneal::AnnealConfig, f: &AnnealFlags) {
    overlay!(
        cfg,
        f,
        initial_temperature,
        flips_per_epoch,
        max_epochs,
        entropy_threshold,
        psd_tolerance
    );
    if f.return_final {
        cfg.return_final = true;
    }
}

/// Results file layout: everything except `timing` is a pure function of
/// the resolved config and the scenario file.
#[derive(Serialize)]
struct ResultRecord<C: Serialize, X: Serialize> {
    payload: Payload<C, X>,
    timing: Timing,
}

#[derive(Serialize)]
struct Payload<C: Serialize, X: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    solver: &'static str,
    config: C,
    scenario: ScenarioRef,
    cross_fidelities: Vec<CrossFidelity>,
    solutions: Vec<SolutionRecord>,
    summary: X,
}

#[derive(Serialize)]
struct ScenarioRef {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Timing {
    wall_time_s: f64,
}

fn read_scenario(path: &Path) -> CliResult<(Scenario, ScenarioRef)> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let scenario = load_scenario(path)?;
    let sha256 = format!("{:x}", Sha256::digest(&bytes));
    Ok((
        scenario,
        ScenarioRef {
            path: path.display().to_string(),
            sha256,
        },
    ))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("writing {}: {e}", path.display()))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes CSV with a leading `# config=<json>` line.
fn write_csv<C: Serialize>(
    config: &C,
    out: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> CliResult<()> {
    let cfg = serde_json::to_string(config).map_err(|e| CliError::Io(e.to_string()))?;
    let mut buf = Vec::new();
    writeln!(buf, "# config={cfg}").and_then(|_| body(&mut buf)).map_err(|e| CliError::Io(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, buf).map_err(io_err(p)),
        None => {
            std::io::stdout().write_all(&buf).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let mut cfg: GenerateConfig = config::resolve(args.common.config.as_ref())?;
    overlay!(cfg, args, seed, d, n, m, orthogonality_threshold);
    let opts = ScenarioOptions {
        orthogonality_threshold: cfg.orthogonality_threshold,
    };
    let scenario = generate_scenario_with(cfg.d, cfg.n, cfg.m, cfg.seed, &opts)?;
    let json = scenario.to_json()?;
    match &args.common.out {
        Some(p) => fs::write(p, &json).map_err(io_err(p))?,
        None => print!("{json}"),
    }
    let mut summary = format!(
        "scenario d={} N={} M={} seed={}\n",
        cfg.d, cfg.n, cfg.m, cfg.seed
    );
    for c in cross_fidelities(scenario.sources()) {
        summary.push_str(&format!("F(rho_{},rho_{}) = {:.4}\n", c.i + 1, c.j + 1, c.fidelity));
    }
    eprint!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct NewtonSummary {
    restarts_run: usize,
    restarts_converged: usize,
    distinct_solutions: usize,
}

fn cmd_solve_newton(args: NewtonArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg: NewtonRunConfig = config::resolve(args.common.config.as_ref())?;
    overlay!(cfg, args, seed, restarts);
    overlay!(cfg.newton, args, loss_tol, max_iterations);
    let (scenario, sref) = read_scenario(&args.input.scenario)?;
    let runs = run_restarts(scenario.detectors(), cfg.restarts, cfg.seed, &cfg.newton)?;
    let converged = runs.iter().filter(|r| r.converged).count();
    let mut solutions = distinct_solutions(runs.clone());
    let diagnostic = solutions.is_empty();
    if diagnostic {
        // nothing converged: report the lowest-loss attempt for diagnosis
        solutions = runs;
        solutions.sort_by(|a, b| a.loss_final.total_cmp(&b.loss_final));
        solutions.truncate(1);
    }
    let records = solutions
        .iter()
        .enumerate()
        .map(|(i, r)| SolutionRecord::from_newton(i, r, scenario.sources()))
        .collect::<qcpp_core::Result<Vec<_>>>()?;
    let record = ResultRecord {
        payload: Payload {
            tool: "qcpp",
            version: env!("CARGO_PKG_VERSION"),
            command: "solve-newton",
            solver: SolverKind::Newton.name(),
            config: &cfg,
            scenario: sref,
            cross_fidelities: cross_fidelities(scenario.sources()),
            summary: NewtonSummary {
                restarts_run: cfg.restarts,
                restarts_converged: converged,
                distinct_solutions: if diagnostic { 0 } else { records.len() },
            },
            solutions: records,
        },
        timing: Timing {
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&record, args.common.out.as_deref())?;
    if diagnostic {
        return Err(CliError::NotConverged(format!(
            "none of {} Newton restarts converged",
            cfg.restarts
        )));
    }
    for s in &record.payload.solutions {
        eprintln!(
            "solution {}: loss {:.3e}, matched source {} with fidelity {:.6}",
            s.index, s.objective, s.matched_source, s.matched_fidelity
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AnnealSummary {
    restarts_meeting_criteria: usize,
    best_stopped_by: StopReason,
    trace_path: Option<String>,
}

fn cmd_solve_anneal(args: AnnealArgs) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg: AnnealRunConfig = config::resolve(args.common.config.as_ref())?;
    overlay!(cfg.anneal, args, seed, restarts);
    apply_anneal_flags(&mut cfg.anneal, &args.anneal);
    if args.trace.is_some() {
        cfg.anneal.record_trace = true;
    }
    let (scenario, sref) = read_scenario(&args.input.scenario)?;
    let mut reports = anneal_restarts(scenario.detectors(), &cfg.anneal)?;
    rank_reports(&mut reports, &cfg.anneal);
    let meeting = reports.iter().filter(|r| r.meets_criteria(&cfg.anneal)).count();
    if let Some(path) = &args.trace {
        write_csv(&cfg, Some(path), |w| write_trace_csv(&reports[0].trace, w))?;
    }
    let records = reports
        .iter()
        .enumerate()
        .map(|(i, r)| SolutionRecord::from_anneal(i, r, scenario.sources()))
        .collect::<qcpp_core::Result<Vec<_>>>()?;
    let record = ResultRecord {
        payload: Payload {
            tool: "qcpp",
            version: env!("CARGO_PKG_VERSION"),
            command: "solve-anneal",
            solver: SolverKind::Anneal.name(),
            config: &cfg,
            scenario: sref,
            cross_fidelities: cross_fidelities(scenario.sources()),
            summary: AnnealSummary {
                restarts_meeting_criteria: meeting,
                best_stopped_by: reports[0].stopped_by,
                trace_path: args.trace.as_ref().map(|p| p.display().to_string()),
            },
            solutions: records,
        },
        timing: Timing {
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&record, args.common.out.as_deref())?;
    let best = &record.payload.solutions[0];
    eprintln!(
        "best: energy {:.6e}, entropy {:.4}, min eigenvalue {:.3e}, matched source {} with fidelity {:.6}",
        best.objective, best.entropy, best.min_eigenvalue, best.matched_source, best.matched_fidelity
    );
    if meeting == 0 {
        return Err(CliError::NotConverged(format!(
            "no annealing restart met the entropy <= {} and min eigenvalue >= -{} criteria",
            cfg.anneal.entropy_threshold, cfg.anneal.psd_tolerance
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct BruteSummary {
    configurations_visited: u64,
    coefficients_path: Option<String>,
}

fn cmd_brute(args: BruteArgs) -> CliResult<()> {
    let start = Instant::now();
    let cfg: BruteConfig = config::resolve(args.common.config.as_ref())?;
    let (scenario, sref) = read_scenario(&args.input.scenario)?;
    let ground = brute_force_ground_state(scenario.detectors())?;
    if let Some(path) = &args.coefficients {
        let coeffs = build_coefficients(scenario.detectors())?;
        let mut w = create(path)?;
        coeffs.write_text(&mut w).and_then(|_| w.flush()).map_err(io_err(path))?;
    }
    let rho = qcpp_core::anneal::reconstruct_density(&ground.spins, scenario.detectors())?;
    let eig = rho.eigenvalues();
    let m = qcpp_core::evaluate::match_sources(&rho, scenario.sources())?;
    let solution = SolutionRecord {
        index: 0,
        weights: None,
        spins: Some(ground.spins.as_slice().to_vec()),
        objective: ground.energy,
        trace: rho.trace(),
        entropy: qcpp_core::quantum::positive_part_entropy(&eig),
        min_eigenvalue: eig[0],
        matched_source: m.index,
        matched_fidelity: m.fidelity,
        fidelities: m.fidelities,
        converged: None,
        iterations: None,
        restart: None,
        stopped_by: None,
        epochs_run: None,
    };
    let record = ResultRecord {
        payload: Payload {
            tool: "qcpp",
            version: env!("CARGO_PKG_VERSION"),
            command: "brute",
            solver: "brute_force",
            config: &cfg,
            scenario: sref,
            cross_fidelities: cross_fidelities(scenario.sources()),
            solutions: vec![solution],
            summary: BruteSummary {
                configurations_visited: ground.visited,
                coefficients_path: args.coefficients.as_ref().map(|p| p.display().to_string()),
            },
        },
        timing: Timing {
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&record, args.common.out.as_deref())?;
    eprintln!(
        "ground energy {:.6e} over {} configurations",
        ground.energy, ground.visited
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    let mut cfg: SweepRunConfig = config::resolve(args.common.config.as_ref())?;
    overlay!(cfg, args, d, n, m_list, seeds, restarts);
    if args.seeds.is_none() {
        if let Some(s) = args.seed {
            cfg.seeds = vec![s];
        }
    }
    if let Some(k) = args.kind {
        cfg.kind = match k {
            KindArg::Newton => SolverKind::Newton,
            KindArg::Anneal => SolverKind::Anneal,
        };
    }
    apply_anneal_flags(&mut cfg.anneal, &args.anneal);
    let rows = run_sweep(&SweepConfig {
        kind: cfg.kind,
        d: cfg.d,
        n: cfg.n,
        m_list: cfg.m_list.clone(),
        seeds: cfg.seeds.clone(),
        restarts: cfg.restarts,
        newton: cfg.newton,
        anneal: cfg.anneal.clone(),
    })?;
    write_csv(&cfg, args.common.out.as_deref(), |w| write_sweep_csv(&rows, cfg.n, w))?;
    eprintln!("{} rows over {} cells", rows.len(), cfg.m_list.len() * cfg.seeds.len());
    Ok(())
}

fn cmd_statement(args: StatementArgs) -> CliResult<()> {
    let mut cfg: StatementConfig = config::resolve(args.common.config.as_ref())?;
    overlay!(cfg, args, seed, n, dim, m_list, trials, target);
    if args.independent {
        cfg.nested = false;
    }
    let sweep = statement_sweep(&cfg)?;
    write_csv(&cfg, args.common.out.as_deref(), |w| write_statement_csv(&sweep.rows, w))?;
    for s in &sweep.summary {
        eprintln!(
            "M={:>2}: mean {:.4}  min {:.4}  max {:.4}",
            s.m, s.mean, s.min, s.max
        );
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::SolveNewton(a) => cmd_solve_newton(a),
        Command::SolveAnneal(a) => cmd_solve_anneal(a),
        Command::Brute(a) => cmd_brute(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Statement(a) => cmd_statement(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            CliError::Core(qcpp_core::Error::Constraint("x".into())).exit_code(),
            CliError::NotConverged("x".into()).exit_code(),
            CliError::Core(qcpp_core::Error::Size("x".into())).exit_code(),
            CliError::Parse("x".into()).exit_code(),
            CliError::Io("x".into()).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 1]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
