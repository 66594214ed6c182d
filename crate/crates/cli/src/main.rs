//! `cdc`: plan, build, simulate, bound, search and sweep from the command line.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage or input error,
//! 3 request that cannot be satisfied as asked (e.g. strict divisibility).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdc_core::allocator;
use cdc_core::bounds::{brute_force_search, time_lower_bounds, SearchOptions, DEFAULT_SEARCH_BUDGET};
use cdc_core::scalar::{parse_rational, Rational};
use cdc_core::scheme::{synthesize, SchemeOptions};
use cdc_core::simulator::{self, TraceEntry};
use cdc_core::sweep::{ratio_grid, sweep, write_csv};
use cdc_core::{Divisibility, ExactJobSpec, Mode, Scheme};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cdc", version, about = "Coded distributed computing planner and verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal redundancy, server count and execution time.
    Plan(PlanArgs),
    /// Synthesize the placement and shuffle plan of the optimal scheme.
    Build(BuildArgs),
    /// Run a scheme on synthetic data and check it against the oracle.
    Simulate(SimulateArgs),
    /// Converse bounds for the placement of a scheme file.
    Bound(BoundArgs),
    /// Exhaustive search over all placements of a tiny instance.
    Search(SearchArgs),
    /// Coded versus uncoded optimal times over a range of c_s / c_m.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(alias = "sequential")]
    Seq,
    #[value(alias = "parallel")]
    Par,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Seq => vec![Mode::Sequential],
            ModeArg::Par => vec![Mode::Parallel],
            ModeArg::Both => vec![Mode::Sequential, Mode::Parallel],
        }
    }

    fn single(self) -> Result<Mode, CliError> {
        match self {
            ModeArg::Seq => Ok(Mode::Sequential),
            ModeArg::Par => Ok(Mode::Parallel),
            ModeArg::Both => Err(CliError::Usage("this command takes --mode seq or --mode par".into())),
        }
    }
}

fn rational_arg(text: &str) -> Result<Rational, String> {
    parse_rational(text)
}

#[derive(Args, Clone)]
struct JobArgs {
    /// Number of Reduce functions (and solvers).
    #[arg(long)]
    q: usize,
    /// Number of input files.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Map cost constant; accepts "p/q" or decimals.
    #[arg(long, value_parser = rational_arg)]
    cm: Rational,
    /// Shuffle cost constant.
    #[arg(long, value_parser = rational_arg)]
    cs: Rational,
    /// Reduce cost constant.
    #[arg(long, value_parser = rational_arg, default_value = "0")]
    cr: Rational,
    /// Bits per intermediate value (multiple of 8).
    #[arg(long, default_value_t = 64)]
    t_bits: u32,
}

impl JobArgs {
    fn spec(&self) -> Result<ExactJobSpec, CliError> {
        Ok(ExactJobSpec::with_bits(
            self.q,
            self.n,
            self.cm.clone(),
            self.cs.clone(),
            self.cr.clone(),
            self.t_bits,
        )?)
    }
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Plan for unicast shuffling instead of coded multicast.
    #[arg(long)]
    uncoded: bool,
}

#[derive(Args, Clone)]
struct SchemeFlags {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long, value_enum, default_value = "seq")]
    mode: ModeArg,
    /// Server count instead of the planner's K*.
    #[arg(long)]
    k: Option<usize>,
    /// Grow N to the least value the scheme accepts instead of failing.
    #[arg(long)]
    pad: bool,
    /// Helper load target when r* = 0 forces an unbounded cluster.
    #[arg(long, value_parser = rational_arg, default_value = "1/8")]
    epsilon: Rational,
    /// Shuffle by unicast on the same placement.
    #[arg(long)]
    uncoded: bool,
}

impl SchemeFlags {
    fn build(&self) -> Result<Scheme, CliError> {
        let opts = SchemeOptions {
            k: self.k,
            divisibility: if self.pad { Divisibility::Pad } else { Divisibility::Strict },
            epsilon: self.epsilon.clone(),
            uncoded_shuffle: self.uncoded,
        };
        Ok(synthesize(&self.job.spec()?, self.mode.single()?, &opts)?)
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    scheme: SchemeFlags,
    /// Write the scheme here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scheme file written by `build`; otherwise the scheme flags are required.
    #[arg(long, conflicts_with_all = ["q", "cm", "cs"])]
    scheme: Option<PathBuf>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, value_parser = rational_arg)]
    cm: Option<Rational>,
    #[arg(long, value_parser = rational_arg)]
    cs: Option<Rational>,
    #[arg(long, value_parser = rational_arg, default_value = "0")]
    cr: Rational,
    #[arg(long, default_value_t = 64)]
    t_bits: u32,
    /// Timing model to report; defaults to the scheme's own.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    pad: bool,
    #[arg(long, value_parser = rational_arg, default_value = "1/8")]
    epsilon: Rational,
    #[arg(long)]
    uncoded: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write one JSON line per shuffle message to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    scheme: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    job: JobArgs,
    /// Largest server count to enumerate.
    #[arg(long)]
    kmax: usize,
    #[arg(long, value_enum, default_value = "seq")]
    mode: ModeArg,
    /// Cap on enumerated placements.
    #[arg(long, default_value_t = DEFAULT_SEARCH_BUDGET)]
    budget: u128,
    /// Enumerate file assignments as ordered sequences (slower, for cross-checks).
    #[arg(long)]
    no_prune: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Number of Reduce functions, or the start of a range with --q-max.
    #[arg(long)]
    q: usize,
    #[arg(long)]
    q_max: Option<usize>,
    #[arg(long, value_parser = rational_arg)]
    ratio_min: Rational,
    #[arg(long, value_parser = rational_arg)]
    ratio_max: Rational,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    #[arg(long, value_parser = rational_arg, default_value = "0")]
    cr: Rational,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Infeasible(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<cdc_core::Error> for CliError {
    fn from(e: cdc_core::Error) -> Self {
        use cdc_core::Error as E;
        let text = e.to_string();
        match e {
            _ if e.is_infeasible() => CliError::Infeasible(text),
            E::InvalidPlan(_) | E::Undecodable { .. } => CliError::Internal(text),
            _ => CliError::Usage(text),
        }
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Internal(e.to_string())),
    }
}

fn load_scheme(path: &Path) -> Result<Scheme, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let scheme: Scheme =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{} is not a scheme file: {e}", path.display())))?;
    scheme
        .verify()
        .map_err(|e| CliError::Usage(format!("{} is inconsistent: {e}", path.display())))?;
    Ok(scheme)
}

fn plan(args: &PlanArgs) -> Result<(), CliError> {
    let spec = args.job.spec()?;
    let plans: Vec<_> = args
        .mode
        .modes()
        .into_iter()
        .map(|m| allocator::plan(&spec, m, !args.uncoded))
        .collect();
    if plans.len() == 1 {
        emit_json(&plans[0], None)
    } else {
        emit_json(&plans, None)
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scheme = match &args.scheme {
        Some(path) => load_scheme(path)?,
        None => {
            let missing = |flag: &str| CliError::Usage(format!("either --scheme or --{flag} is required"));
            let flags = SchemeFlags {
                job: JobArgs {
                    q: args.q.ok_or_else(|| missing("q"))?,
                    n: args.n,
                    cm: args.cm.clone().ok_or_else(|| missing("cm"))?,
                    cs: args.cs.clone().ok_or_else(|| missing("cs"))?,
                    cr: args.cr.clone(),
                    t_bits: args.t_bits,
                },
                mode: args.mode.unwrap_or(ModeArg::Seq),
                k: args.k,
                pad: args.pad,
                epsilon: args.epsilon.clone(),
                uncoded: args.uncoded,
            };
            flags.build()?
        }
    };
    let mode = match args.mode {
        Some(m) => m.single()?,
        None => scheme.mode,
    };
    let mut result = simulator::run(
        &scheme.spec,
        &scheme.layout.placement,
        &scheme.shuffle,
        args.seed,
        mode,
        args.trace.is_some(),
    )?;
    if let (Some(path), Some(trace)) = (&args.trace, result.trace.take()) {
        write_trace(path, &trace)?;
    }
    emit_json(&result, None)?;
    if result.oracle_match {
        Ok(())
    } else {
        Err(CliError::Internal("reduce outputs differ from the centralized oracle".into()))
    }
}

fn write_trace(path: &Path, trace: &[TraceEntry]) -> Result<(), CliError> {
    let mut text = String::new();
    for entry in trace {
        text.push_str(&serde_json::to_string(entry).map_err(|e| CliError::Internal(e.to_string()))?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn search(args: &SearchArgs) -> Result<(), CliError> {
    let opts = SearchOptions {
        k_max: args.kmax,
        mode: args.mode.single()?,
        budget: args.budget,
        prune: !args.no_prune,
    };
    emit_json(&brute_force_search(&args.job.spec()?, &opts)?, None)
}

fn run_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let q_max = args.q_max.unwrap_or(args.q);
    if args.q == 0 || q_max < args.q {
        return Err(CliError::Usage(format!("need 1 <= q <= q-max, got {} and {q_max}", args.q)));
    }
    let qs: Vec<usize> = (args.q..=q_max).collect();
    let ratios = ratio_grid(&args.ratio_min, &args.ratio_max, args.steps)?;
    let rows = sweep(&qs, &ratios, &args.mode.modes(), &args.cr)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
            write_csv(&rows, file)?;
        }
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(args) => plan(&args),
        Command::Build(args) => {
            let scheme = args.scheme.build()?;
            emit_json(&scheme, args.out.as_deref())
        }
        Command::Simulate(args) => simulate(&args),
        Command::Bound(args) => {
            let scheme = load_scheme(&args.scheme)?;
            emit_json(&time_lower_bounds(&scheme.spec, &scheme.layout.placement)?, None)
        }
        Command::Search(args) => search(&args),
        Command::Sweep(args) => run_sweep(&args),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CDC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("CDC_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
