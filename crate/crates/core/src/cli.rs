//! Command-line front end.
//!
//! Exit codes: 0 success, 2 validation/usage error, 3 internal invariant
//! violation (a solver run that did not converge cleanly). Reports go to
//! stdout (or `--out`); diagnostics go to stderr. All randomness is
//! seeded, so output is reproducible from the flags alone.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::curvature::{add_curvature, mult_curvature};
use crate::error::IcaError;
use crate::instance::{gen_gap_instance, gen_random, Instance, RandomFamily};
use crate::oracle::{brute_force_opt, verify_gap_certificate, Objective};
use crate::report::TerminationReason;
use crate::solvers::{
    solve_additive_opts, solve_multiplicative_guessing_opts, solve_multiplicative_opts,
    SolveOptions, TargetSpec,
};
use crate::valuations::ConcaveValuation;
use crate::wbb::solve_wbb_raw;

#[derive(Parser)]
#[command(
    name = "ica",
    about = "Indivisible allocation with concave-additive valuations",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance with the multiplicative, additive, or weighted
    /// bang-per-buck algorithm.
    Solve(SolveArgs),
    /// Compute a local curvature parameter with its witness.
    Curvature(CurvatureArgs),
    /// Generate a tight integrality-gap instance with a dual certificate.
    GapGen(GapGenArgs),
    /// Exhaustive ground-truth optimum for a small instance.
    Oracle(OracleArgs),
    /// Batch experiments, CSV output.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Mult,
    Add,
    Wbb,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MuMode {
    Auto,
    Guess,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Smoothing parameter for wbb mode.
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    /// Threshold source for mult mode.
    #[arg(long, value_enum, default_value_t = MuMode::Auto)]
    mu: MuMode,
    /// Write the event trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvatureArgs {
    /// Path to a valuation descriptor JSON file.
    #[arg(long)]
    valuation: PathBuf,
    #[arg(long)]
    width: f64,
    #[arg(long, value_enum)]
    kind: KindArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Mult,
    Add,
}

#[derive(Args)]
struct GapGenArgs {
    #[arg(long)]
    valuation: PathBuf,
    #[arg(long)]
    width: f64,
    #[arg(long, default_value_t = 64)]
    max_denominator: u64,
    /// Where to write the generated instance JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Util,
    Nash,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Random,
    Gap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Linear,
    Budget,
    Piecewise,
    Power,
    SmoothLog,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 6)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FamilyArg::Budget)]
    family: FamilyArg,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Run the CLI; the error carries the exit code.
pub fn run() -> Result<(), (i32, String)> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Curvature(args) => cmd_curvature(args),
        Command::GapGen(args) => cmd_gap_gen(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn validation_err(e: IcaError) -> (i32, String) {
    (2, e.to_string())
}

/// Print to stdout, treating a closed pipe (`ica ... | head`) as success.
fn print_stdout(content: &str) -> Result<(), (i32, String)> {
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut handle = stdout.lock();
    match writeln!(handle, "{content}").and_then(|_| handle.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err((2, e.to_string())),
    }
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<(), (i32, String)> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| (2, e.to_string())),
        None => print_stdout(content),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), (i32, String)> {
    let inst = Instance::load(&args.instance).map_err(validation_err)?;
    for w in inst.warnings() {
        eprintln!("warning: {w}");
    }
    let mut opts = SolveOptions::with_epsilon(args.epsilon);
    opts.trace = args.trace.is_some();

    let (json, termination, trace_lines) = match args.mode {
        Mode::Mult => {
            let report = match args.mu {
                MuMode::Auto => solve_multiplicative_opts(&inst, TargetSpec::Auto, &opts)
                    .map_err(validation_err)?,
                MuMode::Guess => {
                    solve_multiplicative_guessing_opts(&inst, &opts).map_err(validation_err)?
                }
            };
            let lines = trace_to_lines(report.trace.as_deref());
            (report.to_json(), report.termination, lines)
        }
        Mode::Add => {
            let report =
                solve_additive_opts(&inst, TargetSpec::Auto, &opts).map_err(validation_err)?;
            let lines = trace_to_lines(report.trace.as_deref());
            (report.to_json(), report.termination, lines)
        }
        Mode::Wbb => {
            let (report, _info, original_product) =
                solve_wbb_raw(&inst, args.omega, &opts).map_err(validation_err)?;
            let lines = trace_to_lines(report.trace.as_deref());
            let mut value: serde_json::Value =
                serde_json::from_str(&report.to_json()).expect("report JSON");
            value["original_product_objective"] = json!(original_product);
            (
                serde_json::to_string_pretty(&value).expect("json"),
                report.termination,
                lines,
            )
        }
    };

    if let (Some(path), Some(lines)) = (&args.trace, trace_lines) {
        std::fs::write(path, lines).map_err(|e| (2, e.to_string()))?;
    }
    write_or_print(&args.out, &json)?;
    match termination {
        TerminationReason::Converged => Ok(()),
        other => Err((3, format!("solver did not converge cleanly: {other:?}"))),
    }
}

fn trace_to_lines(trace: Option<&[crate::report::TraceEvent]>) -> Option<String> {
    trace.map(|events| {
        let mut s = String::new();
        for ev in events {
            s.push_str(&serde_json::to_string(ev).expect("event"));
            s.push('\n');
        }
        s
    })
}

fn load_valuation(path: &PathBuf) -> Result<ConcaveValuation, (i32, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (2, e.to_string()))?;
    let v: ConcaveValuation = serde_json::from_str(&text).map_err(|e| (2, e.to_string()))?;
    v.validate().map_err(validation_err)?;
    Ok(v)
}

fn cmd_curvature(args: CurvatureArgs) -> Result<(), (i32, String)> {
    let v = load_valuation(&args.valuation)?;
    let report = match args.kind {
        KindArg::Mult => mult_curvature(&v, args.width).map_err(validation_err)?,
        KindArg::Add => add_curvature(&v, args.width).map_err(validation_err)?,
    };
    print_stdout(&serde_json::to_string_pretty(&report).expect("report"))?;
    Ok(())
}

fn cmd_gap_gen(args: GapGenArgs) -> Result<(), (i32, String)> {
    let v = load_valuation(&args.valuation)?;
    let (inst, spec) =
        gen_gap_instance(&v, args.width, args.max_denominator).map_err(validation_err)?;
    inst.save(&args.out).map_err(validation_err)?;
    let verification = verify_gap_certificate(&inst, &spec).map_err(validation_err)?;
    let out = json!({
        "instance_path": args.out,
        "spec": spec,
        "verification": verification,
    });
    print_stdout(&serde_json::to_string_pretty(&out).expect("json"))?;
    if verification.all_pass {
        Ok(())
    } else {
        Err((3, "gap certificate verification failed".into()))
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<(), (i32, String)> {
    let inst = Instance::load(&args.instance).map_err(validation_err)?;
    let objective = match args.objective {
        ObjectiveArg::Util => Objective::Utilitarian,
        ObjectiveArg::Nash => Objective::NashLog { omega: args.omega },
    };
    let (value, alloc) = brute_force_opt(&inst, objective).map_err(validation_err)?;
    let out = json!({
        "objective": match args.objective { ObjectiveArg::Util => "utilitarian", ObjectiveArg::Nash => "nash_log" },
        "value": value,
        "allocation": alloc,
    });
    print_stdout(&serde_json::to_string_pretty(&out).expect("json"))?;
    Ok(())
}

fn family_of(arg: FamilyArg, omega: f64) -> RandomFamily {
    match arg {
        FamilyArg::Linear => RandomFamily::Linear,
        FamilyArg::Budget => RandomFamily::Budget,
        FamilyArg::Piecewise => RandomFamily::Piecewise,
        FamilyArg::Power => RandomFamily::Power,
        FamilyArg::SmoothLog => RandomFamily::SmoothLog { omega },
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), (i32, String)> {
    let mut csv =
        String::from("instance_id,primal,dual,certificate,oracle,updates,reassignments,wall_ms\n");
    let opts = SolveOptions::with_epsilon(args.epsilon);
    for k in 0..args.count {
        let (id, inst) = match args.suite {
            Suite::Random => {
                let inst = gen_random(
                    args.n,
                    args.m,
                    family_of(args.family, args.omega),
                    args.seed.wrapping_add(k as u64),
                );
                (format!("rnd-{k:03}"), inst)
            }
            Suite::Gap => {
                // sweep budget caps; width equals the cap for maximal gap
                let cap = 1.0 + (k as f64) / (args.count.max(1) as f64);
                let v = ConcaveValuation::budget(cap);
                let (inst, _spec) = gen_gap_instance(&v, cap, 64).map_err(validation_err)?;
                (format!("gap-{k:03}"), inst)
            }
        };
        let start = Instant::now();
        let report = match args.family {
            FamilyArg::SmoothLog if args.suite == Suite::Random => {
                solve_additive_opts(&inst, TargetSpec::Auto, &opts).map_err(validation_err)?
            }
            _ => {
                solve_multiplicative_opts(&inst, TargetSpec::Auto, &opts).map_err(validation_err)?
            }
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let oracle = match brute_force_opt(&inst, Objective::Utilitarian) {
            Ok((v, _)) => format!("{v}"),
            Err(_) => String::new(),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            id,
            report.primal,
            report.dual_objective,
            report.certificate,
            oracle,
            report.total_slope_updates(),
            report.reassignments,
            wall_ms
        ));
    }
    write_or_print(&args.out, csv.trim_end())?;
    Ok(())
}
