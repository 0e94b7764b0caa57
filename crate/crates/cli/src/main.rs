use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hermite_fpf::experiments::config::BenchmarkParams;
use hermite_fpf::experiments::runners::format_benchmark_table;
use hermite_fpf::experiments::{load_config, parse_seeds, run_experiment, ExperimentKind, ExperimentSpec, Report};

/// Experiments for the Hermite-Galerkin feedback particle filter.
#[derive(Parser)]
#[command(name = "hermite-fpf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gains of one bimodal ensemble for several truncation orders against the exact gain.
    GainCompare(CommonArgs),
    /// Error sweeps over the truncation order and the ensemble size.
    Convergence(CommonArgs),
    /// Monte Carlo comparison of the three gain approximations on the double-well model.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment specification; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds as a list `1,2,3` or a half-open range `0..20`.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Full-length study: T = 400 and 100 runs.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GainCompare(args) => {
            let spec = prepare(&args, &[ExperimentKind::GainCompare], ExperimentKind::GainCompare)?;
            execute(&spec, &output_dir(&args, &spec, "gain_compare"))
        }
        Command::Convergence(args) => match &args.config {
            Some(_) => {
                let spec = prepare(
                    &args,
                    &[ExperimentKind::ConvergenceM, ExperimentKind::ConvergenceNp],
                    ExperimentKind::ConvergenceM,
                )?;
                execute(&spec, &output_dir(&args, &spec, spec.kind.name()))
            }
            None => {
                let base = output_dir(&args, &ExperimentSpec::new(ExperimentKind::ConvergenceM), "convergence");
                for kind in [ExperimentKind::ConvergenceM, ExperimentKind::ConvergenceNp] {
                    let spec = prepare(&args, &[kind], kind)?;
                    execute(&spec, &base.join(kind.name()))?;
                }
                Ok(())
            }
        },
        Command::Benchmark(args) => {
            let mut spec = prepare(&args.common, &[ExperimentKind::Benchmark], ExperimentKind::Benchmark)?;
            if args.full {
                let base = spec.benchmark.take().unwrap_or_default();
                let full = BenchmarkParams::full();
                spec.benchmark = Some(BenchmarkParams {
                    t_final: full.t_final,
                    runs: full.runs,
                    ..base
                });
                spec.validate()?;
            }
            execute(&spec, &output_dir(&args.common, &spec, "benchmark"))
        }
    }
}

fn prepare(args: &CommonArgs, allowed: &[ExperimentKind], default: ExperimentKind) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentSpec::new(default),
    };
    if !allowed.contains(&spec.kind) {
        bail!("config describes a `{}` experiment, which this subcommand does not run", spec.kind.name());
    }
    if let Some(seeds) = &args.seeds {
        spec.seeds = Some(parse_seeds(seeds)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn output_dir(args: &CommonArgs, spec: &ExperimentSpec, fallback: &str) -> PathBuf {
    args.out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| Path::new("results").join(fallback))
}

fn execute(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    let report = run_experiment(spec, out).with_context(|| format!("running {} experiment", spec.kind.name()))?;
    match &report {
        Report::Benchmark(b) => print!("{}", format_benchmark_table(b)),
        other => println!("{}", serde_json::to_string_pretty(other)?),
    }
    println!("wrote {}", out.display());
    Ok(())
}
