use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use poisson_cli::commands::{self, Gig1Params};
use poisson_cli::report::{Inputs, Report};
use poisson_cli::{ChainSpec, CliError};
use poisson_core::potential::{DEFAULT_MAX_BLOCKS, DEFAULT_TOL};
use poisson_core::split_mc::{McConfig, DEFAULT_MAX_STEPS};

/// Bounds, exact solutions, and regenerative estimates for Poisson's
/// equation on Markov chains.
#[derive(Parser)]
#[command(name = "poisson-bounds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArg {
    /// Chain specification (TOML).
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100_000)]
    cycles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads, 0 for all cores. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check the drift and minorization certificates.
    Verify(SpecArg),
    /// Exact g*, occupation measure and every bound, with assertions.
    Solve(SpecArg),
    /// Truncated potential and its gap to g*.
    Potential {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_BLOCKS)]
        max_blocks: usize,
    },
    /// Regenerative Monte Carlo from a start state.
    Simulate {
        #[command(flatten)]
        spec: SpecArg,
        /// Start state, by label or index.
        #[arg(long)]
        x0: String,
        #[command(flatten)]
        mc: McArgs,
    },
    /// GI/G/1 waiting times with normal increments.
    Gig1 {
        #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
        mean: f64,
        #[arg(long, default_value_t = 1.0)]
        sd: f64,
        #[arg(long, default_value_t = 1.1)]
        kappa: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Small-set endpoint; searched for when absent.
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long, default_value_t = 60)]
        curve_points: usize,
        /// Write the bound curves here.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Monte Carlo cycles per start; 0 skips simulation.
        #[arg(long, default_value_t = 0)]
        cycles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

fn load(path: &PathBuf, command: &str) -> Result<ChainSpec, Box<Report>> {
    let fail = |e: CliError| Box::new(Report::new(command, Inputs::default()).finish(Err(e)));
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(CliError::Io(format!("{}: {e}", path.display()))))?;
    ChainSpec::parse(&text).map_err(fail)
}

fn mc_config(mc: &McArgs) -> McConfig {
    McConfig::new(mc.cycles, mc.seed)
        .with_workers(mc.workers)
        .with_max_steps(DEFAULT_MAX_STEPS)
}

fn run(cli: &Cli) -> anyhow::Result<Report> {
    let report = match &cli.command {
        Command::Verify(s) => load(&s.spec, "verify").map(|spec| commands::verify(&spec)),
        Command::Solve(s) => load(&s.spec, "solve").map(|spec| commands::solve(&spec)),
        Command::Potential {
            spec,
            tol,
            max_blocks,
        } => load(&spec.spec, "potential").map(|s| commands::potential(&s, *tol, *max_blocks)),
        Command::Simulate { spec, x0, mc } => {
            load(&spec.spec, "simulate").map(|s| commands::simulate(&s, x0, &mc_config(mc)))
        }
        Command::Gig1 {
            mean,
            sd,
            kappa,
            step,
            x0,
            curve_points,
            curves,
            cycles,
            seed,
            workers,
        } => {
            let params = Gig1Params {
                mean: *mean,
                sd: *sd,
                kappa: *kappa,
                step: *step,
                x0: *x0,
                curve_points: *curve_points,
                ..Gig1Params::default()
            };
            let cfg = McConfig::new(*cycles, *seed).with_workers(*workers);
            let (report, table) = commands::gig1(&params, &cfg);
            if let (Some(path), Some(t)) = (curves, table) {
                std::fs::write(path, commands::curve_table(&t))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(report)
        }
    };
    Ok(report.unwrap_or_else(|r| *r))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli).and_then(|report| {
        let json = report.to_json()?;
        match &cli.out {
            Some(path) => std::fs::write(path, json + "\n")
                .with_context(|| format!("writing {}", path.display()))?,
            None => {
                let mut stdout = std::io::stdout().lock();
                match writeln!(stdout, "{json}") {
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                    other => other.context("writing report")?,
                }
            }
        }
        Ok(report.passed)
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
