use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use homog::pipeline::{run_pipeline, RunOptions, Stage};
use homog::report::{summary_markdown, write_outputs};
use homog::scenario::Scenario;

#[derive(Parser)]
#[command(name = "homog", version, about = "Periodic homogenization: effective matrices, threshold germs and error scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correctors, effective matrix and Voigt-Reuss bounds
    Effective(Common),
    /// Threshold germ over a grid of directions
    Germ(Common),
    /// Lowest Bloch bands along the probe direction
    Bands(Common),
    /// Fit of the lowest bands against the germ formulas
    Fit(Common),
    /// Exponential error over the (eps, tau, k) grid
    Scan(Common),
    /// Sharpness probes in time and smoothing
    Probe(Common),
    /// Random abstract pencils checked against their closed forms
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    /// Builtin scenario name or path to a JSON config
    #[arg(long)]
    scenario: String,
    /// Override the Fourier cutoff
    #[arg(long)]
    cutoff: Option<f64>,
    #[command(flatten)]
    output: Output,
    /// Write only the sup-over-k scan records
    #[arg(long)]
    sup_only: bool,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 50)]
    families: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct Output {
    /// Directory for report.json, summary.md and the CSV tables
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 when any check fails
    #[arg(long)]
    assert: bool,
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("HOMOG_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("HOMOG_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("HOMOG_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<bool, String> {
    configure_threads()?;
    let (scenario, opts, output) = match cli.command {
        Command::Selftest(a) => {
            let opts = RunOptions { seed: a.seed, selftest_families: a.families, ..RunOptions::for_stage(Stage::Selftest) };
            (None, opts, a.output)
        }
        Command::Effective(c) => common(Stage::Effective, c)?,
        Command::Germ(c) => common(Stage::Germ, c)?,
        Command::Bands(c) => common(Stage::Bands, c)?,
        Command::Fit(c) => common(Stage::Fit, c)?,
        Command::Scan(c) => common(Stage::Scan, c)?,
        Command::Probe(c) => common(Stage::Probe, c)?,
    };
    let report = run_pipeline(scenario.as_ref(), &opts).map_err(|e| e.to_string())?;
    if let Some(dir) = &output.out {
        write_outputs(&report, dir).map_err(|e| e.to_string())?;
    }
    print!("{}", summary_markdown(&report));
    Ok(!output.assert || report.passed())
}

fn common(stage: Stage, c: Common) -> Result<(Option<Scenario>, RunOptions, Output), String> {
    let mut sc = Scenario::load(&c.scenario).map_err(|e| e.to_string())?;
    if let Some(cutoff) = c.cutoff {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(format!("--cutoff must be positive, got {cutoff}"));
        }
        sc = sc.with_cutoff(cutoff);
    }
    let opts = RunOptions { sup_only: c.sup_only, ..RunOptions::for_stage(stage) };
    Ok((Some(sc), opts, c.output))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("homog: one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("homog: {e}");
            ExitCode::from(2)
        }
    }
}
