use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use survsel_cli::commands::{cmd_gen, cmd_plot, cmd_probe, cmd_run, Overrides, ProbeArgs};
use survsel_cli::plot::Panel;
use survsel_cli::{CliError, Result, RunManifest};

#[derive(Parser)]
#[command(name = "survsel", version, about = "Feature-selection benchmark for simulated survival data")]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a manifest and write results.csv plus per-scenario JSON.
    Run(RunArgs),
    /// Draw one panel from a results CSV as an SVG line chart.
    Plot(PlotArgs),
    /// Write one simulated replicate as CSV with a JSON sidecar.
    Gen(GenArgs),
    /// Cox fit-failure rate per fixed baseline shape.
    Probe(ProbeCli),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory (overrides the manifest's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Use 10000 replicates per scenario.
    #[arg(long)]
    full_scale: bool,
    /// Restrict the grid to a single correlation value.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    include_event_indicator: bool,
    #[arg(long)]
    mix: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    /// results.csv written by `run`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "selection_accuracy")]
    panel: Panel,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Zero-based position of the scenario in the expanded grid.
    #[arg(long, default_value_t = 0)]
    scenario: usize,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeCli {
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = vec![0.1, 0.5, 1.0, 2.0, 4.0])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    censor_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV destination; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Run(a) => {
            let overrides = Overrides {
                seed: a.seed,
                replicates: a.replicates,
                full_scale: a.full_scale,
                rho: a.rho,
                include_event_indicator: a.include_event_indicator,
                mix: a.mix,
            };
            let manifest = overrides.apply(RunManifest::load(&a.manifest)?)?;
            let out = a
                .out
                .or_else(|| manifest.output_dir.clone())
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
            cmd_run(&manifest, &out, |msg| eprintln!("{msg}"))?;
        }
        Command::Plot(a) => cmd_plot(&a.input, a.panel, a.rho, &a.out)?,
        Command::Gen(a) => {
            let overrides = Overrides { seed: a.seed, replicates: a.replicates, ..Overrides::default() };
            let manifest = overrides.apply(RunManifest::load(&a.manifest)?)?;
            let sidecar = cmd_gen(&manifest, a.scenario, a.replicate, &a.out)?;
            eprintln!("wrote {} and {}", a.out.display(), sidecar.display());
        }
        Command::Probe(a) => {
            let args = ProbeArgs {
                alphas: a.alphas,
                n: a.n,
                censor_rate: a.censor_rate,
                rho: a.rho,
                replicates: a.replicates,
                seed: a.seed,
            };
            let (_, bytes) = cmd_probe(&args, a.out.as_deref())?;
            if a.out.is_none() {
                std::io::stdout().write_all(&bytes).map_err(|e| CliError::io("<stdout>", e))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("survsel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
