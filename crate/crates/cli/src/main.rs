use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covert_rsma::experiment::{evaluate_checkpoint, parse_config, run_experiment, write_rows, ExperimentSpec};
use covert_rsma::{Checkpoint, Regime, Result, Scheme, Sweep};

#[derive(Parser)]
#[command(name = "covert-rsma", version, about = "Covert rate-splitting downlink: PPO training, baselines and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every selected scheme at the configured operating point.
    Train(RunArgs),
    /// Sweep the transmit power (dB).
    SweepPower(RunArgs),
    /// Sweep the covert requirement ε.
    SweepEpsilon(RunArgs),
    /// Sweep the message-length interval (kilobits).
    SweepBlocklength(RunArgs),
    /// Roll out a saved policy deterministically.
    Eval(EvalArgs),
    /// Check the numerical kernels against reference values.
    Selftest,
    /// Render SVG charts from metric CSVs.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`key = value` lines). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated schemes: P-RSMA, P-SDMA, G-RSMA, G-SDMA.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<String>>,
    /// Comma-separated regimes: FBL, IBL.
    #[arg(long, value_delimiter = ',')]
    regime: Option<Vec<String>>,
    /// Episodes (one update each) per run.
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated sweep grid; overrides the configured one.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file to write.
    #[arg(long, default_value = "eval.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV files written by `train` or a sweep.
    #[arg(required = true)]
    csv: Vec<PathBuf>,
    #[arg(long, default_value = "plots")]
    out: PathBuf,
    /// X-axis label.
    #[arg(long)]
    x_label: Option<String>,
}

fn build_spec(args: &RunArgs, sweep: Sweep) -> Result<ExperimentSpec> {
    let mut spec = match &args.config {
        Some(path) => parse_config(path)?,
        None => ExperimentSpec::default(),
    };
    if spec.sweep != sweep {
        spec.grid = sweep.default_grid();
    }
    spec.sweep = sweep;
    if let Some(g) = &args.grid {
        spec.grid = g.clone();
    }
    if let Some(s) = &args.seeds {
        spec.seeds = s.clone();
    }
    spec.apply_seed_env()?;
    if let Some(s) = &args.scheme {
        spec.schemes = s.iter().map(|x| x.parse()).collect::<Result<Vec<Scheme>>>()?;
    }
    if let Some(r) = &args.regime {
        spec.regimes = r.iter().map(|x| x.parse()).collect::<Result<Vec<Regime>>>()?;
    }
    if let Some(n) = args.updates {
        spec.episodes = n;
        spec.ppo.updates = n;
    }
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(args: &RunArgs, sweep: Sweep) -> Result<()> {
    let spec = build_spec(args, sweep)?;
    let out = run_experiment(&spec, &args.out, sweep == Sweep::None)?;
    println!("{}", out.series.display());
    println!("{}", out.summary.display());
    for c in &out.checkpoints {
        println!("{}", c.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => run(a, Sweep::None),
        Command::SweepPower(a) => run(a, Sweep::PowerDb),
        Command::SweepEpsilon(a) => run(a, Sweep::Epsilon),
        Command::SweepBlocklength(a) => run(a, Sweep::Blocklength),
        Command::Eval(a) => Checkpoint::load(&a.checkpoint)
            .and_then(|ck| evaluate_checkpoint(&ck, a.episodes, a.seed))
            .and_then(|rows| write_rows(&a.out, &rows))
            .map(|()| println!("{}", a.out.display())),
        Command::Selftest => {
            let checks = covert_rsma::selftest::run();
            let mut ok = true;
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return ExitCode::FAILURE;
            }
            Ok(())
        }
        Command::Plot(a) => covert_rsma::plot::render_plots(&a.csv, &a.out, a.x_label.as_deref()).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
