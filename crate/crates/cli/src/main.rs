//! `direct`: generate pools, run and aggregate experiments, run the
//! self-checks and serve annotation sessions.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use direct_core::baselines::extra_cut_probability_mc;
use direct_core::harness::complexity::complexity_smoke;
use direct_core::harness::config::ExperimentConfig;
use direct_core::harness::log::ExperimentLog;
use direct_core::harness::report::{aggregate, write_report};
use direct_core::harness::verify::run_verification;
use direct_core::harness::{run_experiment, write_outputs};
use direct_core::pool::{generate_synthetic, Preset};

#[derive(Parser)]
#[command(name = "direct", version, about = "Threshold-based active learning under class imbalance and label noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic Gaussian-mixture pool as JSON lines.
    Generate(GenerateArgs),
    /// Run an experiment from a TOML config and write its log.
    Run(RunArgs),
    /// Aggregate seed logs into mean and standard-error curves.
    Report(ReportArgs),
    /// Run the built-in correctness checks; exits 1 on failure.
    Verify(VerifyArgs),
    /// Estimate the extra-cut probability of bisection under label noise.
    Mc(McArgs),
    /// Time selection for growing pool sizes.
    Complexity(ComplexityArgs),
    /// Start the annotation HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Per-class sizes, e.g. 100,900.
    #[arg(long, value_delimiter = ',', conflicts_with = "preset", required_unless_present = "preset")]
    counts: Vec<usize>,
    /// Class structure of a benchmark dataset, e.g. cifar10-2.
    #[arg(long)]
    preset: Option<String>,
    /// Pool size for a preset (defaults to the dataset's size).
    #[arg(long, requires = "preset")]
    size: Option<usize>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.5)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output_dir`; without either the log goes to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Defaults to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct McArgs {
    #[arg(long, default_value_t = 100)]
    n1: usize,
    #[arg(long, default_value_t = 900)]
    n2: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
    eta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "20,40")]
    b: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ComplexityArgs {
    #[arg(long, value_delimiter = ',', default_value = "5000,10000,20000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    b_train: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Persist sessions here and reload them on start.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

fn output(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let counts = match &args.preset {
        Some(name) => Preset::find(name)?.counts(args.size)?,
        None => args.counts,
    };
    let pool = generate_synthetic(&counts, args.dim, args.separation, args.seed)?;
    pool.write_jsonl(&args.out)?;
    eprintln!(
        "wrote {} examples, {} classes, imbalance ratio {:.4} to {}",
        pool.len(),
        pool.num_classes(),
        pool.imbalance_ratio(),
        args.out.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let log = run_experiment(&config)?;
    match args.out.or(config.output_dir.clone()) {
        Some(dir) => {
            let path = write_outputs(&log, &dir)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            log.validate(config.b_train)?;
            log.write_csv(io::stdout().lock())?;
        }
    }
    Ok(())
}

fn report(args: ReportArgs) -> anyhow::Result<()> {
    let logs = args
        .logs
        .iter()
        .map(|p| ExperimentLog::read_file(p).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_report(&aggregate(&logs)?, output(args.out.as_ref())?)?;
    Ok(())
}

fn verify(args: VerifyArgs) -> anyhow::Result<bool> {
    let report = run_verification(args.trials, args.seed)?;
    for check in &report.checks {
        println!("{} {}: {}", if check.passed { "PASS" } else { "FAIL" }, check.name, check.detail);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", report.checks.len() - failed, report.checks.len());
    Ok(failed == 0)
}

fn mc(args: McArgs) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "eta,b,trials,bound,observed")?;
    for &eta in &args.eta {
        for &b in &args.b {
            let est = extra_cut_probability_mc(args.n1, args.n2, eta, b, args.trials, args.seed)?;
            writeln!(out, "{},{},{},{},{}", est.eta, est.b, est.trials, est.bound, est.observed)?;
        }
    }
    Ok(())
}

fn complexity(args: ComplexityArgs) -> anyhow::Result<()> {
    let report = complexity_smoke(&args.n, args.k, args.b_train, args.reps)?;
    let mut out = io::stdout().lock();
    writeln!(out, "n,k,b_train,seconds")?;
    for row in &report.rows {
        writeln!(out, "{},{},{},{}", row.n, row.k, row.b_train, row.seconds)?;
    }
    writeln!(out, "# exponent: {:.3}", report.exponent)?;
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let state = match &args.data_dir {
        Some(dir) => direct_service::AppState::open(dir)?,
        None => direct_service::AppState::in_memory(),
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(direct_service::serve(args.addr, state))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Verify(a) => match verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Mc(a) => mc(a),
        Command::Complexity(a) => complexity(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
