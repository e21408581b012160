//! `manismooth` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manismooth::harness::{parse_config_with_warnings, run_with_warnings, write_results, ExperimentKind, HarnessError};

#[derive(Parser)]
#[command(name = "manismooth", version, about = "Monte Carlo experiments for kernel smoothing on manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normality experiments on the circle or torus.
    Simulate(RunArgs),
    /// Error rates over a list of sample sizes.
    Rates(RunArgs),
    /// Graph Laplacian statistic and its identity check.
    Laplacian(RunArgs),
    /// Heat kernel signature against the exact circle value.
    Hks(RunArgs),
    /// Nadaraya–Watson regression statistic.
    Regression(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the root seed from the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; created if missing. Defaults to `output` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn accepts(command: &Command, kind: ExperimentKind) -> bool {
    match command {
        Command::Simulate(_) => matches!(kind, ExperimentKind::BerryCircle | ExperimentKind::BerryTorus),
        Command::Rates(_) => kind == ExperimentKind::Rates,
        Command::Laplacian(_) => kind == ExperimentKind::Laplacian,
        Command::Hks(_) => kind == ExperimentKind::Hks,
        Command::Regression(_) => kind == ExperimentKind::Regression,
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Simulate(a) | Command::Rates(a) | Command::Laplacian(a) | Command::Hks(a) | Command::Regression(a) => a,
    };

    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_IO, format!("{}: {e}", args.config.display())),
    };
    let (mut cfg, warnings) = match parse_config_with_warnings(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, HarnessError::Config(e)),
    };
    if !accepts(&cli.command, cfg.experiment) {
        return fail(EXIT_CONFIG, format!("this subcommand cannot run a `{}` experiment", cfg.experiment.name()));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let Some(out) = args.out.clone().or_else(|| cfg.output.as_ref().map(PathBuf::from)) else {
        return fail(EXIT_CONFIG, "no output directory: pass --out or set `output` in the config");
    };
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            return fail(EXIT_CONFIG, format!("cannot configure {t} threads: {e}"));
        }
    }
    if let Err(e) = std::fs::create_dir_all(&out) {
        return fail(EXIT_IO, format!("{}: {e}", out.display()));
    }

    let res = run_with_warnings(&cfg, warnings);
    if let Err(e) = write_results(&res, &out) {
        return fail(EXIT_IO, e);
    }
    if !args.quiet {
        for a in &res.advisories {
            eprintln!("advisory: {a}");
        }
        for row in &res.summary {
            let ks = row.ks.map(|k| format!(" ks={k:.4}")).unwrap_or_default();
            let ratio = row.var_ratio.map(|r| format!(" var/sigma2={r:.3}")).unwrap_or_default();
            let point = row.point.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            println!("{} point={point} n={} mean={:.4}{ratio}{ks}", row.statistic, row.n, row.mean);
        }
        println!("wrote {}", out.display());
    }
    match &res.failure {
        Some(msg) => fail(EXIT_NUMERIC, msg),
        None => ExitCode::SUCCESS,
    }
}
