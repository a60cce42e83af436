use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metrocomp::experiments::{run_experiment, ExperimentConfig};
use metrocomp::report::emit_report;
use metrocomp::selftest::run_selftest;
use metrocomp::Error;

/// Multiparameter quantum estimation bounds and compatibility checks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to the config's `output`, then `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the invariant suite. Exits with 1 if any check fails.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(&config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let record = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let files = match emit_report(&record, &out) {
        Ok(f) => f,
        Err(e) => return fail(&e),
    };
    println!(
        "{}: {} rows in {:.2}s -> {}, {}",
        record.experiment.name(),
        record.raw.rows.len(),
        record.timing.wall_time_seconds,
        files.json.display(),
        files.csv.display()
    );
    if record.failed {
        for f in &record.failures {
            eprintln!("not converged: {f}");
        }
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

fn selftest(seed: u64) -> ExitCode {
    let report = run_selftest(seed);
    for c in &report.checks {
        println!("{} {:<52} {} [{:.2}s]", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail, c.seconds);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {} failed", report.checks.len(), failed);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seed, jobs } => run(config, out, seed, jobs),
        Command::Selftest { seed } => selftest(seed),
    }
}
