//! Experiment runner: single runs, seed sweeps, and the analytical
//! verification suite. Exit codes: 0 success, 2 configuration error, 3 IO
//! error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use byzsim::config::{parse_config, Experiment};
use byzsim::engine;
use byzsim::error::{Result, SimError};
use byzsim::metrics::{emit_csv, emit_summary_csv, MetricsSeries};
use byzsim::par;

#[derive(Parser)]
#[command(name = "byzsim", version, about = "Byzantine-robust compressed-SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured run for one or more seeds, one CSV each.
    Run {
        /// Experiment file (flat key=value lines).
        #[arg(long)]
        config: PathBuf,
        /// Override the seed list from the file; repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
    },
    /// Execute a seed sweep and write per-seed CSVs plus a mean/stderr
    /// companion file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed list overriding the file.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Run the analytical oracle suite and report one line per check.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, seeds } => execute(&config, seeds, false),
        Command::Sweep { config, seeds } => execute(&config, seeds, true),
        Command::Verify => verify(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("byzsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_experiment(path: &Path, seed_override: Vec<u64>) -> Result<Experiment> {
    let text = fs::read_to_string(path)?;
    let mut exp = parse_config(&text)?;
    if !seed_override.is_empty() {
        exp.seeds = seed_override;
    }
    Ok(exp)
}

fn run_one_seed(exp: &Experiment, seed: u64) -> Result<MetricsSeries> {
    let mut cfg = exp.run.clone();
    cfg.seed = seed;
    let source = exp.data.load()?;
    engine::run(&cfg, &source, exp.partition)
}

fn csv_path(exp: &Experiment, seed: u64) -> PathBuf {
    exp.out_dir.join(format!("{}_s{seed}.csv", exp.prefix))
}

fn write_series(exp: &Experiment, seed: u64, series: &MetricsSeries) -> Result<PathBuf> {
    fs::create_dir_all(&exp.out_dir)?;
    let path = csv_path(exp, seed);
    let mut buf = Vec::new();
    emit_csv(series, &mut buf, exp.emit_wire_variance)?;
    fs::write(&path, buf)?;
    Ok(path)
}

fn execute(config: &Path, seed_override: Vec<u64>, summarize: bool) -> Result<ExitCode> {
    let exp = load_experiment(config, seed_override)?;
    // Seeds are independent runs; fan them out when allowed.
    let results: Vec<Result<MetricsSeries>> =
        par::map_indexed(exp.seeds.len(), |i| run_one_seed(&exp, exp.seeds[i]));
    let mut seriess = Vec::with_capacity(results.len());
    for r in results {
        seriess.push(r?);
    }
    for (seed, series) in exp.seeds.iter().zip(&seriess) {
        let path = write_series(&exp, *seed, series)?;
        let last = series.records.last().expect("at least the init record");
        println!(
            "seed {seed}: {} rounds, final loss {:.6}, xhat_grad_norm_sq {:.6e} -> {}",
            series.records.len() - 1,
            last.loss,
            series.xhat_grad_norm_sq,
            path.display()
        );
    }
    if summarize {
        fs::create_dir_all(&exp.out_dir)?;
        let path = exp.out_dir.join(format!("{}_summary.csv", exp.prefix));
        let mut buf = Vec::new();
        emit_summary_csv(&seriess, &mut buf)?;
        fs::write(&path, buf)?;
        println!("summary -> {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn verify() -> Result<ExitCode> {
    let started = std::time::Instant::now();
    let lines = byzsim::verify::run_suite();
    let mut all_ok = true;
    for line in &lines {
        let status = if line.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({})", line.name, line.detail);
        all_ok &= line.passed;
    }
    println!(
        "verify: {}/{} checks passed in {:.2}s",
        lines.iter().filter(|l| l.passed).count(),
        lines.len(),
        started.elapsed().as_secs_f64()
    );
    if all_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        Err(SimError::Protocol("verification suite failed".into()))
    }
}
