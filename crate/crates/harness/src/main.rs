use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coupling_harness::{resolve_threads, run_experiment, ExperimentConfig, ExperimentKind, Result};

#[derive(Parser)]
#[command(
    name = "spde-couple",
    version,
    about = "Reflection coupling experiments for 1-D stochastic PDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the Lyapunov functions and check their ODE properties.
    Lyapunov(RunArgs),
    /// Reflection-couple a reaction-diffusion pair and compare with the bounds.
    RdCouple(RunArgs),
    /// Staged coupling for Burgers.
    BurgersStaged(RunArgs),
    /// Estimate the constants of the staged construction.
    Calibrate(RunArgs),
    /// Compare the solver with exact OU samples.
    OuValidate(RunArgs),
    /// One-step generator identity for functions of the distance.
    GeneratorCheck(RunArgs),
    /// Print the checks recorded in summary.json files under a directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; HARNESS_THREADS takes precedence.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(kind: ExperimentKind, args: &RunArgs) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::defaults(kind),
    };
    if cfg.experiment != kind {
        return Err(coupling_harness::HarnessError::Config(format!(
            "config is for '{}', not '{}'",
            cfg.experiment, kind
        )));
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let threads = resolve_threads(args.threads, cfg.threads)?;
    let rep = run_experiment(&cfg, threads)?;
    rep.write(&args.out)?;
    for c in &rep.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("artifacts in {}", args.out.display());
    Ok(rep.all_passed())
}

fn summaries(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            summaries(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            found.push(p);
        }
    }
    Ok(())
}

fn report(out: &Path) -> Result<bool> {
    let mut found = Vec::new();
    summaries(out, &mut found)?;
    let mut ok = true;
    for p in &found {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        println!("{} ({})", p.display(), v["experiment"].as_str().unwrap_or("?"));
        for c in v["checks"].as_array().into_iter().flatten() {
            let passed = c["passed"].as_bool().unwrap_or(false);
            ok &= passed;
            println!(
                "  {} {}: {}",
                if passed { "PASS" } else { "FAIL" },
                c["name"].as_str().unwrap_or(""),
                c["detail"].as_str().unwrap_or("")
            );
        }
    }
    if found.is_empty() {
        println!("no summary.json under {}", out.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Lyapunov(a) => run(ExperimentKind::Lyapunov, a),
        Command::RdCouple(a) => run(ExperimentKind::RdCouple, a),
        Command::BurgersStaged(a) => run(ExperimentKind::BurgersStaged, a),
        Command::Calibrate(a) => run(ExperimentKind::Calibrate, a),
        Command::OuValidate(a) => run(ExperimentKind::OuValidate, a),
        Command::GeneratorCheck(a) => run(ExperimentKind::GeneratorCheck, a),
        Command::Report { out } => report(out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
