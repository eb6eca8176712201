use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stochrec_cli::{plan, run_with_workers, ExperimentConfig, Verb};

/// Stochastic recursions on random digraphs: reproducible experiments.
#[derive(Debug, Parser)]
#[command(name = "stochrec", version)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    verb: Verb,
    /// TOML or JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV tables and summary.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Print the resolved plan and exit without sampling.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if cli.dry_run {
        let text = serde_json::to_string_pretty(&plan(cli.verb, &cfg)).expect("plan serializes");
        let _ = writeln!(std::io::stdout(), "{text}");
        return ExitCode::SUCCESS;
    }
    let report = match run_with_workers(cli.verb, &cfg, cli.workers) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = report.write(&cli.out) {
        eprintln!("error: {e:#}");
        return ExitCode::from(3);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let _ = writeln!(
        std::io::stdout(),
        "{} {}: {}",
        report.verb,
        if report.pass { "PASS" } else { "FAIL" },
        cli.out.join("summary.json").display()
    );
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
