mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::RunError;
use crate::report::{write_atomic, Run, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Subcommand {
    FlowTrace,
    FlowCheck,
    CocycleCheck,
    GeneratorCheck,
    CoboundaryCheck,
    TransferCheck,
    Gpv,
    BlochGap,
    BlochGapAuto,
    Separability,
}

impl Subcommand {
    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

/// Runs one semiflow experiment from a JSON config and writes CSV tables plus
/// a JSON report to the output directory.
#[derive(Debug, Parser)]
#[command(name = "semiflow-lab", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seed for random test points.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn configure_threads() {
    if let Some(n) = std::env::var("SEMIFLOW_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(cmd: Subcommand, cfg: &config::ExperimentConfig, seed: u64, run: &mut Run) -> Result<(), RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match cmd {
        Subcommand::FlowTrace => commands::flow_trace(cfg, run),
        Subcommand::FlowCheck => commands::flow_check(cfg, &mut rng, run),
        Subcommand::CocycleCheck => commands::cocycle_check(cfg, &mut rng, run),
        Subcommand::GeneratorCheck => commands::generator_check(cfg, run),
        Subcommand::CoboundaryCheck => commands::coboundary_check(cfg, &mut rng, run),
        Subcommand::TransferCheck => commands::transfer_check(cfg, &mut rng, run),
        Subcommand::Gpv => commands::gpv(cfg, run),
        Subcommand::BlochGap => commands::bloch_gap_case1(cfg, run),
        Subcommand::BlochGapAuto => commands::bloch_gap_case2(cfg, run),
        Subcommand::Separability => commands::separability(cfg, run),
    }
}

fn epoch_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> std::io::Result<()> {
    let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("cannot create {}: {e}", cli.out.display());
        return ExitCode::from(2);
    }
    let started = epoch_secs();
    let clock = Instant::now();

    let loaded = match config::load(&cli.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let mut run = Run::new(&cli.out);
    let outcome = dispatch(cli.subcommand, &loaded.config, cli.seed, &mut run);
    let error = outcome.as_ref().err().map(|e| e.to_string());
    let passed = error.is_none() && !run.verdicts.is_empty() && run.verdicts.iter().all(|v| v.passed);

    let report = RunReport {
        experiment: cli.subcommand.name(),
        config_digest: loaded.digest,
        seed: cli.seed,
        passed,
        verdicts: run.verdicts,
        tables: run.tables,
        error,
    };
    let metadata = serde_json::json!({
        "experiment": report.experiment,
        "started_unix": started,
        "wall_clock_secs": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    if let Err(e) = write_json(&cli.out.join("report.json"), &report)
        .and_then(|_| write_json(&cli.out.join("metadata.json"), &metadata))
    {
        eprintln!("cannot write report: {e}");
        return ExitCode::from(2);
    }

    for v in &report.verdicts {
        println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    match (&report.error, outcome) {
        (Some(msg), Err(RunError::Config(_))) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        (Some(msg), _) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        _ if passed => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    }
}
