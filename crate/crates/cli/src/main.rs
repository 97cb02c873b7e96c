use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mel_cli::{cmd_family, cmd_gen, cmd_simulate, cmd_train, cmd_verify_theory, CliError, ExperimentConfig, DEFAULT_P};
use mel_core::failover::{Budget, PlacementPolicy};
use mel_core::Strategy;
use serde::Serialize;

/// Multi-level ensemble experiments. Set MEL_THREADS to cap worker threads.
#[derive(Parser)]
#[command(name = "mel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset as CSV.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the synthetic generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Train the configured strategies over the seed list.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Repeat to run several; defaults to the config's list.
        #[arg(long, value_parser = parse_strategy)]
        strategy: Vec<Strategy>,
        /// Repeat to run several; defaults to the config's list.
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Check the information identity and generalization bounds exhaustively.
    VerifyTheory {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Failover probability; repeat for several.
        #[arg(long)]
        p: Vec<f64>,
        #[arg(long)]
        json: bool,
    },
    /// List the ensembles that fit a resource budget.
    Family {
        #[arg(long)]
        config: PathBuf,
        /// Parameter budget or "inf".
        #[arg(long)]
        budget: Option<Budget>,
        #[arg(long)]
        json: bool,
    },
    /// Run a failover scenario.
    Simulate {
        /// Experiment config with a `scenario` entry.
        #[arg(long, required_unless_present = "scenario", conflicts_with = "scenario")]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PlacementPolicy>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).map_err(|e| e.to_string())
}

/// Prints JSON or the human rendering; a closed pipe (`| head`) is not an
/// error.
fn emit<T: Serialize>(json: bool, value: &T, human: impl FnOnce(&mut String)) {
    let mut text = String::new();
    if json {
        text = serde_json::to_string_pretty(value).expect("outcomes serialize");
        text.push('\n');
    } else {
        human(&mut text);
    }
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen { config, seed, out, json } => {
            let config = ExperimentConfig::load(&config)?;
            let g = cmd_gen(&config, seed, out.as_deref())?;
            emit(json, &g, |out| {
                let _ = writeln!(out, "wrote {} rows to {}\nsha256 {}", g.rows, g.path.display(), g.digest);
            });
        }
        Command::Train { config, strategy, seed, out, json } => {
            let config = ExperimentConfig::load(&config)?;
            let strategies = (!strategy.is_empty()).then_some(strategy.as_slice());
            let seeds = (!seed.is_empty()).then_some(seed.as_slice());
            let t = cmd_train(&config, strategies, seeds, out.as_deref())?;
            emit(json, &t.summary, |out| {
                for (strategy, accs) in &t.summary.mean_test_accuracy {
                    let cells: Vec<String> = accs.iter().map(|(s, a)| format!("{s}={a:.4}")).collect();
                    let _ = writeln!(out, "{:<11} {}", strategy.as_str(), cells.join("  "));
                }
                let _ = writeln!(out, "outputs {}\nsha256 {}", t.out_dir.display(), t.digest);
            });
        }
        Command::VerifyTheory { count, seed, p, json } => {
            let p = if p.is_empty() { DEFAULT_P.to_vec() } else { p };
            let s = cmd_verify_theory(count, seed, &p)?;
            emit(json, &s, |out| {
                let _ = writeln!(out, "instances {}  p {:?}", s.count, s.p);
                let _ = writeln!(out, "max |identity residual| {:.3e}", s.max_identity_residual);
                let _ = writeln!(
                    out,
                    "violations: identity {}  lemma {}  proposition {}  data-processing {}",
                    s.identity_failures, s.lemma_failures, s.proposition_failures, s.data_processing_failures
                );
            });
            if !s.passed() {
                return Err(CliError::Verification("theory checks reported violations".into()));
            }
        }
        Command::Family { config, budget, json } => {
            let config = ExperimentConfig::load(&config)?;
            let family =
                config.family.as_ref().ok_or_else(|| CliError::Config("family: missing from config".into()))?;
            let entries = cmd_family(family, budget)?;
            emit(json, &entries, |out| {
                let _ = writeln!(out, "{:>6}  {:<16} {:>10}", "blocks", "downstream", "demand");
                for e in &entries {
                    let _ = writeln!(out, "{:>6}  {:<16} {:>10}", e.blocks, e.downstream, e.demand);
                }
            });
        }
        Command::Simulate { config, scenario, policy, out, json } => {
            let (scenario, default_out) = match (config, scenario) {
                (Some(c), _) => {
                    let config = ExperimentConfig::load(&c)?;
                    let path = config
                        .scenario
                        .clone()
                        .ok_or_else(|| CliError::Config("scenario: missing from config".into()))?;
                    (path, config.out_dir)
                }
                (None, Some(s)) => {
                    let dir = s.parent().unwrap_or(Path::new(".")).join("out");
                    (s, dir)
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            let r = cmd_simulate(&scenario, policy, out.as_deref().unwrap_or(&default_out))?;
            emit(json, &r.summary, |out| {
                let s = &r.summary;
                let _ = writeln!(out, "requests {}", s.requests);
                let _ = writeln!(
                    out,
                    "ensemble  availability {:.4}  mean {} ms  p99 {} ms",
                    s.availability,
                    fmt_opt(s.mean_latency_ms),
                    fmt_opt(s.p99_latency_ms)
                );
                if let Some(a) = s.split_availability {
                    let _ = writeln!(
                        out,
                        "split     availability {a:.4}  mean {} ms  p99 {} ms",
                        fmt_opt(s.split_mean_latency_ms),
                        fmt_opt(s.split_p99_latency_ms)
                    );
                }
                let usage: Vec<String> = s.subset_usage.iter().map(|(k, v)| format!("{k}:{v}")).collect();
                let _ = writeln!(out, "usage {}  retries {}", usage.join(" "), s.retries);
                let _ = writeln!(out, "records {}\nsha256 {}", r.records_path.display(), r.digest);
            });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
