use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use causet::synth;
use causet_cli::compare::{compare, load_report};
use causet_cli::error::{io_err, CliError, Context};
use causet_cli::query::to_json;
use causet_cli::spec::SEED_ENV;
use causet_cli::{resolve_seed, run_query, run_validation, QuerySpec, Result, ValidationConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "causet", version, about = "Causal-effect estimation from a DAG and a table")]
struct Cli {
    /// Seed for every random draw (falls back to the spec, then CAUSET_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports and plot data.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with known effects (stdout without --out).
    Synth {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = synth::MIN_FEATURES)]
        p: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Identify and estimate the effect of a query spec.
    Estimate { spec: PathBuf },
    /// As `estimate`, then run the spec's refuters.
    Refute { spec: PathBuf },
    /// Fit every meta-learner on repeated synthetic splits and score them.
    Validate {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
    /// Consolidate query reports into one table.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn emit(text: &str) -> Result<()> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        })
}

fn run(cli: Cli) -> Result<()> {
    let machine = cli.format == Format::Machine;
    match cli.command {
        Command::Synth { n, p, sigma } => {
            let seed = resolve_seed(cli.seed, None, env_seed().as_deref())?;
            let set = synth::generate(n, p, sigma, seed).context(|| "synth".into())?;
            let mut buf = Vec::new();
            set.write_csv(&mut buf).context(|| "synth".into())?;
            match cli.out {
                None => emit(&String::from_utf8_lossy(&buf)),
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    let path = dir.join("synth.csv");
                    std::fs::write(&path, &buf).map_err(io_err(&path))?;
                    if machine {
                        emit(&to_json(&serde_json::json!({"path": path, "rows": n, "seed": seed})))
                    } else {
                        emit(&format!("wrote {} rows to {} (seed {seed})\n", n, path.display()))
                    }
                }
            }
        }
        Command::Estimate { ref spec } | Command::Refute { ref spec } => {
            let refute = matches!(cli.command, Command::Refute { .. });
            let spec = QuerySpec::load(spec)?;
            let seed = resolve_seed(cli.seed, spec.seed, env_seed().as_deref())?;
            let result = run_query(&spec, seed, refute)?;
            if let Some(dir) = &cli.out {
                result.write(dir)?;
            }
            if machine {
                emit(&to_json(&result.report))
            } else {
                emit(&result.report.to_table())
            }
        }
        Command::Validate { n, repetitions, sigma } => {
            let seed = resolve_seed(cli.seed, None, env_seed().as_deref())?;
            let config = ValidationConfig {
                n,
                repetitions,
                sigma,
                seed,
                ..ValidationConfig::default()
            };
            let result = run_validation(&config)?;
            if let Some(dir) = &cli.out {
                result.write(dir)?;
            }
            if machine {
                emit(&to_json(&result.report))
            } else {
                emit(&result.report.to_table())
            }
        }
        Command::Compare { reports } => {
            let loaded = reports.iter().map(|p| load_report(p)).collect::<Result<Vec<_>>>()?;
            let cmp = compare(&loaded)?;
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
                let path = dir.join("comparison.json");
                std::fs::write(&path, to_json(&cmp)).map_err(io_err(&path))?;
            }
            for w in &cmp.warnings {
                eprintln!("warning: {w}");
            }
            if machine {
                emit(&to_json(&cmp))
            } else {
                emit(&cmp.to_table())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let block = serde_json::json!({"error": {"kind": "UsageError", "message": e.to_string().trim()}});
            eprintln!("{}", serde_json::to_string_pretty(&block).expect("json"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.to_block()).expect("json"));
            ExitCode::FAILURE
        }
    }
}
