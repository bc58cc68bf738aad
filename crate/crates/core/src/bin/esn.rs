use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use esn::config::LoadedConfig;
use esn::experiments::{self, ExperimentResult};
use esn::EsnError;

#[derive(Parser)]
#[command(name = "esn", version, about = "Extremal shot noise experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment named in the config.
    Run {
        config: PathBuf,
        /// Output directory for summary.json and the CSV tables.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to ESN_THREADS, then the core count.
        #[arg(long)]
        threads: Option<usize>,
        /// `key=value` with dotted keys, JSON values.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the invariant suite on the config's shape and weight.
    Validate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn threads(flag: Option<usize>) -> Result<usize, EsnError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("ESN_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| EsnError::Config {
            pointer: String::new(),
            message: format!("ESN_THREADS must be a positive integer, got `{v}`"),
        }),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn execute(cmd: Cmd) -> Result<(ExperimentResult, Option<PathBuf>), EsnError> {
    match cmd {
        Cmd::Run { config, out, seed, threads: t, mut overrides } => {
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            let cfg = LoadedConfig::from_path(&config, &overrides)?;
            Ok((experiments::run(&cfg, threads(t)?)?, Some(out)))
        }
        Cmd::Validate { config, out, threads: t } => {
            let cfg = LoadedConfig::from_path(&config, &[])?;
            Ok((experiments::validate(&cfg, threads(t)?)?, out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match execute(cli.cmd) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = out {
        if let Err(e) = result.write(&dir) {
            eprintln!("error: cannot write {}: {e}", dir.display());
            return ExitCode::from(1);
        }
    }
    println!("{}", serde_json::to_string_pretty(&result.summary_json()).expect("summary serializes"));
    if result.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
