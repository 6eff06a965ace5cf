mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "ogss", version, about = "Oracle-guided soft shielding for chess move selection")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Upper bound on concurrently played games.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the built-in material evaluator instead of a UCI engine.
    #[arg(long, global = true)]
    mock_oracle: bool,
    /// UCI engine executable (overrides config and OGSS_ENGINE).
    #[arg(long, global = true)]
    engine: Option<PathBuf>,
    #[arg(long, global = true)]
    max_plies: Option<usize>,
    #[arg(long, global = true)]
    opening_plies: Option<usize>,
    #[arg(long, global = true)]
    label_limit: Option<String>,
    #[arg(long, global = true)]
    opponent_limit: Option<String>,
    #[arg(long, global = true)]
    risk_limit: Option<String>,
    /// -v for progress, -vv for engine traffic.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the imitation dataset from PGN files.
    Ingest {
        #[arg(long = "pgn")]
        pgn: Vec<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        winner_only: bool,
    },
    /// Train the move-prediction model on the imitation dataset.
    TrainPolicy {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Play exploration games against the oracle and aggregate corrections.
    Explore {
        #[arg(long)]
        games: Option<usize>,
        #[arg(long)]
        rounds: Option<u32>,
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Train the blunder model on the collected examples.
    TrainBlunder {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Play evaluation games for each method and write reports.
    Evaluate {
        #[arg(long)]
        games: Option<usize>,
        /// Method name; repeatable. Defaults to the full method set.
        #[arg(long = "strategy")]
        strategies: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        bits: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Risk source for shielded methods: model or oracle.
        #[arg(long)]
        risk: Option<String>,
    },
    /// Sweep the utility trade-off parameter.
    SweepAlpha {
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long)]
        games: Option<usize>,
        #[arg(long)]
        risk: Option<String>,
    },
    /// Count leaf nodes of the legal move tree.
    Perft {
        #[arg(long, default_value = "startpos")]
        fen: String,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        divide: bool,
    },
    /// Check that the configured engine answers the protocol.
    EngineCheck,
}

pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn runtime(op: &str, e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(format!("{op}: {e}"))
    }

    pub fn usage(op: &str, e: impl std::fmt::Display) -> CliError {
        CliError::Usage(format!("{op}: {e}"))
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::usage("config::load", e))?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(v) = &cli.run_dir {
        cfg.run_dir = v.clone();
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.jobs {
        cfg.jobs = v;
    }
    if cli.mock_oracle {
        cfg.mock_oracle = true;
    }
    if let Some(v) = &cli.engine {
        cfg.engine_path = Some(v.clone());
    }
    if let Some(v) = cli.max_plies {
        cfg.max_plies = v;
    }
    if let Some(v) = cli.opening_plies {
        cfg.opening_plies = v;
    }
    for (slot, v) in [
        (&mut cfg.label_limit, &cli.label_limit),
        (&mut cfg.opponent_limit, &cli.opponent_limit),
        (&mut cfg.risk_limit, &cli.risk_limit),
    ] {
        if let Some(v) = v {
            *slot = v.clone();
        }
    }
    commands::apply_overrides(&mut cfg, &cli.command)?;
    cfg.validate().map_err(|e| CliError::usage("config::validate", e))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = build_config(&cli).and_then(|cfg| commands::run(&cfg, &cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
