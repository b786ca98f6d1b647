use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use codinet::commands;
use codinet::config::Config;
use codinet::pathlog::{parse_features, read_path_log};
use codinet::CliError;

#[derive(Parser)]
#[command(name = "codinet", version, about = "Train and inspect gated residual networks with learned routing")]
struct Cli {
    /// Output directory (default: $CODINET_OUT, else ./codinet-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Two-stage training; writes checkpoint, metrics and summary.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set loss.gamma=0.1 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Binary-gated evaluation of a checkpoint; writes the path log and reports.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Statistics over a path log.
    Analyze {
        #[arg(long)]
        log: PathBuf,
        /// One feature row per log record, for the similarity correlation.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Second path log for a side-by-side comparison.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, default_value_t = codinet_core::analytics::PAIR_CAP)]
        pair_cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// One training run per gamma (and seed); reports cost and accuracy by gamma.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        /// Seeds per gamma (default: train.seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("CODINET_OUT").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("codinet-out"))
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serialize"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = out_dir(cli.out);
    let verbose = !cli.quiet;
    match cli.cmd {
        Cmd::Train { config, set } => {
            let cfg = Config::load(config.as_deref(), &set)?;
            let t = commands::train(&cfg, Some(&out), verbose)?;
            print_json(&t.summary);
        }
        Cmd::Eval { config, checkpoint, set } => {
            let cfg = Config::load(config.as_deref(), &set)?;
            let e = commands::eval(&cfg, &checkpoint, Some(&out))?;
            print_json(&e.report);
        }
        Cmd::Analyze { log, features, compare, pair_cap, seed } => {
            let log = read_path_log(&log)?;
            let features = features.as_deref().map(read_features).transpose()?;
            let other = compare.as_deref().map(read_path_log).transpose()?;
            let r = commands::analyze(&log, features.as_deref(), other.as_ref(), pair_cap, seed, Some(&out))?;
            for n in &r.notices {
                eprintln!("notice: {n}");
            }
            print_json(&r);
        }
        Cmd::Sweep { config, gammas, seeds, set } => {
            let cfg = Config::load(config.as_deref(), &set)?;
            let seeds = if seeds.is_empty() { vec![cfg.train.seed] } else { seeds };
            let r = commands::sweep(&cfg, &gammas, &seeds, Some(&out), verbose)?;
            print_json(&r);
        }
    }
    Ok(())
}

fn read_features(p: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    parse_features(&std::fs::read_to_string(p).map_err(CliError::io(p))?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
