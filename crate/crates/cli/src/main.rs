mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "settlesim", version, about = "Inter-operator settlement ledger simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write trace, block logs and metrics.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Seed sweep, e.g. `1..8` (end exclusive); runs in parallel.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory; falls back to `output_dir` in the config, then SETTLESIM_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a block log.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        /// Expected head digest (hex). Defaults to the `.head` file beside the log.
        #[arg(long)]
        head: Option<String>,
    },
    /// Flip one byte of a block record, writing `<ledger>.tampered`.
    Tamper {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        height: u64,
        #[arg(long)]
        byte: usize,
    },
    /// Run the traditional settlement pipeline on a config's workload.
    Baseline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; falls back to `output_dir` in the config, then SETTLESIM_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a finished run against the traditional baseline.
    Compare {
        #[arg(long)]
        sim: PathBuf,
        /// Config supplying the baseline plan and cost model; defaults to the run's own.
        #[arg(long)]
        baseline_config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Payback and NPV for one investment, or the reference table.
    Roi {
        #[arg(long, required_unless_present = "table")]
        investment: Option<u64>,
        #[arg(long, required_unless_present = "table")]
        savings: Option<u64>,
        #[arg(long, default_value_t = 5)]
        years: u32,
        #[arg(long, default_value_t = 0.0)]
        discount: f64,
        /// Print the reference table instead.
        #[arg(long)]
        table: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Time the single-threaded hot path.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        txs: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            seeds,
            out,
        } => cmd::run(config.as_deref(), seed, seeds.as_deref(), out),
        Command::Verify { ledger, head } => cmd::verify(&ledger, head.as_deref()),
        Command::Tamper { ledger, height, byte } => cmd::tamper(&ledger, height, byte),
        Command::Baseline { config, seed, out } => cmd::baseline(config.as_deref(), seed, out),
        Command::Compare {
            sim,
            baseline_config,
            format,
        } => cmd::compare(&sim, baseline_config.as_deref(), format),
        Command::Roi {
            investment,
            savings,
            years,
            discount,
            table,
            format,
        } => cmd::roi(investment, savings, years, discount, table, format),
        Command::Bench { txs, config } => cmd::bench(txs, config.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
