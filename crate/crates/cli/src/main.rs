//! `mlm-budget`: data preparation, training, sweeps and cost reports.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::Config;
use error::{CliError, Result};

/// Environment variable fixing the worker thread count.
pub const THREADS_ENV: &str = "BUDGET_MLM_THREADS";

#[derive(Parser)]
#[command(
    name = "mlm-budget",
    version,
    about = "Masked-LM pretraining under a fixed time budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// `key = value` config file applied over the built-in defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct ModelArgs {
    /// Directory produced by `prepare-data`.
    #[arg(long, value_name = "DIR")]
    shards: Option<PathBuf>,
    /// tiny, small, large or custom.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    budget_seconds: Option<f64>,
    #[arg(long)]
    micro_batch: Option<usize>,
    /// wall, cpu, or virtual:SECONDS_PER_STEP[:SECONDS_PER_SAMPLE].
    #[arg(long)]
    clock: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize, pack, split, mask and shard a text corpus.
    PrepareData {
        #[command(flatten)]
        common: Common,
        /// A text file or a directory of `*.txt` files.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        vocab: Option<PathBuf>,
        /// File naming the special tokens (`pad = [PAD]` lines).
        #[arg(long, value_name = "FILE")]
        specials: Option<PathBuf>,
        #[arg(long)]
        seq_len: Option<usize>,
        #[arg(long)]
        val_fraction: Option<f64>,
        #[arg(long)]
        copies: Option<usize>,
        #[arg(long)]
        mask_prob: Option<f64>,
    },
    /// Write a synthetic corpus and matching vocabulary.
    GenerateCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5_000_000)]
        bytes: usize,
        #[arg(long, default_value_t = 8000)]
        vocab_size: usize,
    },
    /// Train one configuration for the time budget.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        bsz: Option<usize>,
        #[arg(long)]
        peak_lr: Option<f64>,
        /// Warmup proportion in [0, 1).
        #[arg(long)]
        warmup: Option<f64>,
        #[arg(long)]
        days_factor: Option<f64>,
    },
    /// Run a hyperparameter grid with checkpoint pruning.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Grid file with `axis = v1, v2` lines.
        #[arg(long, value_name = "FILE")]
        grid: Option<PathBuf>,
        #[arg(long)]
        slots: Option<usize>,
        #[arg(long)]
        loss_threshold: Option<f64>,
        #[arg(long)]
        keep_fraction: Option<f64>,
    },
    /// Cost and throughput arithmetic.
    Report {
        #[command(subcommand)]
        which: ReportCommand,
    },
    /// Re-run a command from its manifest.
    Replay {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Output directory (defaults to the one recorded in the manifest).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ReportCommand {
    /// GB-hours and a dollar range for a hardware budget.
    Cost {
        #[arg(long)]
        gpus: u32,
        #[arg(long)]
        gpu_gb: f64,
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        rate_low: Option<f64>,
        #[arg(long)]
        rate_high: Option<f64>,
        /// Write the table here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Steps and days needed to cover a sample target.
    Table {
        /// Throughput table or a training metrics log.
        #[arg(long, value_name = "FILE")]
        throughput_log: PathBuf,
        #[arg(long, default_value_t = 256_000_000)]
        samples: u64,
        /// Write the table here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn set_opt<T: ToString>(cfg: &mut Config, key: &str, v: &Option<T>) -> Result<()> {
    match v {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

fn set_path(cfg: &mut Config, key: &str, v: &Option<PathBuf>) -> Result<()> {
    set_opt(cfg, key, &v.as_ref().map(|p| p.display().to_string()))
}

fn base_config(common: &Common) -> Result<Config> {
    let mut cfg = Config::default();
    if let Some(p) = &common.config {
        cfg.apply_file(p)?;
    }
    cfg.apply_overrides(&common.set)?;
    set_opt(&mut cfg, "seed", &common.seed)?;
    set_path(&mut cfg, "out", &common.out)?;
    Ok(cfg)
}

fn apply_model_args(cfg: &mut Config, m: &ModelArgs) -> Result<()> {
    set_path(cfg, "shards", &m.shards)?;
    set_opt(cfg, "preset", &m.preset)?;
    set_opt(cfg, "budget_seconds", &m.budget_seconds)?;
    set_opt(cfg, "micro_batch", &m.micro_batch)?;
    set_opt(cfg, "clock", &m.clock)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareData {
            common,
            input,
            vocab,
            specials,
            seq_len,
            val_fraction,
            copies,
            mask_prob,
        } => {
            let mut cfg = base_config(&common)?;
            set_path(&mut cfg, "input", &input)?;
            set_path(&mut cfg, "vocab", &vocab)?;
            set_path(&mut cfg, "specials", &specials)?;
            set_opt(&mut cfg, "seq_len", &seq_len)?;
            set_opt(&mut cfg, "val_fraction", &val_fraction)?;
            set_opt(&mut cfg, "mask_copies", &copies)?;
            set_opt(&mut cfg, "mask_prob", &mask_prob)?;
            commands::dispatch("prepare-data", cfg)
        }
        Command::GenerateCorpus {
            common,
            bytes,
            vocab_size,
        } => {
            let cfg = base_config(&common)?;
            commands::generate_corpus(&cfg, bytes, vocab_size)
        }
        Command::Train {
            common,
            model,
            bsz,
            peak_lr,
            warmup,
            days_factor,
        } => {
            let mut cfg = base_config(&common)?;
            apply_model_args(&mut cfg, &model)?;
            set_opt(&mut cfg, "bsz", &bsz)?;
            set_opt(&mut cfg, "peak_lr", &peak_lr)?;
            set_opt(&mut cfg, "warmup", &warmup)?;
            set_opt(&mut cfg, "days_factor", &days_factor)?;
            commands::dispatch("train", cfg)
        }
        Command::Sweep {
            common,
            model,
            grid,
            slots,
            loss_threshold,
            keep_fraction,
        } => {
            let mut cfg = base_config(&common)?;
            apply_model_args(&mut cfg, &model)?;
            set_path(&mut cfg, "grid", &grid)?;
            set_opt(&mut cfg, "slots", &slots)?;
            set_opt(&mut cfg, "loss_threshold", &loss_threshold)?;
            set_opt(&mut cfg, "keep_fraction", &keep_fraction)?;
            commands::dispatch("sweep", cfg)
        }
        Command::Report { which } => match which {
            ReportCommand::Cost {
                gpus,
                gpu_gb,
                hours,
                rate_low,
                rate_high,
                out,
            } => commands::emit(
                out.as_deref(),
                commands::report_cost(gpus, gpu_gb, hours, rate_low, rate_high)?,
            ),
            ReportCommand::Table {
                throughput_log,
                samples,
                out,
            } => commands::emit(out.as_deref(), commands::report_table(&throughput_log, samples)?),
        },
        Command::Replay { manifest, out } => {
            let mut cfg = Config::default();
            cfg.apply_file(&manifest)?;
            set_path(&mut cfg, "out", &out)?;
            let command = cfg.get("command").to_string();
            if command.is_empty() {
                return Err(CliError::Config(format!("{} records no command", manifest.display())));
            }
            commands::dispatch(&command, cfg)
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let res = init_threads().and_then(|_| run(cli));
    if let Err(e) = res {
        log::error!("{e}");
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
