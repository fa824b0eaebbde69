use std::path::{Path, PathBuf};
use std::sync::Arc;

use mlm_budget::clock::ClockMode;
use mlm_budget::corpus::pipeline::{read_corpus_dir, split_documents, TRAIN_DIR, VALID_DIR};
use mlm_budget::corpus::synthetic::{SyntheticConfig, SyntheticLanguage};
use mlm_budget::corpus::{
    load_shards, prepare_documents, CorruptionSplit, MaskConfig, MaskedInstance, PrepareConfig, Vocab,
};
use mlm_budget::cost::{dollar_estimate, emit_table, gb_hours, parse_throughput_log, HardwareSpec, RateRange};
use mlm_budget::model::checkpoint::save_checkpoint;
use mlm_budget::model::ModelConfig;
use mlm_budget::optim::OptimizerHyper;
use mlm_budget::sweep::{
    build_grid, run_single, run_sweep, summarize_axis, Axis, PruneSchedule, SearchSpace, SweepOptions, TrainerTrial,
    TrainerTrialSettings, TrialConfig, TrialWorker, METRICS_FILE,
};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CORPUS_FILE: &str = "corpus.txt";

/// Runs a manifest-backed command with a fully merged config.
pub fn dispatch(command: &str, mut cfg: Config) -> Result<()> {
    let out = cfg.path("out")?;
    match command {
        "prepare-data" | "train" | "sweep" => write_manifest(&out, command, &mut cfg)?,
        other => return Err(CliError::Config(format!("`{other}` cannot be replayed"))),
    }
    match command {
        "prepare-data" => prepare_data(&cfg, &out),
        "train" => train(&cfg, &out),
        _ => sweep(&cfg, &out),
    }
}

fn read_documents(input: &Path) -> Result<Vec<String>> {
    if input.is_dir() {
        return Ok(read_corpus_dir(input)?);
    }
    let text =
        std::fs::read_to_string(input).map_err(|e| CliError::Data(format!("cannot read {}: {e}", input.display())))?;
    Ok(split_documents(&text))
}

fn mask_split(cfg: &Config) -> Result<CorruptionSplit> {
    let raw = cfg.get("mask_split");
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Config(format!("mask_split `{raw}` is not three comma-separated numbers")))?;
    match parts[..] {
        [mask, random, keep] => Ok(CorruptionSplit { mask, random, keep }),
        _ => Err(CliError::Config(format!(
            "mask_split `{raw}` needs exactly three parts"
        ))),
    }
}

fn prepare_data(cfg: &Config, out: &Path) -> Result<()> {
    let input = cfg.path("input")?;
    let vocab_path = cfg.path("vocab")?;
    let specials = match cfg.get("specials") {
        "" => None,
        s => Some(PathBuf::from(s)),
    };
    let vocab = Vocab::load(&vocab_path, specials.as_deref())?;
    let prep = PrepareConfig {
        seq_len: cfg.parse("seq_len")?,
        mask: MaskConfig {
            copies: cfg.parse("mask_copies")?,
            mask_prob: cfg.parse("mask_prob")?,
            split: mask_split(cfg)?,
        },
        val_fraction: cfg.parse("val_fraction")?,
        seed: cfg.parse("seed")?,
        shard_size: cfg.parse("shard_size")?,
    };
    let docs = read_documents(&input)?;
    let summary = prepare_documents(&docs, &vocab, &prep, out)?;
    log::info!(
        "wrote {} train instances in {} shards and {} validation sequences in {} shards (fingerprint {:016x})",
        summary.train_instances,
        summary.train_shards.len(),
        summary.valid_sequences,
        summary.valid_shards.len(),
        summary.fingerprint
    );
    Ok(())
}

struct Loaded {
    model: ModelConfig,
    train: Arc<Vec<MaskedInstance>>,
    valid: Arc<Vec<MaskedInstance>>,
}

fn load_data(cfg: &Config) -> Result<Loaded> {
    let shards = cfg.path("shards")?;
    let (th, train) = load_shards(&shards.join(TRAIN_DIR))?;
    let (vh, valid) = load_shards(&shards.join(VALID_DIR))?;
    if th.seed_fingerprint != vh.seed_fingerprint || th.seq_len != vh.seq_len || th.vocab_size != vh.vocab_size {
        return Err(CliError::Data(format!(
            "train and validation shards under {} come from different preparations",
            shards.display()
        )));
    }
    let (num_layers, hidden_size, num_heads, ffn_size) = cfg.shape()?;
    let model = ModelConfig {
        num_layers,
        hidden_size,
        num_heads,
        ffn_size,
        vocab_size: th.vocab_size as usize,
        seq_len: th.seq_len as usize,
        dropout: cfg.parse("dropout")?,
        attention_dropout: cfg.parse("attention_dropout")?,
        ..ModelConfig::default()
    };
    model.validate()?;
    log::info!(
        "loaded {} train and {} validation instances; model has {} parameters",
        train.len(),
        valid.len(),
        model.num_parameters()
    );
    Ok(Loaded {
        model,
        train: Arc::new(train),
        valid: Arc::new(valid),
    })
}

fn settings(cfg: &Config, model: ModelConfig) -> Result<TrainerTrialSettings> {
    let clock_raw = cfg.get("clock");
    let clock = ClockMode::parse(clock_raw)
        .ok_or_else(|| CliError::Config(format!("clock `{clock_raw}` is not wall, cpu or virtual:S[:P]")))?;
    Ok(TrainerTrialSettings {
        model,
        optim: OptimizerHyper {
            beta1: cfg.parse("adam_beta1")?,
            beta2: cfg.parse("adam_beta2")?,
            eps: cfg.parse("adam_eps")?,
            weight_decay: cfg.parse("weight_decay")?,
            grad_clip: cfg.parse("grad_clip")?,
        },
        micro_batch: cfg.parse("micro_batch")?,
        clock,
        calibration_steps: cfg.parse("calibration_steps")?,
    })
}

fn train(cfg: &Config, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let settings = settings(cfg, data.model)?;
    let budget: f64 = cfg.parse("budget_seconds")?;
    let trial = TrialConfig {
        trial_id: 0,
        bsz: cfg.parse("bsz")?,
        peak_lr: cfg.parse("peak_lr")?,
        warmup_proportion: cfg.parse("warmup")?,
        days_factor: cfg.parse("days_factor")?,
        seed: cfg.parse("seed")?,
    };
    let mut worker = TrainerTrial::new(trial, settings, data.train, data.valid).map_err(CliError::Config)?;
    let run = run_single(&mut worker, budget, &out.join(METRICS_FILE))?;
    if let Some(fault) = run.fault {
        return Err(CliError::Runtime(format!("training diverged: {fault}")));
    }
    let trainer = worker.trainer();
    save_checkpoint(&out.join(CHECKPOINT_FILE), &data.model, &trainer.state)?;
    match run.evals.last() {
        Some((t, loss)) => log::info!(
            "finished after {} steps and {t:.1}s of training; validation loss {loss:.4}",
            trainer.state.step
        ),
        None => log::info!("finished after {} steps without an evaluation", trainer.state.step),
    }
    Ok(())
}

fn sweep(cfg: &Config, out: &Path) -> Result<()> {
    let space = match cfg.get("grid") {
        "" => SearchSpace::default(),
        p => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {p}: {e}")))?;
            SearchSpace::parse(&text)?
        }
    };
    let grid = build_grid(&space, cfg.parse("seed")?)?;
    let options = SweepOptions {
        budget_seconds: cfg.parse("budget_seconds")?,
        slots: cfg.parse("slots")?,
        prune: PruneSchedule {
            checkpoint_1: cfg.parse("checkpoint_1")?,
            loss_threshold: cfg.parse("loss_threshold")?,
            checkpoint_2: cfg.parse("checkpoint_2")?,
            keep_fraction: cfg.parse("keep_fraction")?,
        },
    };
    options.validate()?;
    let data = load_data(cfg)?;
    let settings = settings(cfg, data.model)?;
    let report = run_sweep(&grid, &options, out, |t| {
        TrainerTrial::new(*t, settings, data.train.clone(), data.valid.clone())
            .map(|w| Box::new(w) as Box<dyn TrialWorker>)
    })?;
    report.write(out)?;
    if !report.finishers().is_empty() {
        let mut text = String::from("axis\tvalue\tcount\tmin\tmedian\tmax\n");
        for (name, axis) in [
            ("bsz", Axis::Bsz),
            ("peak_lr", Axis::PeakLr),
            ("warmup", Axis::Warmup),
            ("days_factor", Axis::DaysFactor),
        ] {
            for s in summarize_axis(&report, axis)? {
                text.push_str(&format!(
                    "{name}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
                    s.value, s.count, s.min, s.median, s.max
                ));
            }
        }
        let path = out.join("axes.tsv");
        std::fs::write(&path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    match report.winner() {
        Some(w) => log::info!(
            "best trial {}: loss {:.4} (bsz {}, peak_lr {}, warmup {}, days_factor {})",
            w.trial_id,
            w.final_loss.unwrap_or(f64::NAN),
            w.bsz,
            w.peak_lr,
            w.warmup,
            w.days_factor
        ),
        None => log::warn!("no trial completed"),
    }
    Ok(())
}

pub fn generate_corpus(cfg: &Config, bytes: usize, vocab_size: usize) -> Result<()> {
    let mut cfg = cfg.clone();
    let out = cfg.path("out")?;
    let seed: u64 = cfg.parse("seed")?;
    cfg.set("vocab", &out.join(VOCAB_FILE).display().to_string())?;
    cfg.set("input", &out.join(CORPUS_FILE).display().to_string())?;
    write_manifest(&out, "generate-corpus", &mut cfg)?;
    let lang = SyntheticLanguage::new(seed, SyntheticConfig::default());
    let docs = lang.corpus(bytes);
    let entries = lang.vocab_entries(&docs, vocab_size);
    let write = |name: &str, body: String| {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))
    };
    write(CORPUS_FILE, SyntheticLanguage::render(&docs))?;
    write(VOCAB_FILE, entries.iter().map(|e| format!("{e}\n")).collect())?;
    log::info!(
        "wrote {} documents and {} vocabulary entries",
        docs.len(),
        entries.len()
    );
    Ok(())
}

/// Prints `text`, or writes it to `out` when given.
pub fn emit(out: Option<&Path>, text: String) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn report_cost(gpus: u32, gpu_gb: f64, hours: f64, low: Option<f64>, high: Option<f64>) -> Result<String> {
    let mut hw = HardwareSpec::new(gpus, gpu_gb);
    let d = RateRange::default();
    hw.rates = RateRange {
        low: low.unwrap_or(d.low),
        high: high.unwrap_or(d.high),
    };
    let gbh = gb_hours(&hw, hours)?;
    let (lo, hi) = dollar_estimate(gbh, hw.rates)?;
    Ok(format!(
        "gpus\tgpu_gb\thours\tgb_hours\tdollars_low\tdollars_high\n{gpus}\t{gpu_gb}\t{hours}\t{gbh}\t{lo:.2}\t{hi:.2}\n"
    ))
}

pub fn report_table(log_path: &Path, samples: u64) -> Result<String> {
    let text = std::fs::read_to_string(log_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", log_path.display())))?;
    let label = log_path
        .parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .unwrap_or("run");
    let records = parse_throughput_log(&text, label)?;
    Ok(emit_table(&records, samples)?)
}
