//! End-to-end preparation: text files → tokenized, packed, split, masked,
//! shuffled shards.

use std::fs;
use std::path::{Path, PathBuf};

use super::error::{CorpusError, Result};
use super::mask::{global_shuffle, mask_instances, mask_validation, MaskConfig};
use super::pack::pack_sequences;
use super::shard::{write_shards, ShardSpec};
use super::split::split_validation;
use super::tokenize::tokenize;
use super::vocab::Vocab;
use crate::rng::{fnv1a, RNG_ALGORITHM};

pub const TRAIN_DIR: &str = "train";
pub const VALID_DIR: &str = "valid";

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub seq_len: usize,
    pub mask: MaskConfig,
    pub val_fraction: f64,
    pub seed: u64,
    pub shard_size: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            seq_len: 128,
            mask: MaskConfig::default(),
            val_fraction: 0.005,
            seed: 0,
            shard_size: 16_384,
        }
    }
}

impl PrepareConfig {
    /// Identifies the generator and every knob that shapes shard contents.
    pub fn fingerprint(&self, vocab: &Vocab) -> u64 {
        let mut b = Vec::new();
        b.extend_from_slice(RNG_ALGORITHM.as_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&(self.seq_len as u64).to_le_bytes());
        b.extend_from_slice(&(self.mask.copies as u64).to_le_bytes());
        for x in [
            self.mask.mask_prob,
            self.mask.split.mask,
            self.mask.split.random,
            self.mask.split.keep,
            self.val_fraction,
        ] {
            b.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        b.extend_from_slice(&vocab.fingerprint().to_le_bytes());
        fnv1a(&b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub documents: usize,
    pub train_sequences: usize,
    pub valid_sequences: usize,
    pub train_instances: usize,
    pub train_shards: Vec<PathBuf>,
    pub valid_shards: Vec<PathBuf>,
    pub fingerprint: u64,
}

/// Documents are separated by one or more blank lines.
pub fn split_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                docs.push(std::mem::take(&mut cur));
            }
        } else {
            if !cur.is_empty() {
                cur.push('\n');
            }
            cur.push_str(line);
        }
    }
    if !cur.is_empty() {
        docs.push(cur);
    }
    docs
}

/// Reads every `*.txt` file directly under `dir`, in file-name order.
pub fn read_corpus_dir(dir: &Path) -> Result<Vec<String>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
        let p = entry.map_err(|e| CorpusError::io(dir, e))?.path();
        if p.is_file() && p.extension().and_then(|e| e.to_str()) == Some("txt") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CorpusError::Config(format!("no .txt files in {}", dir.display())));
    }
    let mut docs = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| CorpusError::io(&p, e))?;
        docs.extend(split_documents(&text));
    }
    Ok(docs)
}

pub fn prepare_documents(docs: &[String], vocab: &Vocab, cfg: &PrepareConfig, out: &Path) -> Result<PrepareSummary> {
    cfg.mask.validate()?;
    let tokens = tokenize(docs, vocab)?;
    let sequences = pack_sequences(&tokens, cfg.seq_len, vocab.specials())?;
    let (train, valid) = split_validation(sequences, cfg.val_fraction, cfg.seed)?;
    let masked = mask_instances(&train, cfg.seq_len, &cfg.mask, vocab, cfg.seed)?;
    let masked = global_shuffle(masked, cfg.seed);
    let valid_masked = mask_validation(&valid, cfg.seq_len, &cfg.mask, vocab, cfg.seed)?;

    let fingerprint = cfg.fingerprint(vocab);
    let spec = ShardSpec {
        seq_len: cfg.seq_len,
        vocab_size: vocab.len(),
        seed_fingerprint: fingerprint,
    };
    let train_files = write_shards(&masked, cfg.shard_size, &out.join(TRAIN_DIR), spec)?;
    let valid_files = write_shards(&valid_masked, cfg.shard_size, &out.join(VALID_DIR), spec)?;
    log::info!(
        "prepared {} documents: {} train sequences x {} copies, {} validation sequences",
        docs.len(),
        train.len(),
        cfg.mask.copies,
        valid.len()
    );
    Ok(PrepareSummary {
        documents: docs.len(),
        train_sequences: train.len(),
        valid_sequences: valid.len(),
        train_instances: masked.len(),
        train_shards: train_files.into_iter().map(|f| f.path).collect(),
        valid_shards: valid_files.into_iter().map(|f| f.path).collect(),
        fingerprint,
    })
}

pub fn prepare_dataset(input: &Path, vocab: &Vocab, cfg: &PrepareConfig, out: &Path) -> Result<PrepareSummary> {
    let docs = read_corpus_dir(input)?;
    prepare_documents(&docs, vocab, cfg, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_split_on_blank_lines() {
        let docs = split_documents("a b\nc\n\n\n d e \n\nf\n");
        assert_eq!(docs, vec!["a b\nc", " d e ", "f"]);
        assert!(split_documents("\n\n").is_empty());
    }
}
