//! Static masking: each training sequence is corrupted `copies` times up front.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::error::{CorpusError, Result};
use super::pack::SequenceInstance;
use super::vocab::{SpecialIds, Vocab};
use crate::rng::{stream, Domain};

/// Probability triple applied to each selected position: replace with MASK,
/// replace with a random regular token, or keep the original.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSplit {
    pub mask: f64,
    pub random: f64,
    pub keep: f64,
}

impl Default for CorruptionSplit {
    fn default() -> Self {
        Self {
            mask: 0.8,
            random: 0.1,
            keep: 0.1,
        }
    }
}

impl CorruptionSplit {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.mask, self.random, self.keep];
        let in_range = parts.iter().all(|p| (0.0..=1.0).contains(p));
        if !in_range || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Config(format!(
                "corruption split {}/{}/{} must be probabilities summing to 1",
                self.mask, self.random, self.keep
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub copies: usize,
    pub mask_prob: f64,
    pub split: CorruptionSplit,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            copies: 10,
            mask_prob: 0.15,
            split: CorruptionSplit::default(),
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.copies < 1 {
            return Err(CorpusError::Config("copies must be at least 1".into()));
        }
        if self.copies > u32::MAX as usize {
            return Err(CorpusError::Config("copies out of range".into()));
        }
        if !(self.mask_prob > 0.0 && self.mask_prob < 0.5) {
            return Err(CorpusError::Config(format!(
                "mask_prob must lie in (0, 0.5), got {}",
                self.mask_prob
            )));
        }
        self.split.validate()
    }

    /// Number of positions masked in a sequence of `true_length` tokens.
    pub fn masked_count(&self, true_length: usize) -> usize {
        let content = true_length.saturating_sub(2);
        ((self.mask_prob * content as f64).round() as usize).max(1)
    }
}

/// A pre-masked, padded training example.
///
/// `copy_index` is pipeline provenance; it is not part of the shard record, so
/// instances read back from disk carry `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskedInstance {
    pub input_ids: Vec<u32>,
    pub true_length: usize,
    pub mask_positions: Vec<u32>,
    pub labels: Vec<u32>,
    pub copy_index: Option<u32>,
}

impl MaskedInstance {
    /// The uncorrupted token sequence (without padding).
    pub fn original_tokens(&self) -> Vec<u32> {
        let mut ids = self.input_ids[..self.true_length].to_vec();
        for (&p, &l) in self.mask_positions.iter().zip(&self.labels) {
            ids[p as usize] = l;
        }
        ids
    }

    pub fn without_provenance(mut self) -> Self {
        self.copy_index = None;
        self
    }
}

/// Corrupts one sequence with the given generator.
pub fn mask_one(
    seq: &SequenceInstance,
    seq_len: usize,
    cfg: &MaskConfig,
    specials: SpecialIds,
    regular_ids: &[u32],
    rng: &mut ChaCha8Rng,
) -> Result<MaskedInstance> {
    let len = seq.true_length();
    if len < 3 || len > seq_len {
        return Err(CorpusError::Config(format!(
            "sequence of length {len} cannot be masked with seq_len {seq_len}"
        )));
    }
    if regular_ids.is_empty() {
        return Err(CorpusError::Vocab("vocabulary has no regular tokens".into()));
    }
    let k = cfg.masked_count(len);
    let content = len - 2;
    let mut positions: Vec<u32> = index::sample(rng, content, k)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    positions.sort_unstable();

    let mut input_ids = seq.token_ids.clone();
    input_ids.resize(seq_len, specials.pad);
    let mut labels = Vec::with_capacity(k);
    for &p in &positions {
        let original = input_ids[p as usize];
        labels.push(original);
        let u: f64 = rng.random();
        if u < cfg.split.mask {
            input_ids[p as usize] = specials.mask;
        } else if u < cfg.split.mask + cfg.split.random {
            input_ids[p as usize] = regular_ids[rng.random_range(0..regular_ids.len())];
        }
    }
    Ok(MaskedInstance {
        input_ids,
        true_length: len,
        mask_positions: positions,
        labels,
        copy_index: None,
    })
}

/// Produces `copies × train.len()` masked instances, copy-major.
///
/// The stream for `(copy, i)` depends only on the seed and those indices, so
/// the result is independent of the rayon pool size.
pub fn mask_instances(
    train: &[SequenceInstance],
    seq_len: usize,
    cfg: &MaskConfig,
    vocab: &Vocab,
    seed: u64,
) -> Result<Vec<MaskedInstance>> {
    cfg.validate()?;
    let specials = vocab.specials();
    let regular = vocab.regular_ids();
    let n = train.len();
    (0..cfg.copies * n)
        .into_par_iter()
        .map(|j| {
            let (copy, i) = (j / n, j % n);
            let mut rng = stream(seed, Domain::Mask, &[copy as u64, i as u64]);
            let mut m = mask_one(&train[i], seq_len, cfg, specials, &regular, &mut rng)?;
            m.copy_index = Some(copy as u32);
            Ok(m)
        })
        .collect()
}

/// Single masked copy of the validation slice.
pub fn mask_validation(
    val: &[SequenceInstance],
    seq_len: usize,
    cfg: &MaskConfig,
    vocab: &Vocab,
    seed: u64,
) -> Result<Vec<MaskedInstance>> {
    cfg.validate()?;
    let specials = vocab.specials();
    let regular = vocab.regular_ids();
    val.par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream(seed, Domain::ValidMask, &[i as u64]);
            let mut m = mask_one(s, seq_len, cfg, specials, &regular, &mut rng)?;
            m.copy_index = Some(0);
            Ok(m)
        })
        .collect()
}

/// Seeded uniform permutation of the whole masked set.
pub fn global_shuffle(mut instances: Vec<MaskedInstance>, seed: u64) -> Vec<MaskedInstance> {
    let mut rng = stream(seed, Domain::Shuffle, &[]);
    instances.shuffle(&mut rng);
    instances
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::SpecialTokens;
    use std::collections::HashMap;

    fn vocab() -> Vocab {
        let mut e: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        e.extend((0..200).map(|i| format!("w{i}")));
        Vocab::new(e, &SpecialTokens::default()).unwrap()
    }

    fn seq(len: usize, doc: u64) -> SequenceInstance {
        let mut ids = vec![2];
        ids.extend((0..len - 2).map(|i| 5 + ((i as u64 * 7 + doc) % 200) as u32));
        ids.push(3);
        SequenceInstance {
            token_ids: ids,
            doc_id: doc,
        }
    }

    #[test]
    fn masked_count_rule() {
        let c = MaskConfig::default();
        assert_eq!(c.masked_count(128), 19);
        assert_eq!(c.masked_count(3), 1);
        assert_eq!(c.masked_count(12), 2);
    }

    #[test]
    fn positions_labels_and_padding() {
        let v = vocab();
        let cfg = MaskConfig::default();
        let s = seq(40, 1);
        let out = mask_instances(std::slice::from_ref(&s), 64, &cfg, &v, 5).unwrap();
        assert_eq!(out.len(), 10);
        for m in &out {
            assert_eq!(m.input_ids.len(), 64);
            assert!(m.input_ids[40..].iter().all(|&t| t == 0));
            assert_eq!(m.mask_positions.len(), cfg.masked_count(40));
            assert!(m.mask_positions.windows(2).all(|w| w[0] < w[1]));
            assert!(m.mask_positions.iter().all(|p| (1..=38).contains(p)));
            assert_eq!(m.original_tokens(), s.token_ids);
            assert!(m.labels.iter().all(|&l| !v.specials().contains(l)));
        }
    }

    #[test]
    fn copies_differ() {
        let v = vocab();
        let out = mask_instances(&[seq(128, 3)], 128, &MaskConfig::default(), &v, 1).unwrap();
        let first = &out[0].mask_positions;
        assert!(out.iter().any(|m| &m.mask_positions != first));
    }

    #[test]
    fn corruption_split_statistics() {
        let v = vocab();
        let cfg = MaskConfig::default();
        let train: Vec<_> = (0..600).map(|d| seq(128, d)).collect();
        let out = mask_instances(&train, 128, &cfg, &v, 77).unwrap();
        let (mut masked, mut kept, mut random, mut total) = (0usize, 0usize, 0usize, 0usize);
        for m in &out {
            for (&p, &l) in m.mask_positions.iter().zip(&m.labels) {
                let t = m.input_ids[p as usize];
                total += 1;
                if t == v.specials().mask {
                    masked += 1;
                } else if t == l {
                    kept += 1;
                } else {
                    random += 1;
                }
            }
        }
        assert!(total >= 100_000);
        let f = |x: usize| x as f64 / total as f64;
        // a random draw can coincide with the label, so "kept" sits slightly above 10%
        assert!((f(masked) - 0.8).abs() < 0.01);
        assert!((f(random) - 0.1).abs() < 0.01);
        assert!((f(kept) - 0.1).abs() < 0.01);
    }

    #[test]
    fn independent_of_thread_pool() {
        let v = vocab();
        let train: Vec<_> = (0..64).map(|d| seq(30 + (d as usize % 50), d)).collect();
        let cfg = MaskConfig::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mask_instances(&train, 128, &cfg, &v, 42).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn config_errors() {
        let v = vocab();
        let bad_copies = MaskConfig {
            copies: 0,
            ..Default::default()
        };
        assert!(mask_instances(&[seq(10, 0)], 16, &bad_copies, &v, 0).is_err());
        for p in [0.0, 0.5, 0.7] {
            let bad = MaskConfig {
                mask_prob: p,
                ..Default::default()
            };
            assert!(mask_instances(&[seq(10, 0)], 16, &bad, &v, 0).is_err());
        }
        let bad_split = MaskConfig {
            split: CorruptionSplit {
                mask: 0.5,
                random: 0.1,
                keep: 0.1,
            },
            ..Default::default()
        };
        assert!(bad_split.validate().is_err());
    }

    #[test]
    fn shuffle_is_permutation_and_mixes_copies() {
        let v = vocab();
        let train: Vec<_> = (0..10_000).map(|d| seq(12, d)).collect();
        let out = mask_instances(&train, 16, &MaskConfig::default(), &v, 3).unwrap();
        let shuffled = global_shuffle(out.clone(), 3);
        assert_eq!(shuffled, global_shuffle(out.clone(), 3));
        let mut count: HashMap<&MaskedInstance, i64> = HashMap::new();
        for m in &out {
            *count.entry(m).or_default() += 1;
        }
        for m in &shuffled {
            *count.get_mut(m).unwrap() -= 1;
        }
        assert!(count.values().all(|&c| c == 0));
        let same = shuffled
            .windows(2)
            .filter(|w| w[0].copy_index == w[1].copy_index)
            .count();
        let frac = same as f64 / (shuffled.len() - 1) as f64;
        assert!((0.08..=0.12).contains(&frac), "frac {frac}");
    }
}
