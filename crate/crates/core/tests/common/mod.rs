#![allow(dead_code)]

pub mod oracle;

use mlm_budget::corpus::MaskedInstance;
use mlm_budget::model::ModelConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random masked instances with lengths in `[min_len, seq_len]`.
pub fn random_instances(seed: u64, n: usize, cfg: &ModelConfig, min_len: usize) -> Vec<MaskedInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(min_len..=cfg.seq_len);
            let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..cfg.vocab_size as u32)).collect();
            let k = ((0.15 * (len - 2) as f64).round() as usize).max(1);
            let mut pos: Vec<u32> = rand::seq::index::sample(&mut rng, len - 2, k)
                .into_iter()
                .map(|p| p as u32 + 1)
                .collect();
            pos.sort_unstable();
            let labels = pos.iter().map(|&p| ids[p as usize]).collect();
            for &p in &pos {
                ids[p as usize] = 4;
            }
            ids.resize(cfg.seq_len, 0);
            MaskedInstance {
                input_ids: ids,
                true_length: len,
                mask_positions: pos,
                labels,
                copy_index: None,
            }
        })
        .collect()
}
