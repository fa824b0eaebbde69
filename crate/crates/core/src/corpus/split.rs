use std::collections::BTreeMap;

use super::error::{CorpusError, Result};
use super::pack::SequenceInstance;
use crate::rng::{unit_hash, Domain};

/// Document-level train/validation split keyed by a seeded hash of `doc_id`.
///
/// Both sides are guaranteed non-empty: if the hash leaves one side empty, the
/// document whose hash lies closest to the cut moves across.
pub fn split_validation(
    instances: Vec<SequenceInstance>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<SequenceInstance>, Vec<SequenceInstance>)> {
    if !(val_fraction > 0.0 && val_fraction < 0.5) {
        return Err(CorpusError::Config(format!(
            "val_fraction must lie in (0, 0.5), got {val_fraction}"
        )));
    }
    let mut doc_hash: BTreeMap<u64, f64> = BTreeMap::new();
    for inst in &instances {
        doc_hash
            .entry(inst.doc_id)
            .or_insert_with(|| unit_hash(seed, Domain::Split, &[inst.doc_id]));
    }
    if doc_hash.len() < 2 {
        return Err(CorpusError::Config(format!(
            "need at least 2 documents to split, found {}",
            doc_hash.len()
        )));
    }

    let mut forced: Option<(u64, bool)> = None;
    let n_val = doc_hash.values().filter(|&&h| h < val_fraction).count();
    if n_val == 0 {
        let (&doc, _) = doc_hash.iter().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        forced = Some((doc, true));
    } else if n_val == doc_hash.len() {
        let (&doc, _) = doc_hash.iter().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        forced = Some((doc, false));
    }

    let is_val = |doc: u64| match forced {
        Some((d, side)) if d == doc => side,
        _ => doc_hash[&doc] < val_fraction,
    };
    let (val, train): (Vec<_>, Vec<_>) = instances.into_iter().partition(|i| is_val(i.doc_id));
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(n: u64) -> Vec<SequenceInstance> {
        (0..n)
            .map(|d| SequenceInstance {
                token_ids: vec![2, 10 + (d % 7) as u32, 3],
                doc_id: d,
            })
            .collect()
    }

    #[test]
    fn share_tracks_fraction_on_many_documents() {
        let (train, val) = split_validation(docs(100_000), 0.005, 11).unwrap();
        let share = val.len() as f64 / (train.len() + val.len()) as f64;
        assert!((0.004..=0.006).contains(&share), "share {share}");
    }

    #[test]
    fn half_is_rejected() {
        assert!(split_validation(docs(10), 0.5, 1).is_err());
        assert!(split_validation(docs(10), 0.0, 1).is_err());
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = split_validation(docs(5000), 0.05, 9).unwrap();
        let b = split_validation(docs(5000), 0.05, 9).unwrap();
        assert_eq!(a, b);
        let train_docs: std::collections::HashSet<u64> = a.0.iter().map(|i| i.doc_id).collect();
        assert!(a.1.iter().all(|i| !train_docs.contains(&i.doc_id)));
        assert_eq!(a.0.len() + a.1.len(), 5000);
    }

    #[test]
    fn documents_stay_whole() {
        let mut inst = Vec::new();
        for d in 0..2000u64 {
            for k in 0..3u32 {
                inst.push(SequenceInstance {
                    token_ids: vec![2, 10 + k, 3],
                    doc_id: d,
                });
            }
        }
        let (train, val) = split_validation(inst, 0.1, 4).unwrap();
        let mut count = std::collections::HashMap::new();
        for i in &val {
            *count.entry(i.doc_id).or_insert(0) += 1;
        }
        assert!(count.values().all(|&c| c == 3));
        assert_eq!(train.len() % 3, 0);
    }

    #[test]
    fn too_few_documents() {
        let mut one = docs(1);
        one.push(one[0].clone());
        assert!(split_validation(one, 0.1, 1).is_err());
    }

    #[test]
    fn small_corpus_gets_both_sides() {
        let (train, val) = split_validation(docs(3), 0.005, 1).unwrap();
        assert!(!train.is_empty() && !val.is_empty());
    }
}
