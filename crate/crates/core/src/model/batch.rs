use super::error::ModelError;
use crate::corpus::MaskedInstance;

/// Masked instances laid out for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub seq_len: usize,
    /// `len() × seq_len`, padded.
    pub input_ids: Vec<u32>,
    pub lengths: Vec<usize>,
    /// Flattened `(instance, position)` of every prediction target.
    pub mask_index: Vec<(usize, usize)>,
    pub labels: Vec<u32>,
    /// Per-instance dropout stream keys. Keying by instance rather than by
    /// micro-batch keeps accumulation splits bit-compatible.
    pub keys: Vec<u64>,
}

impl Batch {
    pub fn new(instances: &[MaskedInstance], seq_len: usize) -> Result<Self, ModelError> {
        let mut b = Batch {
            seq_len,
            input_ids: Vec::with_capacity(instances.len() * seq_len),
            lengths: Vec::with_capacity(instances.len()),
            mask_index: Vec::new(),
            labels: Vec::new(),
            keys: (0..instances.len() as u64).collect(),
        };
        for (i, inst) in instances.iter().enumerate() {
            if inst.true_length == 0 || inst.true_length > seq_len || inst.input_ids.len() < inst.true_length {
                return Err(ModelError::Batch(format!(
                    "instance {i}: true_length {} with {} ids for seq_len {seq_len}",
                    inst.true_length,
                    inst.input_ids.len()
                )));
            }
            if inst.mask_positions.len() != inst.labels.len() {
                return Err(ModelError::Batch(format!(
                    "instance {i}: positions and labels differ in length"
                )));
            }
            let mut row = inst.input_ids.clone();
            row.resize(seq_len, 0);
            b.input_ids.extend_from_slice(&row[..seq_len]);
            b.lengths.push(inst.true_length);
            for (&p, &l) in inst.mask_positions.iter().zip(&inst.labels) {
                b.mask_index.push((i, p as usize));
                b.labels.push(l);
            }
        }
        Ok(b)
    }

    pub fn with_keys(mut self, keys: impl IntoIterator<Item = u64>) -> Self {
        self.keys = keys.into_iter().collect();
        self
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.labels.len()
    }

    /// Start row of each instance once padding is dropped.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.lengths
            .iter()
            .map(|&l| {
                let o = acc;
                acc += l;
                o
            })
            .collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn validate(&self, vocab_size: usize, seq_len: usize) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Batch(m));
        if self.is_empty() {
            return err("batch has no instances".into());
        }
        if self.seq_len != seq_len {
            return err(format!("batch seq_len {} but model expects {seq_len}", self.seq_len));
        }
        if self.masked_count() == 0 {
            return err("batch has no masked positions".into());
        }
        if self.keys.len() != self.len() || self.input_ids.len() != self.len() * seq_len {
            return err("inconsistent batch buffers".into());
        }
        for (i, &l) in self.lengths.iter().enumerate() {
            if l == 0 || l > seq_len {
                return err(format!("instance {i}: length {l}"));
            }
            let row = &self.input_ids[i * seq_len..i * seq_len + l];
            if let Some(&bad) = row.iter().find(|&&t| t as usize >= vocab_size) {
                return err(format!("instance {i}: token id {bad} >= vocab {vocab_size}"));
            }
        }
        for (&(i, p), &l) in self.mask_index.iter().zip(&self.labels) {
            if i >= self.len() || p >= self.lengths[i] {
                return err(format!("mask index ({i}, {p}) out of range"));
            }
            if l as usize >= vocab_size {
                return err(format!("label {l} >= vocab {vocab_size}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(len: usize, masks: &[u32]) -> MaskedInstance {
        MaskedInstance {
            input_ids: (0..len as u32).map(|t| t + 5).collect(),
            true_length: len,
            mask_positions: masks.to_vec(),
            labels: masks.iter().map(|&p| p + 7).collect(),
            copy_index: None,
        }
    }

    #[test]
    fn flattening() {
        let b = Batch::new(&[inst(6, &[1, 3]), inst(4, &[2])], 8).unwrap();
        assert_eq!(b.input_ids.len(), 16);
        assert_eq!(b.input_ids[6..8], [0, 0]);
        assert_eq!(b.mask_index, vec![(0, 1), (0, 3), (1, 2)]);
        assert_eq!(b.offsets(), vec![0, 6]);
        assert_eq!(b.total_tokens(), 10);
        b.validate(100, 8).unwrap();
    }

    #[test]
    fn rejects_bad_batches() {
        let b = Batch::new(&[inst(6, &[])], 8).unwrap();
        assert!(b.validate(100, 8).is_err());
        let b = Batch::new(&[inst(6, &[1])], 8).unwrap();
        assert!(b.validate(8, 8).is_err(), "token ids exceed vocab");
        assert!(b.validate(100, 16).is_err());
        let mut b = Batch::new(&[inst(6, &[1])], 8).unwrap();
        b.mask_index[0].1 = 6;
        assert!(b.validate(100, 8).is_err());
        assert!(Batch::new(&[inst(9, &[1])], 8).is_err());
        let empty = Batch::new(&[], 8).unwrap();
        assert!(empty.validate(100, 8).is_err());
    }
}
