use super::error::{CorpusError, Result};
use super::vocab::SpecialIds;

pub const MIN_SEQ_LEN: usize = 8;

/// One unmasked training sequence: `[CLS] content.. [SEP]`, no padding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SequenceInstance {
    pub token_ids: Vec<u32>,
    pub doc_id: u64,
}

impl SequenceInstance {
    pub fn true_length(&self) -> usize {
        self.token_ids.len()
    }

    pub fn content(&self) -> &[u32] {
        &self.token_ids[1..self.token_ids.len() - 1]
    }
}

/// Greedy packing within each document. `docs[i]` is document `i`.
pub fn pack_sequences(docs: &[Vec<u32>], seq_len: usize, specials: SpecialIds) -> Result<Vec<SequenceInstance>> {
    pack_documents(
        docs.iter().enumerate().map(|(i, d)| (i as u64, d.as_slice())),
        seq_len,
        specials,
    )
}

pub fn pack_documents<'a>(
    docs: impl IntoIterator<Item = (u64, &'a [u32])>,
    seq_len: usize,
    specials: SpecialIds,
) -> Result<Vec<SequenceInstance>> {
    if seq_len < MIN_SEQ_LEN {
        return Err(CorpusError::Config(format!(
            "seq_len must be at least {MIN_SEQ_LEN}, got {seq_len}"
        )));
    }
    if seq_len > u16::MAX as usize {
        return Err(CorpusError::Config(format!("seq_len {seq_len} exceeds u16 range")));
    }
    let content = seq_len - 2;
    let mut out = Vec::new();
    for (doc_id, tokens) in docs {
        for chunk in tokens.chunks(content) {
            let mut ids = Vec::with_capacity(chunk.len() + 2);
            ids.push(specials.cls);
            ids.extend_from_slice(chunk);
            ids.push(specials.sep);
            out.push(SequenceInstance { token_ids: ids, doc_id });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SP: SpecialIds = SpecialIds {
        pad: 0,
        unk: 1,
        cls: 2,
        sep: 3,
        mask: 4,
    };

    /// Token-at-a-time packer used as an oracle.
    fn brute_force(docs: &[Vec<u32>], seq_len: usize) -> Vec<(u64, Vec<u32>)> {
        let mut out = Vec::new();
        for (d, toks) in docs.iter().enumerate() {
            let mut cur: Vec<u32> = Vec::new();
            for &t in toks {
                cur.push(t);
                if cur.len() == seq_len - 2 {
                    out.push((d as u64, std::mem::take(&mut cur)));
                }
            }
            if !cur.is_empty() {
                out.push((d as u64, cur));
            }
        }
        out
    }

    fn doc(n: usize, base: u32) -> Vec<u32> {
        (0..n as u32).map(|i| base + (i % 50)).collect()
    }

    #[test]
    fn exact_fill_two_instances() {
        let got = pack_sequences(&[doc(252, 10)], 128, SP).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|s| s.true_length() == 128));
        assert_eq!(got[0].token_ids[0], SP.cls);
        assert_eq!(*got[1].token_ids.last().unwrap(), SP.sep);
    }

    #[test]
    fn short_document_short_instance() {
        let got = pack_sequences(&[doc(10, 10)], 128, SP).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].true_length(), 12);
    }

    #[test]
    fn never_crosses_documents() {
        let docs = vec![doc(200, 10), doc(200, 100)];
        let got = pack_sequences(&docs, 128, SP).unwrap();
        let oracle = brute_force(&docs, 128);
        assert_eq!(got.len(), 4);
        assert_eq!(got.len(), oracle.len());
        for (g, (d, c)) in got.iter().zip(&oracle) {
            assert_eq!(g.doc_id, *d);
            assert_eq!(g.content(), c.as_slice());
        }
    }

    #[test]
    fn empty_document_emits_nothing() {
        assert!(pack_sequences(&[vec![]], 16, SP).unwrap().is_empty());
    }

    #[test]
    fn seq_len_precondition() {
        assert!(pack_sequences(&[doc(3, 10)], 7, SP).is_err());
        assert!(pack_sequences(&[doc(3, 10)], 8, SP).is_ok());
    }
}
