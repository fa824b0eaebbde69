//! Subword vocabulary with the five BERT special tokens.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::error::{CorpusError, Result};

/// Ids serialize as u16, so the vocabulary must stay below this size.
pub const MAX_VOCAB: usize = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
}

impl SpecialIds {
    pub fn as_array(&self) -> [u32; 5] {
        [self.pad, self.unk, self.cls, self.sep, self.mask]
    }

    pub fn contains(&self, id: u32) -> bool {
        self.as_array().contains(&id)
    }
}

/// Surface strings of the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub pad: String,
    pub unk: String,
    pub cls: String,
    pub sep: String,
    pub mask: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            pad: "[PAD]".into(),
            unk: "[UNK]".into(),
            cls: "[CLS]".into(),
            sep: "[SEP]".into(),
            mask: "[MASK]".into(),
        }
    }
}

impl SpecialTokens {
    /// Parses the specials header: `pad = [PAD]` style lines, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = SpecialTokens::default();
        let mut seen = [false; 5];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CorpusError::Vocab(format!("specials line {}: expected key = token", lineno + 1)))?;
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(CorpusError::Vocab(format!("specials line {}: empty token", lineno + 1)));
            }
            let slot = match key.trim().to_ascii_lowercase().as_str() {
                "pad" => 0,
                "unk" => 1,
                "cls" => 2,
                "sep" => 3,
                "mask" => 4,
                other => {
                    return Err(CorpusError::Vocab(format!(
                        "specials line {}: unknown special `{other}`",
                        lineno + 1
                    )))
                }
            };
            seen[slot] = true;
            match slot {
                0 => out.pad = value,
                1 => out.unk = value,
                2 => out.cls = value,
                3 => out.sep = value,
                _ => out.mask = value,
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(CorpusError::Vocab(
                "specials header must declare pad, unk, cls, sep and mask".into(),
            ));
        }
        Ok(out)
    }

    pub fn render(&self) -> String {
        format!(
            "pad = {}\nunk = {}\ncls = {}\nsep = {}\nmask = {}\n",
            self.pad, self.unk, self.cls, self.sep, self.mask
        )
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    entries: Vec<String>,
    id_of: HashMap<String, u32>,
    specials: SpecialIds,
}

impl Vocab {
    pub fn new(entries: Vec<String>, tokens: &SpecialTokens) -> Result<Self> {
        if entries.is_empty() {
            return Err(CorpusError::Config("vocabulary is empty".into()));
        }
        if entries.len() >= MAX_VOCAB {
            return Err(CorpusError::Vocab(format!(
                "vocabulary has {} entries; ids must fit in u16 (< {MAX_VOCAB})",
                entries.len()
            )));
        }
        let mut id_of = HashMap::with_capacity(entries.len());
        for (i, tok) in entries.iter().enumerate() {
            if tok.is_empty() {
                return Err(CorpusError::Vocab(format!("empty entry at id {i}")));
            }
            if id_of.insert(tok.clone(), i as u32).is_some() {
                return Err(CorpusError::Vocab(format!("duplicate entry `{tok}` at id {i}")));
            }
        }
        let find = |t: &str| {
            id_of
                .get(t)
                .copied()
                .ok_or_else(|| CorpusError::Vocab(format!("special token `{t}` missing")))
        };
        let specials = SpecialIds {
            pad: find(&tokens.pad)?,
            unk: find(&tokens.unk)?,
            cls: find(&tokens.cls)?,
            sep: find(&tokens.sep)?,
            mask: find(&tokens.mask)?,
        };
        let mut ids = specials.as_array();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CorpusError::Vocab("special tokens must be distinct".into()));
        }
        Ok(Self {
            entries,
            id_of,
            specials,
        })
    }

    /// One token per line; line number is the id.
    pub fn from_text(text: &str, tokens: &SpecialTokens) -> Result<Self> {
        let entries = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect::<Vec<_>>();
        // A trailing blank line is an artefact of the file ending, not an entry.
        let entries = match entries.iter().rposition(|e| !e.is_empty()) {
            Some(last) => entries[..=last].to_vec(),
            None => Vec::new(),
        };
        Self::new(entries, tokens)
    }

    pub fn load(vocab_path: &Path, specials_path: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(vocab_path).map_err(|e| CorpusError::io(vocab_path, e))?;
        let tokens = match specials_path {
            Some(p) => SpecialTokens::parse(&fs::read_to_string(p).map_err(|e| CorpusError::io(p, e))?)?,
            None => SpecialTokens::default(),
        };
        Self::from_text(&text, &tokens)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Ids eligible as random replacement tokens (everything but the specials).
    pub fn regular_ids(&self) -> Vec<u32> {
        (0..self.entries.len() as u32)
            .filter(|&id| !self.specials.contains(id))
            .collect()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        for e in &self.entries {
            bytes.extend_from_slice(e.as_bytes());
            bytes.push(b'\n');
        }
        for id in self.specials.as_array() {
            bytes.extend_from_slice(&id.to_le_bytes());
        }
        crate::rng::fnv1a(&bytes)
    }
}
