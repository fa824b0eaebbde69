//! Uncased WordPiece tokenization: lowercase, strip accents, split on
//! whitespace and punctuation, then greedy longest-match against the vocab.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::error::{CorpusError, Result};
use super::vocab::Vocab;

pub const CONTINUATION_PREFIX: &str = "##";

/// Words longer than this (in chars) map straight to UNK.
pub const MAX_WORD_CHARS: usize = 100;

pub struct WordPiece<'v> {
    vocab: &'v Vocab,
}

impl<'v> WordPiece<'v> {
    pub fn new(vocab: &'v Vocab) -> Result<Self> {
        if vocab.is_empty() {
            return Err(CorpusError::Config("vocabulary is empty".into()));
        }
        Ok(Self { vocab })
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for word in basic_split(&normalize(text)) {
            self.encode_word(&word, &mut out);
        }
        out
    }

    /// Greedy longest-match of one pre-split word.
    pub fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() {
            return;
        }
        let unk = self.vocab.specials().unk;
        if chars.len() > MAX_WORD_CHARS {
            out.push(unk);
            return;
        }
        let mark = out.len();
        let mut start = 0;
        let mut piece = String::new();
        while start < chars.len() {
            let mut end = chars.len();
            let mut matched = None;
            while end > start {
                piece.clear();
                if start > 0 {
                    piece.push_str(CONTINUATION_PREFIX);
                }
                piece.extend(&chars[start..end]);
                if let Some(id) = self.vocab.id(&piece) {
                    matched = Some(id);
                    break;
                }
                end -= 1;
            }
            match matched {
                Some(id) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    out.push(unk);
                    return;
                }
            }
        }
    }
}

/// Tokenizes each document independently.
pub fn tokenize<S: AsRef<str>>(docs: &[S], vocab: &Vocab) -> Result<Vec<Vec<u32>>> {
    let wp = WordPiece::new(vocab)?;
    Ok(docs.iter().map(|d| wp.encode(d.as_ref())).collect())
}

pub fn normalize(text: &str) -> String {
    text.to_lowercase().nfd().filter(|&c| !is_combining_mark(c)).collect()
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_ascii() && !c.is_alphanumeric() && !c.is_whitespace() && !c.is_control())
}

/// Whitespace split, with every punctuation char emitted as its own word.
pub fn basic_split(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
        } else if c.is_control() || c == '\u{fffd}' {
            continue;
        } else if is_punctuation(c) {
            if !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            words.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}
