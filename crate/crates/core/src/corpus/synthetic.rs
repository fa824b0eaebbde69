//! Deterministic pseudo-English text for smoke tests, benchmarks and toy
//! sweeps.
//!
//! Words are built from a syllable inventory and grouped into nouns, verbs
//! and adjectives with class-marking suffixes. Each document draws most of
//! its content words from one topic, and sentences follow a handful of
//! templates, so a masked LM has both local syntax and document-level
//! co-occurrence to learn from.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tokenize::{basic_split, normalize, CONTINUATION_PREFIX};
use super::vocab::SpecialTokens;
use crate::rng::{stream, Domain};

const ONSETS: [&str; 18] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr", "pl",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CODAS: [&str; 4] = ["", "n", "r", "s"];

const NOUN_SUFFIX: [&str; 3] = ["on", "a", "um"];
const VERB_SUFFIX: [&str; 3] = ["ed", "es", "ing"];
const ADJ_SUFFIX: [&str; 3] = ["ic", "ous", "al"];

const DETERMINERS: [&str; 6] = ["the", "a", "this", "that", "every", "some"];
const PREPOSITIONS: [&str; 8] = ["of", "in", "with", "on", "by", "from", "near", "under"];
const CONJUNCTIONS: [&str; 4] = ["and", "but", "while", "because"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Det,
    Adj,
    Noun,
    Verb,
    Prep,
    Conj,
}

const TEMPLATES: [&[Slot]; 5] = {
    use Slot::*;
    [
        &[Det, Noun, Verb, Det, Noun],
        &[Det, Adj, Noun, Verb, Det, Noun, Prep, Det, Noun],
        &[Det, Noun, Prep, Det, Adj, Noun, Verb, Det, Adj, Noun],
        &[Det, Adj, Noun, Verb, Prep, Det, Noun, Conj, Det, Noun, Verb],
        &[Det, Noun, Verb, Det, Adj, Noun],
    ]
};

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub nouns: usize,
    pub verbs: usize,
    pub adjectives: usize,
    pub topics: usize,
    /// Content words per class reserved for each topic.
    pub topic_words: usize,
    /// Probability a content word comes from the document's topic.
    pub topic_affinity: f64,
    pub zipf_exponent: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nouns: 9000,
            verbs: 3000,
            adjectives: 3000,
            topics: 40,
            topic_words: 60,
            topic_affinity: 0.6,
            zipf_exponent: 1.05,
        }
    }
}

struct Class {
    words: Vec<String>,
    cdf: Vec<f64>,
}

impl Class {
    fn new(words: Vec<String>, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cdf = (0..words.len())
            .map(|r| {
                acc += 1.0 / ((r + 1) as f64).powf(exponent);
                acc
            })
            .collect();
        Self { words, cdf }
    }

    fn sample_index(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cdf.last().expect("non-empty class");
        let u = rng.random::<f64>() * total;
        self.cdf.partition_point(|&c| c < u).min(self.words.len() - 1)
    }
}

pub struct SyntheticLanguage {
    cfg: SyntheticConfig,
    seed: u64,
    syllables: Vec<String>,
    nouns: Class,
    verbs: Class,
    adjectives: Class,
    /// Per topic, indices into each class.
    topics: Vec<[Vec<usize>; 3]>,
}

impl SyntheticLanguage {
    pub fn new(seed: u64, cfg: SyntheticConfig) -> Self {
        let mut syllables = Vec::new();
        for o in ONSETS {
            for v in VOWELS {
                for c in CODAS {
                    syllables.push(format!("{o}{v}{c}"));
                }
            }
        }
        let mut rng = stream(seed, Domain::Synthetic, &[0]);
        let mut taken: BTreeSet<String> = DETERMINERS
            .iter()
            .chain(&PREPOSITIONS)
            .chain(&CONJUNCTIONS)
            .map(|s| s.to_string())
            .collect();
        let mut make_class = |n: usize, suffixes: &[&str], rng: &mut ChaCha8Rng| {
            let mut words = Vec::with_capacity(n);
            while words.len() < n {
                let parts = 1 + rng.random_range(0..3) + usize::from(words.len() > n / 4);
                let mut w: String = (0..parts)
                    .map(|_| syllables[rng.random_range(0..syllables.len())].as_str())
                    .collect();
                w.push_str(suffixes[rng.random_range(0..suffixes.len())]);
                if taken.insert(w.clone()) {
                    words.push(w);
                }
            }
            Class::new(words, cfg.zipf_exponent)
        };
        let nouns = make_class(cfg.nouns, &NOUN_SUFFIX, &mut rng);
        let verbs = make_class(cfg.verbs, &VERB_SUFFIX, &mut rng);
        let adjectives = make_class(cfg.adjectives, &ADJ_SUFFIX, &mut rng);
        let topics = (0..cfg.topics)
            .map(|_| {
                let pick = |class: &Class, rng: &mut ChaCha8Rng| {
                    (0..cfg.topic_words.min(class.words.len()))
                        .map(|_| rng.random_range(0..class.words.len()))
                        .collect::<Vec<_>>()
                };
                [
                    pick(&nouns, &mut rng),
                    pick(&verbs, &mut rng),
                    pick(&adjectives, &mut rng),
                ]
            })
            .collect();
        Self {
            cfg,
            seed,
            syllables,
            nouns,
            verbs,
            adjectives,
            topics,
        }
    }

    fn content_word(&self, class: usize, topic: usize, rng: &mut ChaCha8Rng) -> &str {
        let c = match class {
            0 => &self.nouns,
            1 => &self.verbs,
            _ => &self.adjectives,
        };
        if rng.random::<f64>() < self.cfg.topic_affinity {
            let pool = &self.topics[topic][class];
            // Topic pools are themselves skewed toward their first entries.
            let r = rng.random::<f64>();
            &c.words[pool[((r * r) * pool.len() as f64) as usize]]
        } else {
            &c.words[c.sample_index(rng)]
        }
    }

    fn sentence(&self, topic: usize, rng: &mut ChaCha8Rng, out: &mut String) {
        let tpl = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
        for (i, slot) in tpl.iter().enumerate() {
            let w = match slot {
                Slot::Det => DETERMINERS[rng.random_range(0..DETERMINERS.len())],
                Slot::Prep => PREPOSITIONS[rng.random_range(0..PREPOSITIONS.len())],
                Slot::Conj => CONJUNCTIONS[rng.random_range(0..CONJUNCTIONS.len())],
                Slot::Noun => self.content_word(0, topic, rng),
                Slot::Verb => self.content_word(1, topic, rng),
                Slot::Adj => self.content_word(2, topic, rng),
            };
            if i == 0 {
                let mut cs = w.chars();
                if let Some(f) = cs.next() {
                    out.extend(f.to_uppercase());
                    out.push_str(cs.as_str());
                }
            } else {
                out.push(' ');
                out.push_str(w);
            }
        }
        out.push_str(if rng.random::<f64>() < 0.1 { "," } else { "." });
    }

    /// One document of 4–14 sentences on a single topic.
    pub fn document(&self, index: u64) -> String {
        let mut rng = stream(self.seed, Domain::Synthetic, &[1, index]);
        let topic = rng.random_range(0..self.topics.len());
        let n = 4 + rng.random_range(0..11);
        let mut doc = String::new();
        for s in 0..n {
            if s > 0 {
                doc.push(' ');
            }
            self.sentence(topic, &mut rng, &mut doc);
        }
        doc
    }

    /// Documents until their total UTF-8 size reaches `target_bytes`.
    pub fn corpus(&self, target_bytes: usize) -> Vec<String> {
        let mut docs = Vec::new();
        let mut size = 0;
        while size < target_bytes {
            let d = self.document(docs.len() as u64);
            size += d.len() + 2;
            docs.push(d);
        }
        docs
    }

    /// Blank-line separated file contents for `docs`.
    pub fn render(docs: &[String]) -> String {
        let mut s = String::with_capacity(docs.iter().map(|d| d.len() + 2).sum());
        for d in docs {
            s.push_str(d);
            s.push_str("\n\n");
        }
        s
    }

    /// Vocabulary entries of at most `target_size`: specials, punctuation,
    /// single characters, syllable and suffix pieces, then whole words by
    /// descending frequency in `docs`.
    pub fn vocab_entries(&self, docs: &[String], target_size: usize) -> Vec<String> {
        let sp = SpecialTokens::default();
        let mut entries: Vec<String> = vec![sp.pad, sp.unk, sp.cls, sp.sep, sp.mask];
        let mut seen: BTreeSet<String> = entries.iter().cloned().collect();
        let mut push = |t: String, entries: &mut Vec<String>| {
            if entries.len() < target_size && seen.insert(t.clone()) {
                entries.push(t);
            }
        };
        for p in [".", ","] {
            push(p.to_string(), &mut entries);
        }
        for c in 'a'..='z' {
            push(c.to_string(), &mut entries);
            push(format!("{CONTINUATION_PREFIX}{c}"), &mut entries);
        }
        for s in &self.syllables {
            push(s.clone(), &mut entries);
            push(format!("{CONTINUATION_PREFIX}{s}"), &mut entries);
        }
        for s in NOUN_SUFFIX.iter().chain(&VERB_SUFFIX).chain(&ADJ_SUFFIX) {
            push(format!("{CONTINUATION_PREFIX}{s}"), &mut entries);
        }
        let mut freq: HashMap<String, usize> = HashMap::new();
        for d in docs {
            for w in basic_split(&normalize(d)) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut by_freq: Vec<(String, usize)> = freq.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (w, _) in by_freq {
            push(w, &mut entries);
        }
        entries
    }
}
