//! Layered `key = value` configuration: built-in defaults, then a config
//! file, then command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{CliError, Result};

/// `(key, default)`. Model, optimizer and grid defaults are those of the
/// 24-layer reference setup; path keys default to empty.
pub const KEYS: &[(&str, &str)] = &[
    // model
    ("preset", "large"),
    ("num_layers", "24"),
    ("hidden_size", "1024"),
    ("num_heads", "16"),
    ("ffn_size", "4096"),
    ("dropout", "0.1"),
    ("attention_dropout", "0.1"),
    // optimizer and schedule
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.98"),
    ("adam_eps", "1e-6"),
    ("weight_decay", "0.01"),
    ("grad_clip", "0.0"),
    ("bsz", "4096"),
    ("peak_lr", "2e-3"),
    ("warmup", "0.06"),
    ("days_factor", "1"),
    ("micro_batch", "64"),
    ("calibration_steps", "5"),
    // budget and clock
    ("budget_seconds", "86400"),
    ("clock", "wall"),
    ("seed", "0"),
    // data
    ("seq_len", "128"),
    ("val_fraction", "0.005"),
    ("mask_copies", "10"),
    ("mask_prob", "0.15"),
    ("mask_split", "0.8,0.1,0.1"),
    ("shard_size", "16384"),
    // sweep
    ("slots", "1"),
    ("checkpoint_1", "0.125"),
    ("loss_threshold", "6.0"),
    ("checkpoint_2", "0.5"),
    ("keep_fraction", "0.5"),
    // paths
    ("input", ""),
    ("vocab", ""),
    ("specials", ""),
    ("shards", ""),
    ("grid", ""),
    ("out", ""),
    // manifest metadata, accepted so a manifest can be replayed as a config
    ("command", ""),
    ("code_version", ""),
    ("threads", ""),
];

const SHAPE_KEYS: [&str; 4] = ["num_layers", "hidden_size", "num_heads", "ffn_size"];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

fn nearest_key(key: &str) -> &'static str {
    KEYS.iter()
        .map(|(k, _)| *k)
        .min_by_key(|k| strsim::levenshtein(key, k))
        .unwrap_or("")
}

fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "unknown key `{key}`; nearest valid key is `{}`",
            nearest_key(key)
        )))
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            explicit: BTreeSet::new(),
        }
    }
}

impl Config {
    /// Applies one `key = value` pair on top of the current layers.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.trim().to_string());
        self.explicit.insert(key.to_string());
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("{source} line {}: expected `key = value`, got `{line}`", i + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("{source} line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `key=value` override strings.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{p}`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key);
        v.parse::<T>()
            .map_err(|_| CliError::Config(format!("`{key}` has invalid value `{v}`")))
    }

    pub fn path(&self, key: &str) -> Result<std::path::PathBuf> {
        let v = self.get(key);
        if v.is_empty() {
            Err(CliError::Config(format!("`{key}` is required")))
        } else {
            Ok(v.into())
        }
    }

    /// Model shape after applying the preset underneath explicit keys.
    pub fn shape(&self) -> Result<(usize, usize, usize, usize)> {
        let preset = self.get("preset");
        let base = match preset {
            "custom" => None,
            p => Some(
                mlm_budget::model::Preset::parse(p)
                    .ok_or_else(|| CliError::Config(format!("unknown preset `{p}` (tiny, small, large, custom)")))?
                    .shape(),
            ),
        };
        let mut dims = [0usize; 4];
        for (i, key) in SHAPE_KEYS.iter().enumerate() {
            dims[i] = match base {
                Some(b) if !self.is_explicit(key) => [b.0, b.1, b.2, b.3][i],
                _ => self.parse(key)?,
            };
        }
        Ok((dims[0], dims[1], dims[2], dims[3]))
    }

    /// Fully resolved configuration, one `key = value` per line in key order.
    /// Shape keys carry their preset-resolved values.
    pub fn render(&self) -> Result<String> {
        let (l, h, a, f) = self.shape()?;
        let mut resolved = self.values.clone();
        for (k, v) in SHAPE_KEYS.iter().zip([l, h, a, f]) {
            resolved.insert(k.to_string(), v.to_string());
        }
        Ok(resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect())
    }
}
