use super::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Tiny,
    Small,
    Large,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tiny" => Some(Preset::Tiny),
            "small" => Some(Preset::Small),
            "large" => Some(Preset::Large),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Tiny => "tiny",
            Preset::Small => "small",
            Preset::Large => "large",
        }
    }

    /// `(layers, hidden, heads, ffn)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        match self {
            Preset::Tiny => (2, 64, 4, 256),
            Preset::Small => (4, 128, 4, 512),
            Preset::Large => (24, 1024, 16, 4096),
        }
    }

    pub fn config(&self, vocab_size: usize, seq_len: usize) -> ModelConfig {
        let (num_layers, hidden_size, num_heads, ffn_size) = self.shape();
        ModelConfig {
            num_layers,
            hidden_size,
            num_heads,
            ffn_size,
            vocab_size,
            seq_len,
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ffn_size: usize,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub dropout: f64,
    pub attention_dropout: f64,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    /// The 24-layer, 1024-wide configuration with a BERT-sized vocabulary.
    fn default() -> Self {
        Self {
            num_layers: 24,
            hidden_size: 1024,
            num_heads: 16,
            ffn_size: 4096,
            vocab_size: 30_522,
            seq_len: 128,
            dropout: 0.1,
            attention_dropout: 0.1,
            layer_norm_eps: 1e-12,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn head_size(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.num_layers == 0 || self.hidden_size == 0 || self.num_heads == 0 || self.ffn_size == 0 {
            return err(format!("all dimensions must be positive: {self:?}"));
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return err(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        if self.vocab_size < 6 || self.seq_len < 3 {
            return err(format!(
                "vocab {} / seq_len {} too small",
                self.vocab_size, self.seq_len
            ));
        }
        for (name, p) in [("dropout", self.dropout), ("attention_dropout", self.attention_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return err(format!("{name} {p} must lie in [0, 1)"));
            }
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 || self.init_std.is_nan() || self.init_std <= 0.0
        {
            return err("layer_norm_eps and init_std must be positive".into());
        }
        Ok(())
    }

    /// Total learnable scalars.
    pub fn num_parameters(&self) -> usize {
        let d = self.hidden_size;
        let per_layer = 4 * (d * d + d) + 2 * 2 * d + (d * self.ffn_size + self.ffn_size) + (self.ffn_size * d + d);
        self.vocab_size * d
            + self.seq_len * d
            + 2 * d
            + self.num_layers * per_layer
            + d * d
            + d
            + 2 * d
            + self.vocab_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_preset_matches_reference_shape() {
        let c = Preset::Large.config(30_522, 128);
        assert_eq!(
            (c.num_layers, c.hidden_size, c.num_heads, c.ffn_size),
            (24, 1024, 16, 4096)
        );
        assert_eq!(c.head_size(), 64);
        assert_eq!((c.dropout, c.attention_dropout), (0.1, 0.1));
        c.validate().unwrap();
    }

    #[test]
    fn heads_must_divide_hidden() {
        let c = ModelConfig {
            num_heads: 5,
            ..Preset::Tiny.config(100, 16)
        };
        assert!(c.validate().is_err());
    }
}
