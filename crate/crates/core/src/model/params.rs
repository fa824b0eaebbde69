use rand::Rng;

use super::config::ModelConfig;
use crate::optim::Parameters;
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `d_in × d_out`, row-major, so `y = x·W + b`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self {
            weight: vec![0.0; d_in * d_out],
            bias: vec![0.0; d_out],
            d_in,
            d_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    fn zeros(d: usize) -> Self {
        Self {
            gamma: vec![0.0; d],
            beta: vec![0.0; d],
        }
    }

    fn identity(d: usize) -> Self {
        Self {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_ln: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_ln: LayerNorm,
}

/// Every learnable tensor. The token embedding doubles as the output
/// projection of the prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub token_embedding: Vec<f64>,
    pub position_embedding: Vec<f64>,
    pub embedding_ln: LayerNorm,
    pub layers: Vec<EncoderLayer>,
    pub head_transform: Linear,
    pub head_ln: LayerNorm,
    pub output_bias: Vec<f64>,
}

impl ModelParams {
    /// All-zero tensors with the shapes of `cfg`; the gradient container.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.hidden_size;
        let layer = || EncoderLayer {
            query: Linear::zeros(d, d),
            key: Linear::zeros(d, d),
            value: Linear::zeros(d, d),
            attn_out: Linear::zeros(d, d),
            attn_ln: LayerNorm::zeros(d),
            ffn_in: Linear::zeros(d, cfg.ffn_size),
            ffn_out: Linear::zeros(cfg.ffn_size, d),
            ffn_ln: LayerNorm::zeros(d),
        };
        Self {
            token_embedding: vec![0.0; cfg.vocab_size * d],
            position_embedding: vec![0.0; cfg.seq_len * d],
            embedding_ln: LayerNorm::zeros(d),
            layers: (0..cfg.num_layers).map(|_| layer()).collect(),
            head_transform: Linear::zeros(d, d),
            head_ln: LayerNorm::zeros(d),
            output_bias: vec![0.0; cfg.vocab_size],
        }
    }

    /// Truncated normal (±2σ, σ = `init_std`) weights, zero biases, unit
    /// layer-norm scales. Each tensor draws from its own seeded stream.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let d = cfg.hidden_size;
        for ln in p.layer_norms_mut() {
            *ln = LayerNorm::identity(d);
        }
        let std = cfg.init_std;
        for (i, (name, t)) in p.tensors_mut().into_iter().enumerate() {
            if is_weight(&name) {
                let mut rng = stream(seed, Domain::Init, &[i as u64]);
                for x in t.iter_mut() {
                    *x = truncated_normal(&mut rng, std);
                }
            }
        }
        p
    }

    fn layer_norms_mut(&mut self) -> Vec<&mut LayerNorm> {
        let mut v = vec![&mut self.embedding_ln];
        for l in &mut self.layers {
            v.push(&mut l.attn_ln);
            v.push(&mut l.ffn_ln);
        }
        v.push(&mut self.head_ln);
        v
    }

    pub fn fill(&mut self, value: f64) {
        for (_, t) in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        self.tensors()
            .into_iter()
            .zip(other.tensors())
            .flat_map(|((_, a), (_, b))| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Tensor shapes in canonical order (rows, cols); vectors are `(1, n)`.
    pub fn shapes(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
        let d = cfg.hidden_size;
        let zero = Self::zeros(cfg);
        zero.tensors()
            .into_iter()
            .map(|(name, t)| {
                let shape = if name == "embeddings.token" {
                    (cfg.vocab_size, d)
                } else if name == "embeddings.position" {
                    (cfg.seq_len, d)
                } else if name.ends_with(".weight") {
                    (t.len() / ffn_or_d(&name, cfg), ffn_or_d(&name, cfg))
                } else {
                    (1, t.len())
                };
                (name, shape)
            })
            .collect()
    }
}

fn ffn_or_d(name: &str, cfg: &ModelConfig) -> usize {
    if name.ends_with("ffn_in.weight") {
        cfg.ffn_size
    } else {
        cfg.hidden_size
    }
}

fn is_weight(name: &str) -> bool {
    name.ends_with(".weight") || name.starts_with("embeddings.token") || name.starts_with("embeddings.position")
}

fn truncated_normal(rng: &mut impl Rng, std: f64) -> f64 {
    loop {
        // Box–Muller
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

macro_rules! push_linear {
    ($v:ident, $prefix:expr, $lin:expr, $conv:ident) => {
        $v.push((format!("{}.weight", $prefix), $lin.weight.$conv()));
        $v.push((format!("{}.bias", $prefix), $lin.bias.$conv()));
    };
}

macro_rules! push_ln {
    ($v:ident, $prefix:expr, $ln:expr, $conv:ident) => {
        $v.push((format!("{}.gamma", $prefix), $ln.gamma.$conv()));
        $v.push((format!("{}.beta", $prefix), $ln.beta.$conv()));
    };
}

macro_rules! all_tensors {
    ($self:ident, $conv:ident, $iter:ident) => {{
        let mut v = Vec::with_capacity(9 + 16 * $self.layers.len());
        v.push(("embeddings.token".to_string(), $self.token_embedding.$conv()));
        v.push(("embeddings.position".to_string(), $self.position_embedding.$conv()));
        push_ln!(v, "embeddings.ln", $self.embedding_ln, $conv);
        for (i, l) in $self.layers.$iter().enumerate() {
            push_linear!(v, format!("layer.{i}.attn.query"), l.query, $conv);
            push_linear!(v, format!("layer.{i}.attn.key"), l.key, $conv);
            push_linear!(v, format!("layer.{i}.attn.value"), l.value, $conv);
            push_linear!(v, format!("layer.{i}.attn.output"), l.attn_out, $conv);
            push_ln!(v, format!("layer.{i}.attn.ln"), l.attn_ln, $conv);
            push_linear!(v, format!("layer.{i}.ffn_in"), l.ffn_in, $conv);
            push_linear!(v, format!("layer.{i}.ffn_out"), l.ffn_out, $conv);
            push_ln!(v, format!("layer.{i}.ffn.ln"), l.ffn_ln, $conv);
        }
        push_linear!(v, "head.transform", $self.head_transform, $conv);
        push_ln!(v, "head.ln", $self.head_ln, $conv);
        v.push(("head.output_bias".to_string(), $self.output_bias.$conv()));
        v
    }};
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        all_tensors!(self, as_slice, iter)
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        all_tensors!(self, as_mut_slice, iter_mut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Preset;

    #[test]
    fn element_count_matches_config() {
        let cfg = Preset::Tiny.config(500, 32);
        let p = ModelParams::init(&cfg, 1);
        assert_eq!(p.num_elements(), cfg.num_parameters());
        assert_eq!(p.tensors().len(), 9 + 16 * cfg.num_layers);
    }

    #[test]
    fn init_statistics() {
        let cfg = Preset::Tiny.config(2000, 32);
        let p = ModelParams::init(&cfg, 3);
        let w = &p.token_embedding;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!(mean.abs() < 1e-3);
        // truncation at 2σ shrinks the std by ~12%
        assert!((var.sqrt() - 0.02 * 0.88).abs() < 1e-3, "std {}", var.sqrt());
        assert!(w.iter().all(|x| x.abs() <= 0.04));
        assert!(p.head_ln.gamma.iter().all(|&g| g == 1.0));
        assert!(p.layers[0].query.bias.iter().all(|&b| b == 0.0));
        assert_eq!(p, ModelParams::init(&cfg, 3));
        assert_ne!(p, ModelParams::init(&cfg, 4));
    }

    #[test]
    fn shapes_cover_every_tensor() {
        let cfg = Preset::Tiny.config(100, 16);
        let p = ModelParams::zeros(&cfg);
        for ((n, t), (n2, (r, c))) in p.tensors().iter().zip(ModelParams::shapes(&cfg)) {
            assert_eq!(n, &n2);
            assert_eq!(t.len(), r * c, "{n}");
        }
    }
}
