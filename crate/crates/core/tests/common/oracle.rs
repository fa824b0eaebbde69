//! Straightforward dense reference: every instance is run at full padded
//! width with an additive key mask, the head is applied at every position,
//! and only then are the masked entries selected.

use mlm_budget::corpus::MaskedInstance;
use mlm_budget::model::params::{LayerNorm, Linear};
use mlm_budget::model::{ModelConfig, ModelParams};

fn lin(x: &[Vec<f64>], l: &Linear) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..l.d_out)
                .map(|j| l.bias[j] + (0..l.d_in).map(|i| row[i] * l.weight[i * l.d_out + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn ln(x: &[Vec<f64>], p: &LayerNorm, eps: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mu = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(j, v)| p.gamma[j] * (v - mu) / (var + eps).sqrt() + p.beta[j])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

/// Full-position logits `seq_len × V` for one instance.
pub fn dense_logits(p: &ModelParams, cfg: &ModelConfig, inst: &MaskedInstance) -> Vec<Vec<f64>> {
    let (s, d, h) = (cfg.seq_len, cfg.hidden_size, cfg.num_heads);
    let dh = d / h;
    let x: Vec<Vec<f64>> = (0..s)
        .map(|t| {
            let tok = inst.input_ids[t] as usize;
            (0..d)
                .map(|j| p.token_embedding[tok * d + j] + p.position_embedding[t * d + j])
                .collect()
        })
        .collect();
    let mut x = ln(&x, &p.embedding_ln, cfg.layer_norm_eps);
    for layer in &p.layers {
        let q = lin(&x, &layer.query);
        let k = lin(&x, &layer.key);
        let v = lin(&x, &layer.value);
        let mut ctx = vec![vec![0.0; d]; s];
        for head in 0..h {
            for i in 0..s {
                let mut scores: Vec<f64> = (0..s)
                    .map(|j| {
                        if j >= inst.true_length {
                            f64::NEG_INFINITY
                        } else {
                            (0..dh).map(|c| q[i][head * dh + c] * k[j][head * dh + c]).sum::<f64>() / (dh as f64).sqrt()
                        }
                    })
                    .collect();
                let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|v| (v - mx).exp()).sum();
                for sc in scores.iter_mut() {
                    *sc = (*sc - mx).exp() / z;
                }
                for c in 0..dh {
                    ctx[i][head * dh + c] = (0..s).map(|j| scores[j] * v[j][head * dh + c]).sum();
                }
            }
        }
        let a = lin(&ctx, &layer.attn_out);
        let y1 = ln(&add(&x, &a), &layer.attn_ln, cfg.layer_norm_eps);
        let f: Vec<Vec<f64>> = lin(&y1, &layer.ffn_in)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let f2 = lin(&f, &layer.ffn_out);
        x = ln(&add(&y1, &f2), &layer.ffn_ln, cfg.layer_norm_eps);
    }
    let t: Vec<Vec<f64>> = lin(&x, &p.head_transform)
        .into_iter()
        .map(|r| r.into_iter().map(gelu).collect())
        .collect();
    let t = ln(&t, &p.head_ln, cfg.layer_norm_eps);
    t.iter()
        .map(|row| {
            (0..cfg.vocab_size)
                .map(|w| p.output_bias[w] + (0..d).map(|j| row[j] * p.token_embedding[w * d + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Mean cross-entropy over all masked entries of `batch`, computed densely.
pub fn dense_loss(p: &ModelParams, cfg: &ModelConfig, batch: &[MaskedInstance]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for inst in batch {
        let logits = dense_logits(p, cfg, inst);
        for (&pos, &label) in inst.mask_positions.iter().zip(&inst.labels) {
            let row = &logits[pos as usize];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            total += lse - row[label as usize];
            count += 1;
        }
    }
    total / count as f64
}
