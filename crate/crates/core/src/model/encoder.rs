//! Post-LN transformer encoder with a sparse masked-LM head.
//!
//! Padding is never materialised: the valid tokens of every instance are
//! packed into consecutive rows and attention runs per instance, so padded
//! positions cannot influence anything.

use super::batch::Batch;
use super::config::ModelConfig;
use super::error::ModelError;
use super::linalg::{gemm, matmul, matmul_nt, matmul_tn, View, ViewMut};
use super::ops::{self, LnCache, Site};
use super::params::{Linear, ModelParams};

/// Dropout is applied only in `Train`; `Eval` is fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    Train { seed: u64, step: u64 },
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Mean cross-entropy over the batch's masked positions.
    pub loss: f64,
    pub loss_sum: f64,
    pub masked: usize,
    /// `masked × vocab_size`.
    pub logits: Vec<f64>,
}

struct LayerCache {
    x_in: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    prob_masks: Vec<f64>,
    ctx: Vec<f64>,
    attn_out_mask: Vec<f64>,
    ln1: LnCache,
    y1: Vec<f64>,
    f1: Vec<f64>,
    g: Vec<f64>,
    ffn_mask: Vec<f64>,
    ln2: LnCache,
}

struct Cache {
    emb_ln: LnCache,
    emb_mask: Vec<f64>,
    layers: Vec<LayerCache>,
    hidden: Vec<f64>,
    rows: Vec<usize>,
    gathered: Vec<f64>,
    t1: Vec<f64>,
    head_ln: LnCache,
    t3: Vec<f64>,
    probs: Vec<f64>,
}

/// Per-instance geometry shared by all layers.
struct Layout {
    offsets: Vec<usize>,
    lengths: Vec<usize>,
    /// Start of each instance's `heads × L × L` block of attention scores.
    att_offsets: Vec<usize>,
    att_len: usize,
    rows: usize,
}

impl Layout {
    fn new(batch: &Batch, heads: usize) -> Self {
        let mut att_offsets = Vec::with_capacity(batch.len());
        let mut acc = 0;
        for &l in &batch.lengths {
            att_offsets.push(acc);
            acc += heads * l * l;
        }
        Layout {
            offsets: batch.offsets(),
            lengths: batch.lengths.clone(),
            att_offsets,
            att_len: acc,
            rows: batch.total_tokens(),
        }
    }
}

fn linear(x: &[f64], n: usize, lin: &Linear) -> Vec<f64> {
    let mut y = vec![0.0; n * lin.d_out];
    matmul(x, &lin.weight, &mut y, n, lin.d_in, lin.d_out, false);
    for row in y.chunks_mut(lin.d_out) {
        for (a, b) in row.iter_mut().zip(&lin.bias) {
            *a += b;
        }
    }
    y
}

fn linear_backward(x: &[f64], dy: &[f64], n: usize, lin: &Linear, grad: &mut Linear, dx: Option<&mut [f64]>) {
    matmul_tn(x, dy, &mut grad.weight, lin.d_in, n, lin.d_out, true);
    for row in dy.chunks(lin.d_out) {
        for (a, b) in grad.bias.iter_mut().zip(row) {
            *a += b;
        }
    }
    if let Some(dx) = dx {
        matmul_nt(dy, &lin.weight, dx, n, lin.d_out, lin.d_in, true);
    }
}

fn seed_step(mode: Mode) -> Option<(u64, u64)> {
    match mode {
        Mode::Eval => None,
        Mode::Train { seed, step } => Some((seed, step)),
    }
}

/// Per-row dropout masks for a packed `rows × width` activation; each
/// instance's block draws from its own stream.
fn row_masks(batch: &Batch, lay: &Layout, width: usize, p: f64, mode: Mode, layer: u64, site: Site) -> Vec<f64> {
    let Some((seed, step)) = seed_step(mode) else {
        return Vec::new();
    };
    if p == 0.0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(lay.rows * width);
    for (i, &l) in lay.lengths.iter().enumerate() {
        out.extend(ops::dropout_mask(
            l * width,
            p,
            seed,
            &[step, batch.keys[i], layer, site as u64],
        ));
    }
    out
}

fn apply_mask(x: &mut [f64], mask: &[f64]) {
    if !mask.is_empty() {
        for (a, m) in x.iter_mut().zip(mask) {
            *a *= m;
        }
    }
}

fn check(x: &[f64], layer: Option<usize>) -> Result<(), ModelError> {
    if ops::all_finite(x) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { layer })
    }
}

fn forward_cached(
    p: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    mode: Mode,
) -> Result<(ForwardOutput, Cache), ModelError> {
    cfg.validate()?;
    batch.validate(cfg.vocab_size, cfg.seq_len)?;
    let d = cfg.hidden_size;
    let heads = cfg.num_heads;
    let dh = cfg.head_size();
    let scale = 1.0 / (dh as f64).sqrt();
    let lay = Layout::new(batch, heads);
    let n = lay.rows;

    let mut x0 = vec![0.0; n * d];
    for (i, &l) in lay.lengths.iter().enumerate() {
        for pos in 0..l {
            let tok = batch.input_ids[i * batch.seq_len + pos] as usize;
            let r = lay.offsets[i] + pos;
            let row = &mut x0[r * d..(r + 1) * d];
            let e = &p.token_embedding[tok * d..(tok + 1) * d];
            let q = &p.position_embedding[pos * d..(pos + 1) * d];
            for j in 0..d {
                row[j] = e[j] + q[j];
            }
        }
    }
    let (mut x, emb_ln) = ops::layer_norm(&x0, d, &p.embedding_ln.gamma, &p.embedding_ln.beta, cfg.layer_norm_eps);
    let emb_mask = row_masks(batch, &lay, d, cfg.dropout, mode, 0, Site::Embedding);
    apply_mask(&mut x, &emb_mask);
    check(&x, None)?;

    let mut layers = Vec::with_capacity(cfg.num_layers);
    for (li, lp) in p.layers.iter().enumerate() {
        let lkey = li as u64 + 1;
        let q = linear(&x, n, &lp.query);
        let k = linear(&x, n, &lp.key);
        let v = linear(&x, n, &lp.value);
        let mut probs = vec![0.0; lay.att_len];
        let mut prob_masks = Vec::new();
        let mut ctx = vec![0.0; n * d];
        let attn_p = cfg.attention_dropout;
        for (i, &l) in lay.lengths.iter().enumerate() {
            let o = lay.offsets[i];
            for h in 0..heads {
                let base = lay.att_offsets[i] + h * l * l;
                let s = &mut probs[base..base + l * l];
                gemm(
                    scale,
                    View::block(&q, d, o, l, h * dh, dh),
                    View::block(&k, d, o, l, h * dh, dh).t(),
                    0.0,
                    ViewMut::dense(s, l, l),
                );
                for row in s.chunks_mut(l) {
                    ops::softmax_row(row);
                }
                let dropped;
                let pd: &[f64] = match seed_step(mode) {
                    Some((seed, step)) if attn_p > 0.0 => {
                        let m = ops::dropout_mask(
                            l * l,
                            attn_p,
                            seed,
                            &[step, batch.keys[i], lkey, Site::AttentionProbs as u64, h as u64],
                        );
                        dropped = s.iter().zip(&m).map(|(a, b)| a * b).collect::<Vec<_>>();
                        prob_masks.extend_from_slice(&m);
                        &dropped
                    }
                    _ => s,
                };
                gemm(
                    1.0,
                    View::dense(pd, l, l),
                    View::block(&v, d, o, l, h * dh, dh),
                    0.0,
                    ViewMut::block(&mut ctx, d, o, l, h * dh, dh),
                );
            }
        }
        let mut a = linear(&ctx, n, &lp.attn_out);
        let attn_out_mask = row_masks(batch, &lay, d, cfg.dropout, mode, lkey, Site::AttentionOutput);
        apply_mask(&mut a, &attn_out_mask);
        for (r, xi) in a.iter_mut().zip(&x) {
            *r += xi;
        }
        let (y1, ln1) = ops::layer_norm(&a, d, &lp.attn_ln.gamma, &lp.attn_ln.beta, cfg.layer_norm_eps);
        let f1 = linear(&y1, n, &lp.ffn_in);
        let g: Vec<f64> = f1.iter().map(|&z| ops::gelu(z)).collect();
        let mut f2 = linear(&g, n, &lp.ffn_out);
        let ffn_mask = row_masks(batch, &lay, d, cfg.dropout, mode, lkey, Site::FfnOutput);
        apply_mask(&mut f2, &ffn_mask);
        for (r, yi) in f2.iter_mut().zip(&y1) {
            *r += yi;
        }
        let (y2, ln2) = ops::layer_norm(&f2, d, &lp.ffn_ln.gamma, &lp.ffn_ln.beta, cfg.layer_norm_eps);
        check(&y2, Some(li))?;
        let x_in = std::mem::replace(&mut x, y2);
        layers.push(LayerCache {
            x_in,
            q,
            k,
            v,
            probs,
            prob_masks,
            ctx,
            attn_out_mask,
            ln1,
            y1,
            f1,
            g,
            ffn_mask,
            ln2,
        });
    }

    let m = batch.masked_count();
    let rows: Vec<usize> = batch.mask_index.iter().map(|&(i, pos)| lay.offsets[i] + pos).collect();
    let mut gathered = vec![0.0; m * d];
    for (j, &r) in rows.iter().enumerate() {
        gathered[j * d..(j + 1) * d].copy_from_slice(&x[r * d..(r + 1) * d]);
    }
    let t1 = linear(&gathered, m, &p.head_transform);
    let t2: Vec<f64> = t1.iter().map(|&z| ops::gelu(z)).collect();
    let (t3, head_ln) = ops::layer_norm(&t2, d, &p.head_ln.gamma, &p.head_ln.beta, cfg.layer_norm_eps);
    let vsz = cfg.vocab_size;
    let mut logits = vec![0.0; m * vsz];
    matmul_nt(&t3, &p.token_embedding, &mut logits, m, d, vsz, false);
    for row in logits.chunks_mut(vsz) {
        for (a, b) in row.iter_mut().zip(&p.output_bias) {
            *a += b;
        }
    }
    check(&logits, Some(cfg.num_layers))?;
    let mut probs = logits.clone();
    let loss_sum = ops::softmax_cross_entropy(&mut probs, vsz, &batch.labels);
    if !loss_sum.is_finite() {
        return Err(ModelError::Diverged(loss_sum));
    }
    let out = ForwardOutput {
        loss: loss_sum / m as f64,
        loss_sum,
        masked: m,
        logits,
    };
    let cache = Cache {
        emb_ln,
        emb_mask,
        layers,
        hidden: x,
        rows,
        gathered,
        t1,
        head_ln,
        t3,
        probs,
    };
    Ok((out, cache))
}

/// Loss and masked-position logits.
pub fn forward_mlm(p: &ModelParams, cfg: &ModelConfig, batch: &Batch, mode: Mode) -> Result<ForwardOutput, ModelError> {
    forward_cached(p, cfg, batch, mode).map(|(o, _)| o)
}

/// Adds the gradient of `ce_scale · Σ cross-entropy` into `grads`.
///
/// Returns the forward output. With `ce_scale = 1/M` this is the gradient
/// of the mean loss; trainers pass `1/M_total` across micro-batches.
pub fn accumulate_gradients(
    p: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    mode: Mode,
    ce_scale: f64,
    grads: &mut ModelParams,
) -> Result<ForwardOutput, ModelError> {
    let (out, c) = forward_cached(p, cfg, batch, mode)?;
    let d = cfg.hidden_size;
    let heads = cfg.num_heads;
    let dh = cfg.head_size();
    let scale = 1.0 / (dh as f64).sqrt();
    let vsz = cfg.vocab_size;
    let lay = Layout::new(batch, heads);
    let n = lay.rows;
    let m = out.masked;

    let mut dlogits = c.probs;
    for (j, &label) in batch.labels.iter().enumerate() {
        dlogits[j * vsz + label as usize] -= 1.0;
    }
    for g in dlogits.iter_mut() {
        *g *= ce_scale;
    }
    for row in dlogits.chunks(vsz) {
        for (a, b) in grads.output_bias.iter_mut().zip(row) {
            *a += b;
        }
    }
    matmul_tn(&dlogits, &c.t3, &mut grads.token_embedding, vsz, m, d, true);
    let mut dt3 = vec![0.0; m * d];
    matmul(&dlogits, &p.token_embedding, &mut dt3, m, vsz, d, false);
    drop(dlogits);
    let mut dt2 = ops::layer_norm_backward(
        &dt3,
        d,
        &p.head_ln.gamma,
        &c.head_ln,
        &mut grads.head_ln.gamma,
        &mut grads.head_ln.beta,
    );
    for (g, &z) in dt2.iter_mut().zip(&c.t1) {
        *g *= ops::gelu_grad(z);
    }
    let mut dgathered = vec![0.0; m * d];
    linear_backward(
        &c.gathered,
        &dt2,
        m,
        &p.head_transform,
        &mut grads.head_transform,
        Some(&mut dgathered),
    );
    let mut dx = vec![0.0; n * d];
    for (j, &r) in c.rows.iter().enumerate() {
        for t in 0..d {
            dx[r * d + t] += dgathered[j * d + t];
        }
    }
    debug_assert_eq!(c.hidden.len(), n * d);

    for (li, lc) in c.layers.iter().enumerate().rev() {
        let lp = &p.layers[li];
        let lg = &mut grads.layers[li];
        // y2 = LN(y1 + drop(ffn_out(gelu(ffn_in(y1)))))
        let dr2 = ops::layer_norm_backward(
            &dx,
            d,
            &lp.ffn_ln.gamma,
            &lc.ln2,
            &mut lg.ffn_ln.gamma,
            &mut lg.ffn_ln.beta,
        );
        let mut df2 = dr2.clone();
        apply_mask(&mut df2, &lc.ffn_mask);
        let mut dg = vec![0.0; n * cfg.ffn_size];
        linear_backward(&lc.g, &df2, n, &lp.ffn_out, &mut lg.ffn_out, Some(&mut dg));
        for (g, &z) in dg.iter_mut().zip(&lc.f1) {
            *g *= ops::gelu_grad(z);
        }
        let mut dy1 = dr2;
        linear_backward(&lc.y1, &dg, n, &lp.ffn_in, &mut lg.ffn_in, Some(&mut dy1));
        // y1 = LN(x + drop(attn_out(ctx)))
        let dr1 = ops::layer_norm_backward(
            &dy1,
            d,
            &lp.attn_ln.gamma,
            &lc.ln1,
            &mut lg.attn_ln.gamma,
            &mut lg.attn_ln.beta,
        );
        let mut da = dr1.clone();
        apply_mask(&mut da, &lc.attn_out_mask);
        let mut dctx = vec![0.0; n * d];
        linear_backward(&lc.ctx, &da, n, &lp.attn_out, &mut lg.attn_out, Some(&mut dctx));

        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        let mut mask_cursor = 0;
        for (i, &l) in lay.lengths.iter().enumerate() {
            let o = lay.offsets[i];
            let mut dp = vec![0.0; l * l];
            let mut pd = vec![0.0; l * l];
            for h in 0..heads {
                let base = lay.att_offsets[i] + h * l * l;
                let probs = &lc.probs[base..base + l * l];
                let mask = if lc.prob_masks.is_empty() {
                    None
                } else {
                    let mk = &lc.prob_masks[mask_cursor..mask_cursor + l * l];
                    mask_cursor += l * l;
                    Some(mk)
                };
                match mask {
                    Some(mk) => {
                        for t in 0..l * l {
                            pd[t] = probs[t] * mk[t];
                        }
                    }
                    None => pd.copy_from_slice(probs),
                }
                // ctx = Pd · V
                gemm(
                    1.0,
                    View::block(&dctx, d, o, l, h * dh, dh),
                    View::block(&lc.v, d, o, l, h * dh, dh).t(),
                    0.0,
                    ViewMut::dense(&mut dp, l, l),
                );
                gemm(
                    1.0,
                    View::dense(&pd, l, l).t(),
                    View::block(&dctx, d, o, l, h * dh, dh),
                    0.0,
                    ViewMut::block(&mut dv, d, o, l, h * dh, dh),
                );
                if let Some(mk) = mask {
                    for t in 0..l * l {
                        dp[t] *= mk[t];
                    }
                }
                // softmax backward, reusing `dp` as dS
                for r in 0..l {
                    let pr = &probs[r * l..(r + 1) * l];
                    let dr = &mut dp[r * l..(r + 1) * l];
                    let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for t in 0..l {
                        dr[t] = pr[t] * (dr[t] - dot);
                    }
                }
                gemm(
                    scale,
                    View::dense(&dp, l, l),
                    View::block(&lc.k, d, o, l, h * dh, dh),
                    0.0,
                    ViewMut::block(&mut dq, d, o, l, h * dh, dh),
                );
                gemm(
                    scale,
                    View::dense(&dp, l, l).t(),
                    View::block(&lc.q, d, o, l, h * dh, dh),
                    0.0,
                    ViewMut::block(&mut dk, d, o, l, h * dh, dh),
                );
            }
        }
        let mut dxin = dr1;
        linear_backward(&lc.x_in, &dq, n, &lp.query, &mut lg.query, Some(&mut dxin));
        linear_backward(&lc.x_in, &dk, n, &lp.key, &mut lg.key, Some(&mut dxin));
        linear_backward(&lc.x_in, &dv, n, &lp.value, &mut lg.value, Some(&mut dxin));
        dx = dxin;
    }

    apply_mask(&mut dx, &c.emb_mask);
    let dx0 = ops::layer_norm_backward(
        &dx,
        d,
        &p.embedding_ln.gamma,
        &c.emb_ln,
        &mut grads.embedding_ln.gamma,
        &mut grads.embedding_ln.beta,
    );
    for (i, &l) in lay.lengths.iter().enumerate() {
        for pos in 0..l {
            let tok = batch.input_ids[i * batch.seq_len + pos] as usize;
            let r = lay.offsets[i] + pos;
            let g = &dx0[r * d..(r + 1) * d];
            for (j, &gj) in g.iter().enumerate() {
                grads.token_embedding[tok * d + j] += gj;
                grads.position_embedding[pos * d + j] += gj;
            }
        }
    }
    Ok(out)
}

/// Mean loss and its exact gradient with respect to every parameter.
pub fn backward(
    p: &ModelParams,
    cfg: &ModelConfig,
    batch: &Batch,
    mode: Mode,
) -> Result<(ForwardOutput, ModelParams), ModelError> {
    let mut grads = ModelParams::zeros(cfg);
    let m = batch.masked_count().max(1);
    let out = accumulate_gradients(p, cfg, batch, mode, 1.0 / m as f64, &mut grads)?;
    Ok((out, grads))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::MaskedInstance;
    use crate::model::config::Preset;
    use crate::optim::Parameters;

    fn grad_check_config() -> ModelConfig {
        ModelConfig {
            num_layers: 2,
            hidden_size: 16,
            num_heads: 4,
            ffn_size: 32,
            vocab_size: 37,
            seq_len: 12,
            ..ModelConfig::default()
        }
    }

    fn random_instances(rng: &mut ChaCha8Rng, n: usize, cfg: &ModelConfig) -> Vec<MaskedInstance> {
        (0..n)
            .map(|_| {
                let len = rng.random_range(4..=cfg.seq_len);
                let ids: Vec<u32> = (0..len).map(|_| rng.random_range(0..cfg.vocab_size as u32)).collect();
                let k = rng.random_range(1..=3.min(len - 2));
                let positions = rand::seq::index::sample(rng, len - 2, k).into_vec();
                let mut positions: Vec<u32> = positions.into_iter().map(|p| p as u32 + 1).collect();
                positions.sort_unstable();
                MaskedInstance {
                    labels: positions
                        .iter()
                        .map(|_| rng.random_range(0..cfg.vocab_size as u32))
                        .collect(),
                    input_ids: ids,
                    true_length: len,
                    mask_positions: positions,
                    copy_index: None,
                }
            })
            .collect()
    }

    /// Larger-than-default init so every block is far from linear.
    fn perturbed_params(cfg: &ModelConfig, seed: u64) -> ModelParams {
        let mut p = ModelParams::init(&ModelConfig { init_std: 0.3, ..*cfg }, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in p.tensors_mut() {
            if !name.ends_with(".weight") && !name.starts_with("embeddings.") || name.contains(".ln.") {
                for x in t.iter_mut() {
                    *x += rng.random_range(-0.2..0.2);
                }
            }
        }
        p
    }

    fn finite_difference_check(mode: Mode) {
        let cfg = grad_check_config();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = Batch::new(&random_instances(&mut rng, 3, &cfg), cfg.seq_len).unwrap();
        let params = perturbed_params(&cfg, 2);
        let (_, grads) = backward(&params, &cfg, &batch, mode).unwrap();
        let h = 1e-5;
        let mut worst = (0.0, String::new());
        let gt = grads.tensors();
        for (ti, (name, g)) in gt.iter().enumerate() {
            let coords: Vec<usize> = if g.len() <= 200 {
                (0..g.len()).collect()
            } else {
                rand::seq::index::sample(&mut rng, g.len(), 200).into_vec()
            };
            for c in coords {
                let mut plus = params.clone();
                plus.tensors_mut()[ti].1[c] += h;
                let mut minus = params.clone();
                minus.tensors_mut()[ti].1[c] -= h;
                let lp = forward_mlm(&plus, &cfg, &batch, mode).unwrap().loss;
                let lm = forward_mlm(&minus, &cfg, &batch, mode).unwrap().loss;
                let fd = (lp - lm) / (2.0 * h);
                let rel = (fd - g[c]).abs() / fd.abs().max(g[c].abs()).max(1e-6);
                if rel > worst.0 {
                    worst = (rel, format!("{name}[{c}]: fd {fd:e} analytic {:e}", g[c]));
                }
            }
        }
        assert!(worst.0 <= 1e-4, "max relative error {} at {}", worst.0, worst.1);
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(Mode::Eval);
    }

    #[test]
    fn gradients_match_finite_differences_with_fixed_dropout() {
        finite_difference_check(Mode::Train { seed: 4, step: 9 });
    }

    #[test]
    fn logits_shape_and_mean_loss() {
        let cfg = Preset::Tiny.config(100, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut inst = random_instances(&mut rng, 4, &ModelConfig { seq_len: 32, ..cfg });
        for x in &mut inst {
            x.true_length = 32;
            x.input_ids.resize(32, 5);
            x.mask_positions = (1..20).collect();
            x.labels = vec![7; 19];
        }
        let b = Batch::new(&inst, 32).unwrap();
        let out = forward_mlm(&ModelParams::init(&cfg, 1), &cfg, &b, Mode::Eval).unwrap();
        assert_eq!(out.masked, 76);
        assert_eq!(out.logits.len(), 76 * 100);
        assert!((out.loss - out.loss_sum / 76.0).abs() < 1e-15);
    }

    #[test]
    fn random_init_loss_is_near_uniform() {
        let cfg = Preset::Tiny.config(1000, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inst = random_instances(&mut rng, 16, &cfg);
        let b = Batch::new(&inst, 32).unwrap();
        let loss = forward_mlm(&ModelParams::init(&cfg, 9), &cfg, &b, Mode::Eval)
            .unwrap()
            .loss;
        assert!((loss - 1000f64.ln()).abs() <= 0.15, "loss {loss}");
    }

    #[test]
    fn padding_ids_are_ignored() {
        let cfg = grad_check_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instances(&mut rng, 4, &cfg);
        let p = perturbed_params(&cfg, 1);
        let a = Batch::new(&inst, cfg.seq_len).unwrap();
        let mut b = a.clone();
        for (i, &l) in b.lengths.clone().iter().enumerate() {
            for pos in l..cfg.seq_len {
                b.input_ids[i * cfg.seq_len + pos] = rng.random_range(0..37);
            }
        }
        let mode = Mode::Train { seed: 1, step: 1 };
        assert_eq!(
            forward_mlm(&p, &cfg, &a, mode).unwrap().loss,
            forward_mlm(&p, &cfg, &b, mode).unwrap().loss
        );
    }

    #[test]
    fn unused_positions_get_zero_gradient() {
        let cfg = grad_check_config();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut inst = random_instances(&mut rng, 3, &cfg);
        for x in &mut inst {
            x.true_length = x.true_length.min(7);
            x.input_ids.truncate(x.true_length);
            x.mask_positions.retain(|&q| (q as usize) < x.true_length - 1);
            x.labels.truncate(x.mask_positions.len());
            if x.mask_positions.is_empty() {
                x.mask_positions.push(1);
                x.labels.push(3);
            }
        }
        let b = Batch::new(&inst, cfg.seq_len).unwrap();
        let (_, g) = backward(&perturbed_params(&cfg, 5), &cfg, &b, Mode::Eval).unwrap();
        let d = cfg.hidden_size;
        assert!(g.position_embedding[7 * d..].iter().all(|&x| x == 0.0));
        assert!(g.position_embedding[..d].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn instance_order_does_not_matter() {
        let cfg = grad_check_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instances(&mut rng, 5, &cfg);
        let mut rev = inst.clone();
        rev.reverse();
        let p = perturbed_params(&cfg, 3);
        let (oa, ga) = backward(&p, &cfg, &Batch::new(&inst, cfg.seq_len).unwrap(), Mode::Eval).unwrap();
        let (ob, gb) = backward(&p, &cfg, &Batch::new(&rev, cfg.seq_len).unwrap(), Mode::Eval).unwrap();
        assert!((oa.loss - ob.loss).abs() < 1e-13);
        assert!(ga.max_abs_diff(&gb) < 1e-13);
    }

    #[test]
    fn dropout_is_reproducible_and_train_only() {
        let cfg = grad_check_config();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = Batch::new(&random_instances(&mut rng, 3, &cfg), cfg.seq_len).unwrap();
        let p = perturbed_params(&cfg, 3);
        let t = |seed, step| forward_mlm(&p, &cfg, &b, Mode::Train { seed, step }).unwrap().loss;
        assert_eq!(t(1, 2), t(1, 2));
        assert_ne!(t(1, 2), t(1, 3));
        let e = forward_mlm(&p, &cfg, &b, Mode::Eval).unwrap().loss;
        assert_ne!(t(1, 2), e);
        let no_drop = ModelConfig {
            dropout: 0.0,
            attention_dropout: 0.0,
            ..cfg
        };
        assert_eq!(
            forward_mlm(&p, &no_drop, &b, Mode::Train { seed: 1, step: 2 })
                .unwrap()
                .loss,
            e
        );
    }

    #[test]
    fn non_finite_activations_name_the_layer() {
        let cfg = grad_check_config();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = Batch::new(&random_instances(&mut rng, 2, &cfg), cfg.seq_len).unwrap();
        let mut p = perturbed_params(&cfg, 3);
        p.layers[1].ffn_out.bias[0] = f64::NAN;
        match forward_mlm(&p, &cfg, &b, Mode::Eval) {
            Err(ModelError::NonFinite { layer: Some(1) }) => {}
            other => panic!("{other:?}"),
        }
        let mut p = perturbed_params(&cfg, 3);
        p.embedding_ln.beta[0] = f64::INFINITY;
        assert!(matches!(
            forward_mlm(&p, &cfg, &b, Mode::Eval),
            Err(ModelError::NonFinite { layer: None })
        ));
    }
}
