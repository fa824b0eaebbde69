//! Row-wise kernels shared by the encoder's forward and backward passes.

use rand::Rng;

use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Default)]
pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

/// Layer norm over each `d`-wide row of `x`.
pub fn layer_norm(x: &[f64], d: usize, gamma: &[f64], beta: &[f64], eps: f64) -> (Vec<f64>, LnCache) {
    let n = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; n];
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + eps).sqrt();
        rstd[r] = s;
        for j in 0..d {
            let h = (row[j] - mean) * s;
            xhat[r * d + j] = h;
            y[r * d + j] = gamma[j] * h + beta[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns `dx`; accumulates into `dgamma`, `dbeta`.
pub fn layer_norm_backward(
    dy: &[f64],
    d: usize,
    gamma: &[f64],
    cache: &LnCache,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for r in 0..n {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let mut sum = 0.0;
        let mut dot = 0.0;
        for j in 0..d {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            sum += dxhat[j];
            dot += dxhat[j] * xh[j];
        }
        let (mean, mean_dot) = (sum / d as f64, dot / d as f64);
        let s = cache.rstd[r];
        for j in 0..d {
            dx[r * d + j] = s * (dxhat[j] - mean - xh[j] * mean_dot);
        }
    }
    dx
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// In-place numerically stable softmax over one row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Cross-entropy of each `v`-wide logit row against `labels`. Overwrites the
/// logits with softmax probabilities; returns the summed loss.
pub fn softmax_cross_entropy(logits: &mut [f64], v: usize, labels: &[u32]) -> f64 {
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = &mut logits[r * v..(r + 1) * v];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[label as usize];
        for x in row.iter_mut() {
            *x = (*x - lse).exp();
        }
    }
    total
}

/// Dropout site identifiers within a layer.
#[derive(Debug, Clone, Copy)]
pub enum Site {
    Embedding = 0,
    AttentionProbs = 1,
    AttentionOutput = 2,
    FfnOutput = 3,
}

/// Keep-mask pre-scaled by `1/(1-p)` (so zeros drop), drawn from a stream
/// keyed by everything that identifies the site.
pub fn dropout_mask(len: usize, p: f64, seed: u64, parts: &[u64]) -> Vec<f64> {
    let mut rng = stream(seed, Domain::Dropout, parts);
    let scale = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
        .collect()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64).powi(2)).collect();
        let (y, _) = layer_norm(&x, 4, &[1.0; 4], &[0.0; 4], 1e-12);
        for r in y.chunks(4) {
            let m = r.iter().sum::<f64>() / 4.0;
            let v = r.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_backward_matches_differences() {
        let d = 5;
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 1.3).sin()).collect();
        let gamma: Vec<f64> = (0..d).map(|i| 0.5 + i as f64 * 0.1).collect();
        let beta = vec![0.1; d];
        let w: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).cos()).collect();
        let f = |x: &[f64]| -> f64 {
            let (y, _) = layer_norm(x, d, &gamma, &beta, 1e-12);
            y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer_norm(&x, d, &gamma, &beta, 1e-12);
        let (mut dg, mut db) = (vec![0.0; d], vec![0.0; d]);
        let dx = layer_norm_backward(&w, d, &gamma, &cache, &mut dg, &mut db);
        for i in 0..x.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-7, "{i}: {fd} vs {}", dx[i]);
        }
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        for &x in &[-2.0, -0.3, 0.0, 0.4, 1.7] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut logits = vec![0.0; 2 * 10];
        let l = softmax_cross_entropy(&mut logits, 10, &[3, 7]);
        assert!((l - 2.0 * 10f64.ln()).abs() < 1e-12);
        assert!(logits.iter().all(|&p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn dropout_mask_rate_and_determinism() {
        let m = dropout_mask(100_000, 0.1, 9, &[1, 2, 3]);
        let dropped = m.iter().filter(|&&x| x == 0.0).count() as f64 / 1e5;
        assert!((dropped - 0.1).abs() < 0.005);
        assert!(m.iter().all(|&x| x == 0.0 || (x - 1.0 / 0.9).abs() < 1e-15));
        assert_eq!(m, dropout_mask(100_000, 0.1, 9, &[1, 2, 3]));
        assert_ne!(m, dropout_mask(100_000, 0.1, 9, &[1, 2, 4]));
    }
}
