//! AdamW with bias correction and decoupled weight decay.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global-norm clipping threshold; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-6,
            weight_decay: 0.01,
            grad_clip: 0.0,
        }
    }
}

impl OptimizerHyper {
    pub fn validate(&self) -> Result<(), OptimError> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.grad_clip >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::Hyper(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("invalid optimizer hyperparameters: {0}")]
    Hyper(String),
    #[error("non-finite gradient in `{name}` at index {index}")]
    NonFiniteGradient { name: String, index: usize },
    #[error("shape mismatch for `{name}`: {detail}")]
    Shape { name: String, detail: String },
    #[error("learning rate must be finite and >= 0, got {0}")]
    LearningRate(f64),
}

/// Anything exposing its tensors as named flat buffers in a stable order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_elements(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// A flat list of named buffers. Handy for tests and small problems.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedBuffers(pub Vec<(String, Vec<f64>)>);

impl Parameters for NamedBuffers {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        self.0.iter().map(|(n, b)| (n.clone(), b.as_slice())).collect()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        self.0.iter_mut().map(|(n, b)| (n.clone(), b.as_mut_slice())).collect()
    }
}

/// First and second moments per tensor plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl OptimizerState {
    pub fn zeros_like<P: Parameters + ?Sized>(params: &P) -> Self {
        let m: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        let v = m.clone();
        Self { m, v, t: 0 }
    }
}

/// One AdamW update in place.
///
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, then
/// `θ ← θ − lr·(m̂/(√v̂+ε) + wd·θ)` with bias-corrected `m̂`, `v̂`.
pub fn adamw_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    hyper: &OptimizerHyper,
    lr: f64,
) -> Result<(), OptimError> {
    hyper.validate()?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(OptimError::LearningRate(lr));
    }
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    if grads.len() != params.len() || params.len() != state.m.len() {
        return Err(OptimError::Shape {
            name: "<all>".into(),
            detail: format!(
                "{} parameter, {} gradient, {} state tensors",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        });
    }
    let mut sq_norm = 0.0;
    for ((name, g), ((_, theta), m)) in grads.iter().zip(params.iter().zip(&state.m)) {
        if theta.len() != g.len() || theta.len() != m.len() {
            return Err(OptimError::Shape {
                name: name.clone(),
                detail: format!("param {} grad {} state {}", theta.len(), g.len(), m.len()),
            });
        }
        if let Some(index) = g.iter().position(|x| !x.is_finite()) {
            return Err(OptimError::NonFiniteGradient {
                name: name.clone(),
                index,
            });
        }
        sq_norm += g.iter().map(|x| x * x).sum::<f64>();
    }
    let clip_scale = if hyper.grad_clip > 0.0 && sq_norm.sqrt() > hyper.grad_clip {
        hyper.grad_clip / sq_norm.sqrt()
    } else {
        1.0
    };

    let t = state.t + 1;
    let bc1 = 1.0 - hyper.beta1.powi(t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(t as i32);
    for (((_, g), (_, theta)), (m, v)) in grads
        .iter()
        .zip(params.iter_mut())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..theta.len() {
            let gi = g[i] * clip_scale;
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= lr * (m_hat / (v_hat.sqrt() + hyper.eps) + hyper.weight_decay * theta[i]);
        }
    }
    state.t = t;
    Ok(())
}
