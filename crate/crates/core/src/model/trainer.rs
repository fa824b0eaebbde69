use std::sync::Arc;

use rand::seq::SliceRandom;

use super::batch::Batch;
use super::config::ModelConfig;
use super::encoder::{accumulate_gradients, forward_mlm, Mode};
use super::error::ModelError;
use super::params::ModelParams;
use crate::clock::ClockMode;
use crate::corpus::MaskedInstance;
use crate::optim::{adamw_step, OptimizerHyper, OptimizerState};
use crate::rng::{stream, Domain};

/// Position in the training stream: epoch `epoch`, `position` instances in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DataCursor {
    pub epoch: u64,
    pub position: u64,
}

/// Everything that evolves during training; together with the data and the
/// configuration this determines all future steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub step: u64,
    pub cursor: DataCursor,
    pub samples_seen: u64,
    /// Accumulated measured step time.
    pub elapsed_seconds: f64,
}

impl TrainerState {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Self {
        let params = ModelParams::init(cfg, seed);
        let optimizer = OptimizerState::zeros_like(&params);
        Self {
            params,
            optimizer,
            step: 0,
            cursor: DataCursor::default(),
            samples_seen: 0,
            elapsed_seconds: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub samples: usize,
    pub masked: usize,
}

/// One optimizer update from several micro-batches.
///
/// Each micro-batch contributes the gradient of its summed cross-entropy
/// scaled by `1/M_total`, so the accumulated gradient is that of the mean
/// loss over the whole effective batch, independent of how it was split.
pub fn train_step(
    state: &mut TrainerState,
    cfg: &ModelConfig,
    hyper: &OptimizerHyper,
    micro_batches: &[Batch],
    lr: f64,
    mode: Mode,
) -> Result<StepMetrics, ModelError> {
    if micro_batches.is_empty() {
        return Err(ModelError::Batch("no micro-batches".into()));
    }
    let total_masked: usize = micro_batches.iter().map(|b| b.masked_count()).sum();
    if total_masked == 0 {
        return Err(ModelError::Batch("effective batch has no masked positions".into()));
    }
    let scale = 1.0 / total_masked as f64;
    let mut grads = ModelParams::zeros(cfg);
    let mut loss_sum = 0.0;
    for b in micro_batches {
        loss_sum += accumulate_gradients(&state.params, cfg, b, mode, scale, &mut grads)?.loss_sum;
    }
    let loss = loss_sum * scale;
    if !loss.is_finite() {
        return Err(ModelError::Diverged(loss));
    }
    adamw_step(&mut state.params, &grads, &mut state.optimizer, hyper, lr)?;
    if !state.params.all_finite() {
        return Err(ModelError::Diverged(f64::NAN));
    }
    let samples: usize = micro_batches.iter().map(|b| b.len()).sum();
    let m = StepMetrics {
        step: state.step,
        lr,
        loss,
        samples,
        masked: total_masked,
    };
    state.step += 1;
    state.samples_seen += samples as u64;
    Ok(m)
}

/// Mean cross-entropy over every masked position of `data`, dropout off.
pub fn evaluate(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &[MaskedInstance],
    chunk: usize,
) -> Result<f64, ModelError> {
    let mut loss = 0.0;
    let mut masked = 0usize;
    for part in data.chunks(chunk.max(1)) {
        let batch = Batch::new(part, cfg.seq_len)?;
        if batch.masked_count() == 0 {
            continue;
        }
        let out = forward_mlm(params, cfg, &batch, Mode::Eval)?;
        loss += out.loss_sum;
        masked += out.masked;
    }
    if masked == 0 {
        return Err(ModelError::EmptyEval);
    }
    Ok(loss / masked as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub model: ModelConfig,
    pub optim: OptimizerHyper,
    /// Effective batch size (instances per update).
    pub bsz: usize,
    /// Largest micro-batch; `bsz` is split into `ceil(bsz / micro_batch)`
    /// nearly equal parts.
    pub micro_batch: usize,
    pub seed: u64,
    pub clock: ClockMode,
}

/// A training run over an in-memory dataset.
#[derive(Clone)]
pub struct Trainer {
    pub config: TrainerConfig,
    pub state: TrainerState,
    data: Arc<Vec<MaskedInstance>>,
    order: Vec<u32>,
    order_epoch: u64,
}

impl Trainer {
    pub fn new(config: TrainerConfig, data: Arc<Vec<MaskedInstance>>) -> Result<Self, ModelError> {
        let state = TrainerState::new(&config.model, config.seed);
        Self::resume(config, data, state)
    }

    pub fn resume(
        config: TrainerConfig,
        data: Arc<Vec<MaskedInstance>>,
        state: TrainerState,
    ) -> Result<Self, ModelError> {
        config.model.validate()?;
        config.optim.validate()?;
        if config.bsz == 0 || config.micro_batch == 0 {
            return Err(ModelError::Config("bsz and micro_batch must be positive".into()));
        }
        if data.is_empty() {
            return Err(ModelError::Batch("empty training set".into()));
        }
        let mut t = Self {
            config,
            state,
            data,
            order: Vec::new(),
            order_epoch: u64::MAX,
        };
        t.ensure_order();
        Ok(t)
    }

    /// Micro-batch sizes for one update.
    pub fn split_sizes(bsz: usize, micro: usize) -> Vec<usize> {
        let k = bsz.div_ceil(micro);
        (0..k).map(|i| bsz / k + usize::from(i < bsz % k)).collect()
    }

    fn ensure_order(&mut self) {
        if self.order_epoch == self.state.cursor.epoch {
            return;
        }
        self.order = (0..self.data.len() as u32).collect();
        // epoch 0 keeps the on-disk (already shuffled) order
        if self.state.cursor.epoch > 0 {
            let mut rng = stream(
                self.config.seed,
                Domain::Shuffle,
                &[0x7261_696e, self.state.cursor.epoch],
            );
            self.order.shuffle(&mut rng);
        }
        self.order_epoch = self.state.cursor.epoch;
    }

    fn next_instances(&mut self, n: usize) -> Vec<MaskedInstance> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            self.ensure_order();
            let pos = self.state.cursor.position as usize;
            out.push(self.data[self.order[pos] as usize].clone());
            self.state.cursor.position += 1;
            if self.state.cursor.position as usize == self.data.len() {
                self.state.cursor = DataCursor {
                    epoch: self.state.cursor.epoch + 1,
                    position: 0,
                };
            }
        }
        out
    }

    /// Assembles the micro-batches of the next update; dropout keys are the
    /// instance's index within the effective batch.
    pub fn next_micro_batches(&mut self) -> Result<Vec<Batch>, ModelError> {
        let sizes = Self::split_sizes(self.config.bsz, self.config.micro_batch);
        let mut key = 0u64;
        let mut out = Vec::with_capacity(sizes.len());
        for s in sizes {
            let inst = self.next_instances(s);
            out.push(Batch::new(&inst, self.config.model.seq_len)?.with_keys(key..key + s as u64));
            key += s as u64;
        }
        Ok(out)
    }

    /// One timed update. The measured step time (batch assembly included)
    /// is added to `state.elapsed_seconds` and returned.
    pub fn step(&mut self, lr: f64) -> Result<(StepMetrics, f64), ModelError> {
        let clock = self.config.clock;
        let bsz = self.config.bsz;
        let (res, secs) = clock.measure(bsz, || {
            let batches = self.next_micro_batches()?;
            let mode = Mode::Train {
                seed: self.config.seed,
                step: self.state.step,
            };
            train_step(
                &mut self.state,
                &self.config.model,
                &self.config.optim,
                &batches,
                lr,
                mode,
            )
        });
        let m = res?;
        self.state.elapsed_seconds += secs;
        Ok((m, secs))
    }

    pub fn evaluate(&self, data: &[MaskedInstance]) -> Result<f64, ModelError> {
        evaluate(&self.state.params, &self.config.model, data, self.config.micro_batch)
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_cover_bsz() {
        assert_eq!(Trainer::split_sizes(64, 16), vec![16; 4]);
        assert_eq!(Trainer::split_sizes(64, 64), vec![64]);
        assert_eq!(Trainer::split_sizes(10, 4), vec![4, 3, 3]);
        assert_eq!(Trainer::split_sizes(3, 8), vec![3]);
        for b in 1..50 {
            for m in 1..20 {
                let s = Trainer::split_sizes(b, m);
                assert_eq!(s.iter().sum::<usize>(), b);
                assert!(s.iter().all(|&x| x >= 1 && x <= m));
            }
        }
    }
}
