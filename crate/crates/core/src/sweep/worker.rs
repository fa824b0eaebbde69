//! The units of work a sweep schedules.

use std::sync::Arc;

use super::grid::TrialConfig;
use crate::clock::ClockMode;
use crate::corpus::MaskedInstance;
use crate::model::trainer::{Trainer, TrainerConfig};
use crate::model::ModelConfig;
use crate::optim::OptimizerHyper;
use crate::schedule::{calibrate_throughput, plan_budget, ScheduleParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    /// Budget seconds charged for this step.
    pub seconds: f64,
    pub samples: u64,
}

/// A trial as the controller sees it. Any `Err` marks the trial diverged.
pub trait TrialWorker: Send {
    /// Called once before the first step; returns a description for the log.
    fn prepare(&mut self, budget_seconds: f64) -> Result<String, String>;
    fn step(&mut self) -> Result<StepOutcome, String>;
    fn evaluate(&mut self) -> Result<f64, String>;
}

/// Static settings shared by every trainer-backed trial of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerTrialSettings {
    pub model: ModelConfig,
    pub optim: OptimizerHyper,
    pub micro_batch: usize,
    pub clock: ClockMode,
    pub calibration_steps: usize,
}

/// A real training run. Throughput is calibrated on a throwaway copy of the
/// trainer, then the schedule horizon is sized to `days_factor` budgets.
pub struct TrainerTrial {
    trainer: Trainer,
    valid: Arc<Vec<MaskedInstance>>,
    settings: TrainerTrialSettings,
    config: TrialConfig,
    schedule: Option<ScheduleParams>,
}

impl TrainerTrial {
    pub fn new(
        config: TrialConfig,
        settings: TrainerTrialSettings,
        train: Arc<Vec<MaskedInstance>>,
        valid: Arc<Vec<MaskedInstance>>,
    ) -> Result<Self, String> {
        let trainer = Trainer::new(
            TrainerConfig {
                model: settings.model,
                optim: settings.optim,
                bsz: config.bsz,
                micro_batch: settings.micro_batch,
                seed: config.seed,
                clock: settings.clock,
            },
            train,
        )
        .map_err(|e| e.to_string())?;
        Ok(Self {
            trainer,
            valid,
            settings,
            config,
            schedule: None,
        })
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn schedule(&self) -> Option<&ScheduleParams> {
        self.schedule.as_ref()
    }
}

impl TrialWorker for TrainerTrial {
    fn prepare(&mut self, budget_seconds: f64) -> Result<String, String> {
        let mut probe = self.trainer.clone();
        let bsz = self.config.bsz;
        let sps = calibrate_throughput(self.settings.calibration_steps, &self.settings.clock, || {
            probe.step(0.0).map(|_| bsz)
        })
        .map_err(|e| format!("calibration failed: {e:?}"))?;
        let plan = plan_budget(budget_seconds, self.config.days_factor, sps).map_err(|e| e.to_string())?;
        let sched = ScheduleParams::new(self.config.peak_lr, self.config.warmup_proportion, plan.total_steps)
            .map_err(|e| e.to_string())?;
        self.schedule = Some(sched);
        Ok(format!(
            "calibrated {sps:.6} steps/s; schedule {} steps ({} warmup), budget buys ~{}",
            plan.total_steps,
            sched.warmup_steps(),
            plan.budget_steps
        ))
    }

    fn step(&mut self) -> Result<StepOutcome, String> {
        let sched = self.schedule.ok_or("step before prepare")?;
        let step = self.trainer.state.step;
        let lr = sched.lr_at(step);
        let (m, seconds) = self.trainer.step(lr).map_err(|e| e.to_string())?;
        Ok(StepOutcome {
            step,
            lr,
            train_loss: m.loss,
            seconds,
            samples: m.samples as u64,
        })
    }

    fn evaluate(&mut self) -> Result<f64, String> {
        let l = self.trainer.evaluate(&self.valid).map_err(|e| e.to_string())?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(format!("non-finite validation loss {l}"))
        }
    }
}

/// A trial following an injected loss curve on a fixed per-step cost; for
/// exercising controller logic without training anything.
pub struct ScriptedTrial {
    curve: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    seconds_per_step: f64,
    diverge_at: Option<f64>,
    panic_at: Option<f64>,
    elapsed: f64,
    step: u64,
}

impl ScriptedTrial {
    /// `curve(elapsed)` is the loss reported at that point of training.
    pub fn new(curve: impl Fn(f64) -> f64 + Send + Sync + 'static, seconds_per_step: f64) -> Self {
        Self {
            curve: Arc::new(curve),
            seconds_per_step,
            diverge_at: None,
            panic_at: None,
            elapsed: 0.0,
            step: 0,
        }
    }

    /// Steps taken at or after `t` report a non-finite loss.
    pub fn diverging_at(mut self, t: f64) -> Self {
        self.diverge_at = Some(t);
        self
    }

    /// The worker panics once training reaches `t`.
    pub fn panicking_at(mut self, t: f64) -> Self {
        self.panic_at = Some(t);
        self
    }
}

impl TrialWorker for ScriptedTrial {
    fn prepare(&mut self, _budget_seconds: f64) -> Result<String, String> {
        Ok(format!("scripted, {} s/step", self.seconds_per_step))
    }

    fn step(&mut self) -> Result<StepOutcome, String> {
        if self.panic_at.is_some_and(|t| self.elapsed >= t) {
            panic!("scripted crash at {}s", self.elapsed);
        }
        if self.diverge_at.is_some_and(|t| self.elapsed >= t) {
            return Err(format!("non-finite loss NaN at step {}", self.step));
        }
        self.elapsed += self.seconds_per_step;
        let out = StepOutcome {
            step: self.step,
            lr: 0.0,
            train_loss: (self.curve)(self.elapsed),
            seconds: self.seconds_per_step,
            samples: 1,
        };
        self.step += 1;
        Ok(out)
    }

    fn evaluate(&mut self) -> Result<f64, String> {
        Ok((self.curve)(self.elapsed))
    }
}
