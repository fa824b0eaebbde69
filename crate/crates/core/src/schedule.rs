//! Linear warmup/decay schedule whose horizon is tied to a wall-clock budget.

use thiserror::Error;

use crate::clock::ClockMode;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invalid(String),
    #[error("throughput must be positive, got {0}")]
    ZeroThroughput(f64),
}

#[derive(Debug, Error)]
pub enum CalibrationError<E> {
    #[error("calibration needs at least {min} steps, got {got}")]
    TooFewSteps { min: usize, got: usize },
    #[error("calibration step failed: {0}")]
    Step(E),
    #[error("calibration measured zero step time")]
    ZeroTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams {
    pub peak_lr: f64,
    pub warmup_proportion: f64,
    pub total_steps: u64,
}

impl ScheduleParams {
    pub fn new(peak_lr: f64, warmup_proportion: f64, total_steps: u64) -> Result<Self, ScheduleError> {
        let p = Self {
            peak_lr,
            warmup_proportion,
            total_steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(ScheduleError::Invalid(format!(
                "peak_lr {} must be finite and >= 0",
                self.peak_lr
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_proportion) {
            return Err(ScheduleError::Invalid(format!(
                "warmup proportion {} must lie in [0, 1)",
                self.warmup_proportion
            )));
        }
        if self.total_steps < 1 {
            return Err(ScheduleError::Invalid("total_steps must be at least 1".into()));
        }
        if self.warmup_steps() >= self.total_steps {
            return Err(ScheduleError::Invalid(format!(
                "warmup of {} steps leaves no decay within {} total steps",
                self.warmup_steps(),
                self.total_steps
            )));
        }
        Ok(())
    }

    /// `round(wu * T)`.
    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_proportion * self.total_steps as f64).round() as u64
    }

    /// Learning rate at `step`: 0 → peak over the warmup, then linearly back
    /// to 0 at `total_steps`. Past the end the schedule is exhausted.
    pub fn lr_at(&self, step: u64) -> f64 {
        let t = self.total_steps;
        if step > t {
            log::warn!("schedule exhausted: step {step} beyond total {t}, lr clamped to 0");
            return 0.0;
        }
        let w = self.warmup_steps();
        if step <= w {
            if w == 0 {
                return self.peak_lr;
            }
            self.peak_lr * (step as f64 / w as f64)
        } else {
            self.peak_lr * ((t - step) as f64 / (t - w) as f64)
        }
    }
}

/// The schedule horizon and the number of steps the budget actually buys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetPlan {
    pub budget_seconds: f64,
    pub days_factor: f64,
    pub steps_per_second: f64,
    pub total_steps: u64,
    pub budget_steps: u64,
}

/// `T = round(factor * budget * sps)`, `B = min(T, round(budget * sps))`.
///
/// A factor of 1 makes the schedule reach zero exactly when the budget runs
/// out; a factor of 3 stops training a third of the way along it.
pub fn plan_budget(budget_seconds: f64, days_factor: f64, steps_per_second: f64) -> Result<BudgetPlan, ScheduleError> {
    if !(steps_per_second > 0.0 && steps_per_second.is_finite()) {
        return Err(ScheduleError::ZeroThroughput(steps_per_second));
    }
    if !(budget_seconds > 0.0 && budget_seconds.is_finite()) {
        return Err(ScheduleError::Invalid(format!(
            "budget {budget_seconds}s must be positive"
        )));
    }
    if !(days_factor > 0.0 && days_factor.is_finite()) {
        return Err(ScheduleError::Invalid(format!(
            "days factor {days_factor} must be positive"
        )));
    }
    let budget_raw = (budget_seconds * steps_per_second).round();
    let total = ((days_factor * budget_seconds * steps_per_second).round() as u64).max(1);
    Ok(BudgetPlan {
        budget_seconds,
        days_factor,
        steps_per_second,
        total_steps: total,
        budget_steps: (budget_raw as u64).max(1).min(total),
    })
}

pub const MIN_CALIBRATION_STEPS: usize = 5;
const DISCARDED_WARM_STEPS: usize = 2;

/// Runs `warm_steps` steps, drops the first two, and returns the reciprocal
/// of the median step time. `step` reports how many samples it processed.
pub fn calibrate_throughput<E>(
    warm_steps: usize,
    clock: &ClockMode,
    mut step: impl FnMut() -> Result<usize, E>,
) -> Result<f64, CalibrationError<E>> {
    if warm_steps < MIN_CALIBRATION_STEPS {
        return Err(CalibrationError::TooFewSteps {
            min: MIN_CALIBRATION_STEPS,
            got: warm_steps,
        });
    }
    let mut times = Vec::with_capacity(warm_steps);
    let mut samples = 0usize;
    for _ in 0..warm_steps {
        let (r, secs) = clock.measure(samples, &mut step);
        samples = r.map_err(CalibrationError::Step)?;
        times.push(secs);
    }
    // With a virtual clock the sample count is only known after the step, so
    // re-price each step once it is.
    if let ClockMode::Virtual { .. } = clock {
        for t in times.iter_mut() {
            *t = clock.measure(samples, || ()).1;
        }
    }
    let mut kept = times.split_off(DISCARDED_WARM_STEPS);
    kept.sort_by(f64::total_cmp);
    let n = kept.len();
    let median = if n % 2 == 1 {
        kept[n / 2]
    } else {
        0.5 * (kept[n / 2 - 1] + kept[n / 2])
    };
    if median <= 0.0 {
        return Err(CalibrationError::ZeroTime);
    }
    Ok(1.0 / median)
}
