use std::fmt;

use super::error::{Result, SweepError};
use super::grid::TrialConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialStatus {
    Pending,
    Running,
    PrunedThreshold,
    PrunedRank,
    Diverged,
    Completed,
}

impl TrialStatus {
    pub fn name(&self) -> &'static str {
        match self {
            TrialStatus::Pending => "pending",
            TrialStatus::Running => "running",
            TrialStatus::PrunedThreshold => "pruned_threshold",
            TrialStatus::PrunedRank => "pruned_rank",
            TrialStatus::Diverged => "diverged",
            TrialStatus::Completed => "completed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TrialStatus::Pending,
            TrialStatus::Running,
            TrialStatus::PrunedThreshold,
            TrialStatus::PrunedRank,
            TrialStatus::Diverged,
            TrialStatus::Completed,
        ]
        .into_iter()
        .find(|t| t.name() == s)
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, TrialStatus::Pending | TrialStatus::Running)
    }

    fn can_become(&self, to: TrialStatus) -> bool {
        match (self, to) {
            (TrialStatus::Pending, TrialStatus::Running) => true,
            (TrialStatus::Running, t) => t.is_terminal(),
            _ => false,
        }
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialState {
    pub config: TrialConfig,
    pub status: TrialStatus,
    /// `(elapsed_seconds, val_loss)`, strictly increasing in time.
    pub evals: Vec<(f64, f64)>,
    /// Set when the worker reported a non-finite loss or crashed.
    pub fault: Option<String>,
    /// Training seconds consumed so far.
    pub elapsed: f64,
}

impl TrialState {
    pub fn new(config: TrialConfig) -> Self {
        Self {
            config,
            status: TrialStatus::Pending,
            evals: Vec::new(),
            fault: None,
            elapsed: 0.0,
        }
    }

    pub fn id(&self) -> usize {
        self.config.trial_id
    }

    pub fn transition(&mut self, to: TrialStatus) -> Result<()> {
        if !self.status.can_become(to) {
            return Err(SweepError::Transition {
                trial_id: self.id(),
                from: self.status.name(),
                to: to.name(),
            });
        }
        self.status = to;
        Ok(())
    }

    pub fn push_eval(&mut self, elapsed: f64, loss: f64) -> Result<()> {
        if let Some(&(prev, _)) = self.evals.last() {
            if elapsed.is_nan() || elapsed <= prev {
                return Err(SweepError::EvalOrder {
                    trial_id: self.id(),
                    elapsed,
                    previous: prev,
                });
            }
        }
        self.evals.push((elapsed, loss));
        Ok(())
    }

    pub fn latest_loss(&self) -> Option<f64> {
        self.evals.last().map(|&(_, l)| l)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.evals.iter().map(|&(_, l)| l).reduce(f64::min)
    }

    pub fn is_diverged(&self) -> bool {
        self.fault.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial() -> TrialState {
        TrialState::new(TrialConfig {
            trial_id: 3,
            bsz: 64,
            peak_lr: 1e-3,
            warmup_proportion: 0.0,
            days_factor: 1.0,
            seed: 0,
        })
    }

    #[test]
    fn lifecycle() {
        let mut t = trial();
        assert!(t.transition(TrialStatus::Completed).is_err());
        t.transition(TrialStatus::Running).unwrap();
        assert!(t.transition(TrialStatus::Pending).is_err());
        t.transition(TrialStatus::PrunedRank).unwrap();
        for s in [TrialStatus::Running, TrialStatus::Completed, TrialStatus::Diverged] {
            assert!(t.transition(s).is_err(), "terminal state left for {s}");
        }
    }

    #[test]
    fn eval_history_is_ordered() {
        let mut t = trial();
        t.push_eval(1.0, 7.0).unwrap();
        t.push_eval(2.0, 6.0).unwrap();
        t.push_eval(3.0, 6.5).unwrap();
        assert!(t.push_eval(3.0, 5.0).is_err());
        assert_eq!(t.latest_loss(), Some(6.5));
        assert_eq!(t.best_loss(), Some(6.0));
    }

    #[test]
    fn names_round_trip() {
        for s in [
            "pending",
            "running",
            "pruned_threshold",
            "pruned_rank",
            "diverged",
            "completed",
        ] {
            assert_eq!(TrialStatus::parse(s).unwrap().name(), s);
        }
    }
}
