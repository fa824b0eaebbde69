use super::error::{Result, SweepError};
use super::state::{TrialState, TrialStatus};

/// Budget-relative pruning checkpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSchedule {
    pub checkpoint_1: f64,
    pub loss_threshold: f64,
    pub checkpoint_2: f64,
    pub keep_fraction: f64,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        Self {
            checkpoint_1: 0.125,
            loss_threshold: 6.0,
            checkpoint_2: 0.5,
            keep_fraction: 0.5,
        }
    }
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.checkpoint_1
            && self.checkpoint_1 < self.checkpoint_2
            && self.checkpoint_2 < 1.0
            && self.loss_threshold >= 0.0
            && !self.loss_threshold.is_nan()
            && 0.0 < self.keep_fraction
            && self.keep_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(SweepError::Config(format!("invalid prune schedule {self:?}")))
        }
    }
}

/// One line of the sweep's audit trail.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    /// Budget time of the decision.
    pub at: f64,
    pub trial_id: Option<usize>,
    pub event: String,
    pub detail: String,
}

impl AuditEntry {
    pub fn to_line(&self) -> String {
        let id = self.trial_id.map_or("-".to_string(), |i| i.to_string());
        format!(
            "{:.3}\t{id}\t{}\t{}",
            self.at,
            self.event,
            self.detail.replace(['\t', '\n'], " ")
        )
    }
}

/// Time of the next evaluation. The interval is 10/1440 of the budget
/// during the first 5% and 30/1440 afterwards.
pub fn eval_cadence(elapsed: f64, budget_seconds: f64) -> f64 {
    let minutes = if elapsed < 0.05 * budget_seconds { 10.0 } else { 30.0 };
    elapsed + budget_seconds * minutes / 1440.0
}

fn fmt_loss(l: f64) -> String {
    format!("{l:.6}")
}

/// Prunes running trials whose latest loss exceeds `threshold`, and any
/// flagged as diverged.
pub fn apply_threshold_prune(trials: &mut [TrialState], threshold: f64, at: f64) -> Result<Vec<AuditEntry>> {
    let mut audit = Vec::new();
    for t in trials.iter_mut().filter(|t| t.status == TrialStatus::Running) {
        let detail = if let Some(f) = &t.fault {
            format!("diverged: {f}")
        } else {
            let latest = t.latest_loss().ok_or(SweepError::Cadence { trial_id: t.id() })?;
            if latest > threshold || latest.is_nan() {
                format!("latest loss {} > threshold {}", fmt_loss(latest), threshold)
            } else {
                continue;
            }
        };
        t.transition(TrialStatus::PrunedThreshold)?;
        audit.push(AuditEntry {
            at,
            trial_id: Some(t.id()),
            event: TrialStatus::PrunedThreshold.name().into(),
            detail,
        });
    }
    Ok(audit)
}

/// Keep count for `n` survivors.
pub fn keep_count(n: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * n as f64).ceil() as usize).min(n)
}

/// Keeps the best `ceil(keep_fraction · n)` running trials by latest loss
/// (ties to the lower trial id); the rest become `pruned_rank`.
pub fn apply_rank_prune(trials: &mut [TrialState], keep_fraction: f64, at: f64) -> Result<Vec<AuditEntry>> {
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (idx, t) in trials.iter().enumerate() {
        if t.status == TrialStatus::Running {
            let loss = t.latest_loss().ok_or(SweepError::Cadence { trial_id: t.id() })?;
            let key = if loss.is_nan() { f64::INFINITY } else { loss };
            ranked.push((key, t.id(), idx));
        }
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let keep = keep_count(ranked.len(), keep_fraction);
    let mut audit = Vec::new();
    let cutoff = ranked.get(keep.saturating_sub(1)).map(|r| r.0);
    for (rank, &(loss, id, idx)) in ranked.iter().enumerate().skip(keep) {
        trials[idx].transition(TrialStatus::PrunedRank)?;
        audit.push(AuditEntry {
            at,
            trial_id: Some(id),
            event: TrialStatus::PrunedRank.name().into(),
            detail: format!(
                "rank {} of {} with loss {} (kept {keep}, cutoff {})",
                rank + 1,
                ranked.len(),
                fmt_loss(loss),
                cutoff.map_or("-".into(), fmt_loss)
            ),
        });
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::grid::TrialConfig;
    use proptest::prelude::*;

    fn running(losses: &[f64]) -> Vec<TrialState> {
        losses
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut t = TrialState::new(TrialConfig {
                    trial_id: i,
                    bsz: 1,
                    peak_lr: 1e-3,
                    warmup_proportion: 0.0,
                    days_factor: 1.0,
                    seed: 0,
                });
                t.transition(TrialStatus::Running).unwrap();
                t.push_eval(1.0, l).unwrap();
                t
            })
            .collect()
    }

    fn statuses(t: &[TrialState]) -> Vec<TrialStatus> {
        t.iter().map(|t| t.status).collect()
    }

    #[test]
    fn cadence() {
        assert_eq!(eval_cadence(0.0, 86400.0), 600.0);
        assert_eq!(eval_cadence(5000.0, 86400.0) - 5000.0, 1800.0);
        assert_eq!(eval_cadence(0.0, 1440.0), 10.0);
        assert_eq!(eval_cadence(100.0, 1440.0), 130.0);
        // 5% of a day is 72 minutes
        assert_eq!(eval_cadence(4319.0, 86400.0) - 4319.0, 600.0);
        assert_eq!(eval_cadence(4320.0, 86400.0) - 4320.0, 1800.0);
    }

    #[test]
    fn threshold_rule() {
        let mut t = running(&[6.5, 5.9, 7.0]);
        let audit = apply_threshold_prune(&mut t, 6.0, 10.0).unwrap();
        use TrialStatus::*;
        assert_eq!(statuses(&t), vec![PrunedThreshold, Running, PrunedThreshold]);
        assert_eq!(audit.len(), 2);
        let mut t = running(&[6.0, 5.0]);
        assert!(apply_threshold_prune(&mut t, 6.0, 10.0).unwrap().is_empty());
    }

    #[test]
    fn diverged_trials_pruned_regardless_of_loss() {
        let mut t = running(&[1.0, 2.0]);
        t[0].fault = Some("non-finite loss".into());
        apply_threshold_prune(&mut t, 6.0, 10.0).unwrap();
        assert_eq!(t[0].status, TrialStatus::PrunedThreshold);
        assert_eq!(t[1].status, TrialStatus::Running);
    }

    #[test]
    fn missing_eval_is_a_cadence_error() {
        let mut t = running(&[1.0]);
        t[0].evals.clear();
        assert!(matches!(
            apply_threshold_prune(&mut t, 6.0, 1.0),
            Err(SweepError::Cadence { trial_id: 0 })
        ));
    }

    #[test]
    fn rank_rule() {
        let mut t = running(&[5.0, 3.0, 4.0, 1.0, 2.0]);
        apply_rank_prune(&mut t, 0.5, 20.0).unwrap();
        let kept: Vec<usize> = t
            .iter()
            .filter(|t| t.status == TrialStatus::Running)
            .map(|t| t.id())
            .collect();
        assert_eq!(kept, vec![1, 3, 4]);
        let mut t = running(&[2.0, 2.0, 2.0, 2.0]);
        apply_rank_prune(&mut t, 0.5, 20.0).unwrap();
        assert_eq!(statuses(&t)[..2], [TrialStatus::Running, TrialStatus::Running]);
        let mut t = running(&[9.0]);
        apply_rank_prune(&mut t, 0.5, 20.0).unwrap();
        assert_eq!(t[0].status, TrialStatus::Running);
        assert!(apply_rank_prune(&mut [], 0.5, 20.0).unwrap().is_empty());
    }

    #[test]
    fn schedule_validation() {
        PruneSchedule::default().validate().unwrap();
        let bad = PruneSchedule {
            checkpoint_1: 0.6,
            ..PruneSchedule::default()
        };
        assert!(bad.validate().is_err());
        let open = PruneSchedule {
            loss_threshold: f64::INFINITY,
            keep_fraction: 1.0,
            ..PruneSchedule::default()
        };
        open.validate().unwrap();
    }

    proptest! {
        #[test]
        fn rank_prune_is_monotone(losses in prop::collection::vec(0.0f64..10.0, 1..30), keep in 0.05f64..1.0) {
            let mut t = running(&losses);
            apply_rank_prune(&mut t, keep, 1.0).unwrap();
            let survivors: Vec<&TrialState> = t.iter().filter(|t| t.status == TrialStatus::Running).collect();
            prop_assert_eq!(survivors.len(), keep_count(losses.len(), keep));
            for pruned in t.iter().filter(|t| t.status == TrialStatus::PrunedRank) {
                for s in &survivors {
                    prop_assert!(pruned.latest_loss() >= s.latest_loss());
                }
            }
        }
    }
}
