use std::path::Path;

use super::controller::SweepOptions;
use super::error::{Result, SweepError};
use super::prune::AuditEntry;
use super::state::{TrialState, TrialStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial_id: usize,
    pub status: TrialStatus,
    /// Latest validation loss, if the trial was ever evaluated.
    pub final_loss: Option<f64>,
    pub best_loss: Option<f64>,
    pub bsz: usize,
    pub peak_lr: f64,
    pub warmup: f64,
    pub days_factor: f64,
    pub train_seconds: f64,
    pub evals: usize,
}

impl TrialSummary {
    pub fn from_state(s: &TrialState) -> Self {
        Self {
            trial_id: s.id(),
            status: s.status,
            final_loss: s.latest_loss(),
            best_loss: s.best_loss(),
            bsz: s.config.bsz,
            peak_lr: s.config.peak_lr,
            warmup: s.config.warmup_proportion,
            days_factor: s.config.days_factor,
            train_seconds: s.elapsed,
            evals: s.evals.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// Sorted by final loss ascending (unevaluated last), then trial id.
    pub trials: Vec<TrialSummary>,
    pub audit: Vec<AuditEntry>,
    pub options: SweepOptions,
}

pub const REPORT_FILE: &str = "report.tsv";
pub const AUDIT_FILE: &str = "audit.tsv";

impl SweepReport {
    pub fn new(mut trials: Vec<TrialSummary>, audit: Vec<AuditEntry>, options: SweepOptions) -> Self {
        trials.sort_by(|a, b| {
            let key = |t: &TrialSummary| t.final_loss.filter(|l| !l.is_nan()).unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b)).then(a.trial_id.cmp(&b.trial_id))
        });
        Self { trials, audit, options }
    }

    /// Trials that trained for the full budget.
    pub fn finishers(&self) -> Vec<&TrialSummary> {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Completed)
            .collect()
    }

    pub fn winner(&self) -> Option<&TrialSummary> {
        self.finishers().into_iter().next()
    }

    pub fn trial(&self, id: usize) -> Option<&TrialSummary> {
        self.trials.iter().find(|t| t.trial_id == id)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("trial_id\tstatus\tfinal_loss\tbsz\tpeak_lr\twarmup\tdays_factor\n");
        for t in &self.trials {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                t.trial_id,
                t.status,
                t.final_loss.map_or("-".into(), |l| format!("{l:.6}")),
                t.bsz,
                t.peak_lr,
                t.warmup,
                t.days_factor
            ));
        }
        s
    }

    pub fn audit_tsv(&self) -> String {
        let mut s = String::from("at_seconds\ttrial_id\tevent\tdetail\n");
        for a in &self.audit {
            s.push_str(&a.to_line());
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, body) in [(REPORT_FILE, self.to_tsv()), (AUDIT_FILE, self.audit_tsv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| SweepError::io(&p, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Bsz,
    PeakLr,
    Warmup,
    DaysFactor,
}

impl Axis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bsz" => Some(Axis::Bsz),
            "peak_lr" => Some(Axis::PeakLr),
            "warmup" => Some(Axis::Warmup),
            "days_factor" | "days" => Some(Axis::DaysFactor),
            _ => None,
        }
    }

    fn value(&self, t: &TrialSummary) -> f64 {
        match self {
            Axis::Bsz => t.bsz as f64,
            Axis::PeakLr => t.peak_lr,
            Axis::Warmup => t.warmup,
            Axis::DaysFactor => t.days_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisSummary {
    pub value: f64,
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Finisher losses grouped by one axis value, ascending by value.
pub fn summarize_axis(report: &SweepReport, axis: Axis) -> Result<Vec<AxisSummary>> {
    let mut pairs: Vec<(f64, f64)> = report
        .finishers()
        .iter()
        .filter_map(|t| t.final_loss.map(|l| (axis.value(t), l)))
        .collect();
    if pairs.is_empty() {
        return Err(SweepError::NoFinishers);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    for group in pairs.chunk_by(|a, b| a.0 == b.0) {
        let losses: Vec<f64> = group.iter().map(|p| p.1).collect();
        let n = losses.len();
        let median = if n % 2 == 1 {
            losses[n / 2]
        } else {
            0.5 * (losses[n / 2 - 1] + losses[n / 2])
        };
        out.push(AxisSummary {
            value: group[0].0,
            count: n,
            min: losses[0],
            median,
            max: losses[n - 1],
        });
    }
    Ok(out)
}
