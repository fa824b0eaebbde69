//! Phase-synchronous sweep driver.
//!
//! Every active trial is advanced to the first checkpoint, the threshold
//! rule is applied, survivors advance to the second checkpoint, the rank
//! rule is applied, and the rest run to the full budget. Within a phase up
//! to `slots` trials train concurrently. Workers report only through their
//! append-only metrics logs, which the controller re-reads after each
//! phase.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::error::{Result, SweepError};
use super::grid::TrialConfig;
use super::prune::{apply_rank_prune, apply_threshold_prune, eval_cadence, AuditEntry, PruneSchedule};
use super::report::{SweepReport, TrialSummary};
use super::state::{TrialState, TrialStatus};
use super::worker::TrialWorker;
use crate::model::metrics::{read_metrics, MetricsRecord, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.tsv";

pub fn trial_dir(out: &Path, trial_id: usize) -> PathBuf {
    out.join("trials").join(format!("trial-{trial_id:03}"))
}

struct Slot<'w> {
    id: usize,
    worker: &'w mut dyn TrialWorker,
    log: MetricsWriter,
    elapsed: f64,
    next_eval: f64,
    last_eval: Option<f64>,
    prepared: bool,
    faulted: bool,
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic payload".into()
    }
}

impl<'w> Slot<'w> {
    fn new(id: usize, worker: &'w mut dyn TrialWorker, log: MetricsWriter) -> Self {
        Self {
            id,
            worker,
            log,
            elapsed: 0.0,
            next_eval: 0.0,
            last_eval: None,
            prepared: false,
            faulted: false,
        }
    }

    fn fault(&mut self, reason: String) -> std::result::Result<(), String> {
        self.faulted = true;
        self.log
            .write(&MetricsRecord::Diverged {
                elapsed: self.elapsed,
                reason,
            })
            .map_err(|e| e.to_string())
    }

    fn eval(&mut self) -> std::result::Result<bool, String> {
        match self.worker.evaluate() {
            Ok(val_loss) => {
                self.log
                    .write(&MetricsRecord::Eval {
                        elapsed: self.elapsed,
                        val_loss,
                    })
                    .map_err(|e| e.to_string())?;
                self.last_eval = Some(self.elapsed);
                Ok(true)
            }
            Err(e) => {
                self.fault(e)?;
                Ok(false)
            }
        }
    }

    /// Trains until `until` seconds and evaluates at the boundary. Errors
    /// are only returned for log I/O; worker failures become log records.
    fn run_phase(&mut self, until: f64, budget: f64) -> std::result::Result<(), String> {
        if !self.prepared {
            self.prepared = true;
            match self.worker.prepare(budget) {
                Ok(desc) => self.log.comment(&desc).map_err(|e| e.to_string())?,
                Err(e) => return self.fault(e),
            }
            self.next_eval = eval_cadence(0.0, budget);
        }
        while self.elapsed < until {
            let s = match self.worker.step() {
                Ok(s) => s,
                Err(e) => return self.fault(e),
            };
            self.elapsed += s.seconds;
            if !s.train_loss.is_finite() {
                return self.fault(format!("non-finite training loss {} at step {}", s.train_loss, s.step));
            }
            self.log
                .write(&MetricsRecord::Step {
                    step: s.step,
                    elapsed: self.elapsed,
                    lr: s.lr,
                    train_loss: s.train_loss,
                    step_seconds: s.seconds,
                    samples: s.samples,
                })
                .map_err(|e| e.to_string())?;
            if self.elapsed >= self.next_eval && self.elapsed < until {
                if !self.eval()? {
                    return Ok(());
                }
                self.next_eval = eval_cadence(self.elapsed, budget);
            }
        }
        if self.last_eval != Some(self.elapsed) {
            self.eval()?;
            self.next_eval = eval_cadence(self.elapsed, budget);
        }
        Ok(())
    }
}

/// Outcome of [`run_single`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingleRun {
    pub elapsed: f64,
    pub evals: Vec<(f64, f64)>,
    pub fault: Option<String>,
}

/// Trains one worker for the whole budget on the sweep's evaluation
/// cadence, replacing any log at `log_path`. Panics are caught and reported as a
/// fault.
pub fn run_single(worker: &mut dyn TrialWorker, budget_seconds: f64, log_path: &Path) -> Result<SingleRun> {
    if !(budget_seconds > 0.0 && budget_seconds.is_finite()) {
        return Err(SweepError::Config(format!("budget {budget_seconds} must be positive")));
    }
    let log_err = |reason: String| SweepError::Log {
        path: log_path.to_path_buf(),
        reason,
    };
    if log_path.exists() {
        std::fs::remove_file(log_path).map_err(|e| SweepError::io(log_path, e))?;
    }
    let log = MetricsWriter::create(log_path).map_err(|e| log_err(e.to_string()))?;
    let mut slot = Slot::new(0, worker, log);
    let res = match catch_unwind(AssertUnwindSafe(|| slot.run_phase(budget_seconds, budget_seconds))) {
        Ok(r) => r,
        Err(p) => slot.fault(format!("worker crashed: {}", panic_message(&*p))),
    };
    res.map_err(log_err)?;
    let mut state = TrialState::new(TrialConfig {
        trial_id: 0,
        bsz: 0,
        peak_lr: 0.0,
        warmup_proportion: 0.0,
        days_factor: 1.0,
        seed: 0,
    });
    ingest(&mut state, log_path)?;
    Ok(SingleRun {
        elapsed: state.elapsed,
        evals: state.evals,
        fault: state.fault,
    })
}

/// Knobs of one sweep run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub budget_seconds: f64,
    pub slots: usize,
    pub prune: PruneSchedule,
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 {
            return Err(SweepError::Config("slots must be at least 1".into()));
        }
        if !(self.budget_seconds > 0.0 && self.budget_seconds.is_finite()) {
            return Err(SweepError::Config(format!(
                "budget {} must be positive",
                self.budget_seconds
            )));
        }
        self.prune.validate()
    }
}

fn run_parallel(slots: &mut [&mut Slot<'_>], threads: usize, until: f64, budget: f64) -> Vec<(usize, String)> {
    let queue = Mutex::new(slots.iter_mut().collect::<Vec<_>>());
    let errors = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(slots_len(&queue)) {
            scope.spawn(|| loop {
                let slot = match queue.lock().unwrap().pop() {
                    Some(s) => s,
                    None => break,
                };
                let res = catch_unwind(AssertUnwindSafe(|| slot.run_phase(until, budget)));
                let res = match res {
                    Ok(r) => r,
                    Err(p) => slot.fault(format!("worker crashed: {}", panic_message(&*p))),
                };
                if let Err(e) = res {
                    errors.lock().unwrap().push((slot.id, e));
                }
            });
        }
    });
    let mut e = errors.into_inner().unwrap();
    e.sort();
    e
}

fn slots_len<T>(q: &Mutex<Vec<T>>) -> usize {
    q.lock().unwrap().len()
}

/// Rebuilds a trial's eval history and fault flag from its log.
fn ingest(state: &mut TrialState, path: &Path) -> Result<()> {
    let records = read_metrics(path).map_err(|e| SweepError::Log {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    state.evals.clear();
    for r in records {
        match r {
            MetricsRecord::Step { elapsed, .. } => state.elapsed = elapsed,
            MetricsRecord::Eval { elapsed, val_loss } => state.push_eval(elapsed, val_loss)?,
            MetricsRecord::Diverged { elapsed, reason } => {
                state.elapsed = state.elapsed.max(elapsed);
                state.fault = Some(reason);
            }
        }
    }
    Ok(())
}

/// Runs every trial to a terminal state under the pruning rules.
///
/// `make_worker` is called once per trial, in trial order, before anything
/// runs; a construction failure marks that trial diverged.
pub fn run_sweep(
    grid: &[TrialConfig],
    options: &SweepOptions,
    out_dir: &Path,
    mut make_worker: impl FnMut(&TrialConfig) -> std::result::Result<Box<dyn TrialWorker>, String>,
) -> Result<SweepReport> {
    options.validate()?;
    let budget = options.budget_seconds;
    let mut states: Vec<TrialState> = grid.iter().map(|c| TrialState::new(*c)).collect();
    let mut audit = vec![AuditEntry {
        at: 0.0,
        trial_id: None,
        event: "start".into(),
        detail: format!(
            "{} trials, budget {budget}s, slots {}, checkpoints {} / {} of budget, threshold {}, keep {}",
            grid.len(),
            options.slots,
            options.prune.checkpoint_1,
            options.prune.checkpoint_2,
            options.prune.loss_threshold,
            options.prune.keep_fraction
        ),
    }];
    let mut logs = Vec::with_capacity(grid.len());
    let mut workers: Vec<Option<Box<dyn TrialWorker>>> = Vec::with_capacity(grid.len());
    for (cfg, st) in grid.iter().zip(states.iter_mut()) {
        let dir = trial_dir(out_dir, cfg.trial_id);
        std::fs::create_dir_all(&dir).map_err(|e| SweepError::io(&dir, e))?;
        let path = dir.join(METRICS_FILE);
        if path.exists() {
            std::fs::remove_file(&path).map_err(|e| SweepError::io(&path, e))?;
        }
        let mut log = MetricsWriter::create(&path).map_err(|e| SweepError::Log {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let io = |e: crate::model::ModelError| SweepError::Log {
            path: path.clone(),
            reason: e.to_string(),
        };
        log.comment(&format!(
            "trial {} bsz {} peak_lr {} warmup {} days_factor {} seed {}",
            cfg.trial_id, cfg.bsz, cfg.peak_lr, cfg.warmup_proportion, cfg.days_factor, cfg.seed
        ))
        .map_err(io)?;
        st.transition(TrialStatus::Running)?;
        match make_worker(cfg) {
            Ok(worker) => workers.push(Some(worker)),
            Err(e) => {
                log.write(&MetricsRecord::Diverged {
                    elapsed: 0.0,
                    reason: format!("worker construction failed: {e}"),
                })
                .map_err(io)?;
                workers.push(None);
            }
        }
        logs.push(log);
    }
    let mut slots: Vec<Option<Slot<'_>>> = workers
        .iter_mut()
        .zip(logs)
        .zip(grid)
        .map(|((w, log), cfg)| w.as_mut().map(|w| Slot::new(cfg.trial_id, w.as_mut(), log)))
        .collect();

    let phases = [
        (options.prune.checkpoint_1, "checkpoint_1"),
        (options.prune.checkpoint_2, "checkpoint_2"),
        (1.0, "end"),
    ];
    for (fraction, name) in phases {
        let until = fraction * budget;
        let mut active: Vec<&mut Slot> = slots
            .iter_mut()
            .zip(&states)
            .filter(|(_, st)| st.status == TrialStatus::Running)
            .filter_map(|(s, _)| s.as_mut())
            .filter(|s| !s.faulted)
            .collect();
        if let Some((id, e)) = run_parallel(&mut active, options.slots, until, budget)
            .into_iter()
            .next()
        {
            let path = trial_dir(out_dir, id).join(METRICS_FILE);
            return Err(SweepError::Log { path, reason: e });
        }
        for st in states.iter_mut().filter(|s| s.status == TrialStatus::Running) {
            ingest(st, &trial_dir(out_dir, st.id()).join(METRICS_FILE))?;
        }
        audit.push(AuditEntry {
            at: until,
            trial_id: None,
            event: name.into(),
            detail: format!(
                "{} running",
                states.iter().filter(|s| s.status == TrialStatus::Running).count()
            ),
        });
        match name {
            "checkpoint_1" => audit.extend(apply_threshold_prune(&mut states, options.prune.loss_threshold, until)?),
            _ => {
                for st in states
                    .iter_mut()
                    .filter(|s| s.status == TrialStatus::Running && s.is_diverged())
                {
                    st.transition(TrialStatus::Diverged)?;
                    audit.push(AuditEntry {
                        at: until,
                        trial_id: Some(st.id()),
                        event: TrialStatus::Diverged.name().into(),
                        detail: st.fault.clone().unwrap_or_default(),
                    });
                }
                if name == "checkpoint_2" {
                    audit.extend(apply_rank_prune(&mut states, options.prune.keep_fraction, until)?);
                }
            }
        }
    }
    for st in states.iter_mut().filter(|s| s.status == TrialStatus::Running) {
        st.transition(TrialStatus::Completed)?;
        audit.push(AuditEntry {
            at: budget,
            trial_id: Some(st.id()),
            event: TrialStatus::Completed.name().into(),
            detail: format!(
                "trained {:.3}s, final loss {}",
                st.elapsed,
                st.latest_loss().map_or("-".into(), |l| format!("{l:.6}"))
            ),
        });
    }
    let trials = states.iter().map(TrialSummary::from_state).collect();
    Ok(SweepReport::new(trials, audit, *options))
}
