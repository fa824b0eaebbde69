//! Tab-separated training log. Written append-only by a trainer and parsed
//! by whoever supervises it.
//!
//! ```text
//! step  <step> <elapsed_s> <lr> <train_loss> <step_seconds> <samples>
//! eval  <elapsed_s> <val_loss>
//! diverged <elapsed_s> <reason>
//! ```
//!
//! Lines starting with `#` are comments. Floats use shortest round-trip
//! formatting so a parsed log reproduces the writer's values exactly.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::error::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsRecord {
    Step {
        step: u64,
        elapsed: f64,
        lr: f64,
        train_loss: f64,
        step_seconds: f64,
        samples: u64,
    },
    Eval {
        elapsed: f64,
        val_loss: f64,
    },
    Diverged {
        elapsed: f64,
        reason: String,
    },
}

impl MetricsRecord {
    pub fn to_line(&self) -> String {
        match self {
            MetricsRecord::Step {
                step,
                elapsed,
                lr,
                train_loss,
                step_seconds,
                samples,
            } => format!("step\t{step}\t{elapsed}\t{lr}\t{train_loss}\t{step_seconds}\t{samples}"),
            MetricsRecord::Eval { elapsed, val_loss } => format!("eval\t{elapsed}\t{val_loss}"),
            MetricsRecord::Diverged { elapsed, reason } => {
                format!("diverged\t{elapsed}\t{}", reason.replace(['\t', '\n'], " "))
            }
        }
    }

    pub fn parse_line(line: &str) -> Result<Option<Self>, String> {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            return Ok(None);
        }
        let f: Vec<&str> = line.split('\t').collect();
        let num = |i: usize| -> Result<f64, String> {
            f.get(i)
                .ok_or_else(|| format!("missing field {i}"))?
                .parse::<f64>()
                .map_err(|e| format!("field {i}: {e}"))
        };
        let int = |i: usize| -> Result<u64, String> {
            f.get(i)
                .ok_or_else(|| format!("missing field {i}"))?
                .parse::<u64>()
                .map_err(|e| format!("field {i}: {e}"))
        };
        let rec = match f[0] {
            "step" if f.len() == 7 => MetricsRecord::Step {
                step: int(1)?,
                elapsed: num(2)?,
                lr: num(3)?,
                train_loss: num(4)?,
                step_seconds: num(5)?,
                samples: int(6)?,
            },
            "eval" if f.len() == 3 => MetricsRecord::Eval {
                elapsed: num(1)?,
                val_loss: num(2)?,
            },
            "diverged" if f.len() == 3 => MetricsRecord::Diverged {
                elapsed: num(1)?,
                reason: f[2].to_string(),
            },
            other => return Err(format!("unrecognised record `{other}` with {} fields", f.len())),
        };
        Ok(Some(rec))
    }
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        match MetricsRecord::parse_line(line) {
            Ok(Some(r)) => out.push(r),
            Ok(None) => {}
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_metrics(&text).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
}

/// Appends records, flushing after each so readers never see a torn line
/// from a live writer that is between calls.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self, ModelError> {
        let io = |source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn comment(&mut self, text: &str) -> Result<(), ModelError> {
        self.write_raw(&format!("# {text}"))
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<(), ModelError> {
        self.write_raw(&rec.to_line())
    }

    fn write_raw(&mut self, line: &str) -> Result<(), ModelError> {
        let res = writeln!(self.out, "{line}").and_then(|_| self.out.flush());
        res.map_err(|source| ModelError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_round_trip() {
        let recs = [
            MetricsRecord::Step {
                step: 3,
                elapsed: 1.0 / 3.0,
                lr: 2e-3,
                train_loss: 6.25,
                step_seconds: 0.1,
                samples: 64,
            },
            MetricsRecord::Eval {
                elapsed: 12.5,
                val_loss: 5.999999999999999,
            },
            MetricsRecord::Diverged {
                elapsed: 13.0,
                reason: "non-finite loss\tNaN".into(),
            },
        ];
        let text: String = recs.iter().map(|r| r.to_line() + "\n").collect();
        let back = parse_metrics(&format!("# header\n{text}\n")).unwrap();
        assert_eq!(back[..2], recs[..2]);
        assert_eq!(
            back[2],
            MetricsRecord::Diverged {
                elapsed: 13.0,
                reason: "non-finite loss NaN".into()
            }
        );
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_metrics("eval\t1\t2\nstep\t1\n").unwrap_err();
        assert!(err.starts_with("line 2"), "{err}");
        assert!(parse_metrics("eval\tx\t2").is_err());
    }

    #[test]
    fn writer_appends() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsv");
        let mut w = MetricsWriter::create(&p).unwrap();
        w.comment("hello").unwrap();
        w.write(&MetricsRecord::Eval {
            elapsed: 1.0,
            val_loss: 2.0,
        })
        .unwrap();
        drop(w);
        let mut w = MetricsWriter::create(&p).unwrap();
        w.write(&MetricsRecord::Eval {
            elapsed: 2.0,
            val_loss: 1.5,
        })
        .unwrap();
        assert_eq!(read_metrics(&p).unwrap().len(), 2);
    }
}
