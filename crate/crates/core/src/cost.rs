//! Budget arithmetic: GB-hours, dollar ranges and days to cover a sample
//! target at a measured throughput.

use thiserror::Error;

use crate::model::metrics::{parse_metrics, MetricsRecord};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("throughput must be positive, got {0} samples/s")]
    ZeroThroughput(f64),
    #[error("rate range is inverted: low {low} > high {high}")]
    InvertedRange { low: f64, high: f64 },
    #[error("throughput log line {line}: {reason}")]
    Log { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, CostError>;

fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CostError::NonPositive { name, value })
    }
}

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Dollars per GB-hour. The defaults place a 2304 GB-hour budget at
/// exactly $300 to $400.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRange {
    pub low: f64,
    pub high: f64,
}

impl Default for RateRange {
    fn default() -> Self {
        Self {
            low: 300.0 / 2304.0,
            high: 400.0 / 2304.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareSpec {
    pub gpu_count: u32,
    pub gpu_memory_gb: f64,
    pub rates: RateRange,
}

impl HardwareSpec {
    pub fn new(gpu_count: u32, gpu_memory_gb: f64) -> Self {
        Self {
            gpu_count,
            gpu_memory_gb,
            rates: RateRange::default(),
        }
    }
}

pub fn gb_hours(hw: &HardwareSpec, hours: f64) -> Result<f64> {
    positive("gpu_count", hw.gpu_count as f64)?;
    positive("gpu_memory_gb", hw.gpu_memory_gb)?;
    positive("hours", hours)?;
    Ok(hw.gpu_count as f64 * hw.gpu_memory_gb * hours)
}

/// `(low, high)` dollars. Zero rates are allowed; negative ones are not.
pub fn dollar_estimate(gb_hours: f64, rates: RateRange) -> Result<(f64, f64)> {
    positive("gb_hours", gb_hours)?;
    for (name, r) in [("rate_low", rates.low), ("rate_high", rates.high)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(CostError::NonPositive { name, value: r });
        }
    }
    if rates.low > rates.high {
        return Err(CostError::InvertedRange {
            low: rates.low,
            high: rates.high,
        });
    }
    Ok((gb_hours * rates.low, gb_hours * rates.high))
}

pub fn days_to_cover(samples_target: f64, samples_per_second: f64) -> Result<f64> {
    positive("samples_target", samples_target)?;
    if !(samples_per_second > 0.0 && samples_per_second.is_finite()) {
        return Err(CostError::ZeroThroughput(samples_per_second));
    }
    Ok(samples_target / (samples_per_second * SECONDS_PER_DAY))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRecord {
    pub label: String,
    pub bsz: u64,
    pub steps: u64,
    pub samples_per_second: f64,
}

impl ThroughputRecord {
    pub fn samples(&self) -> u64 {
        self.bsz * self.steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub bsz: u64,
    /// `ceil(target / bsz)`.
    pub steps: u64,
    pub samples: u64,
    pub days: f64,
}

pub fn table_rows(records: &[ThroughputRecord], samples_target: u64) -> Result<Vec<TableRow>> {
    records
        .iter()
        .map(|r| {
            positive("bsz", r.bsz as f64)?;
            let steps = samples_target.div_ceil(r.bsz);
            Ok(TableRow {
                label: r.label.clone(),
                bsz: r.bsz,
                steps,
                samples: steps * r.bsz,
                days: days_to_cover(samples_target as f64, r.samples_per_second)?,
            })
        })
        .collect()
}

/// Steps in thousands, rounded half up (62 500 → "63k").
pub fn steps_in_thousands(steps: u64) -> String {
    format!("{}k", (steps + 500) / 1000)
}

/// Tab-separated table with a header row.
pub fn emit_table(records: &[ThroughputRecord], samples_target: u64) -> Result<String> {
    let mut out = String::from("label\tbsz\tsteps\tsamples\tdays\n");
    for r in table_rows(records, samples_target)? {
        out.push_str(&format!(
            "{}\t{}\t{} ({})\t{}\t{:.2}\n",
            r.label,
            r.bsz,
            r.steps,
            steps_in_thousands(r.steps),
            r.samples,
            r.days
        ));
    }
    Ok(out)
}

/// Reads throughput records from either a `label bsz steps samples/s` table
/// (tab-separated, `#` comments) or a training metrics log, whose steps are
/// aggregated into one record labelled `default_label`.
pub fn parse_throughput_log(text: &str, default_label: &str) -> Result<Vec<ThroughputRecord>> {
    let is_metrics = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("step\t") || l.starts_with("eval\t") || l.starts_with("diverged\t"));
    if is_metrics {
        let recs = parse_metrics(text).map_err(|reason| CostError::Log { line: 0, reason })?;
        let (mut samples, mut secs, mut steps) = (0u64, 0.0, 0u64);
        for r in recs {
            if let MetricsRecord::Step {
                samples: s,
                step_seconds,
                ..
            } = r
            {
                samples += s;
                secs += step_seconds;
                steps += 1;
            }
        }
        if steps == 0 || secs <= 0.0 {
            return Err(CostError::Log {
                line: 0,
                reason: "metrics log has no timed steps".into(),
            });
        }
        return Ok(vec![ThroughputRecord {
            label: default_label.to_string(),
            bsz: samples / steps,
            steps,
            samples_per_second: samples as f64 / secs,
        }]);
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| CostError::Log { line: i + 1, reason };
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", f.len())));
        }
        if f[0] == "label" {
            continue;
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("`{s}` is not an integer")));
        let sps = f[3]
            .parse::<f64>()
            .map_err(|_| bad(format!("`{}` is not a number", f[3])))?;
        out.push(ThroughputRecord {
            label: f[0].to_string(),
            bsz: int(f[1])?,
            steps: int(f[2])?,
            samples_per_second: sps,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gb_hour_equivalence() {
        assert_eq!(gb_hours(&HardwareSpec::new(8, 12.0), 24.0).unwrap(), 2304.0);
        assert_eq!(gb_hours(&HardwareSpec::new(1, 32.0), 72.0).unwrap(), 2304.0);
        assert!(gb_hours(&HardwareSpec::new(8, 12.0), 0.0).is_err());
        assert!(gb_hours(&HardwareSpec::new(0, 12.0), 1.0).is_err());
    }

    #[test]
    fn dollar_bracket() {
        let (lo, hi) = dollar_estimate(2304.0, RateRange::default()).unwrap();
        assert!((lo - 300.0).abs() < 1e-9 && (hi - 400.0).abs() < 1e-9);
        let (lo, hi) = dollar_estimate(
            2304.0,
            RateRange {
                low: 0.1302,
                high: 0.1736,
            },
        )
        .unwrap();
        assert!((lo - 300.0).abs() < 0.05 && (hi - 400.0).abs() < 0.05, "{lo} {hi}");
        assert_eq!(
            dollar_estimate(10.0, RateRange { low: 0.0, high: 0.0 }).unwrap(),
            (0.0, 0.0)
        );
        let (a, b) = dollar_estimate(4608.0, RateRange::default()).unwrap();
        assert!((a - 600.0).abs() < 1e-9 && (b - 800.0).abs() < 1e-9);
        assert!(dollar_estimate(1.0, RateRange { low: 2.0, high: 1.0 }).is_err());
    }

    #[test]
    fn days() {
        assert!((days_to_cover(256e6, 506.4).unwrap() - 5.85).abs() < 0.01);
        assert!((days_to_cover(256e6, 1229.2).unwrap() - 2.41).abs() < 0.01);
        assert_eq!(days_to_cover(86400.0, 1.0).unwrap(), 1.0);
        assert_eq!(days_to_cover(1.0, 0.0), Err(CostError::ZeroThroughput(0.0)));
    }

    #[test]
    fn steps_column() {
        let recs: Vec<ThroughputRecord> = [4096u64, 8192, 16384]
            .iter()
            .map(|&b| ThroughputRecord {
                label: format!("bsz{b}"),
                bsz: b,
                steps: 10,
                samples_per_second: 1000.0,
            })
            .collect();
        let rows = table_rows(&recs, 256_000_000).unwrap();
        let steps: Vec<u64> = rows.iter().map(|r| r.steps).collect();
        assert_eq!(steps, vec![62_500, 31_250, 15_625]);
        let k: Vec<String> = steps.iter().map(|&s| steps_in_thousands(s)).collect();
        assert_eq!(k, vec!["63k", "31k", "16k"]);
        let table = emit_table(&recs[..1], 256_000_000).unwrap();
        assert_eq!(table.lines().count(), 2);
        assert!(table.contains("62500 (63k)"));
        assert_eq!(recs[0].samples(), 40960);
    }

    #[test]
    fn throughput_logs() {
        let t = "label\tbsz\tsteps\tsamples_per_second\nours\t4096\t100\t1229.2\n";
        let r = parse_throughput_log(t, "x").unwrap();
        assert_eq!(r[0].label, "ours");
        assert_eq!(r[0].bsz, 4096);
        let m = "# trial\nstep\t0\t0.5\t0\t9\t0.5\t8\nstep\t1\t1.5\t0\t9\t1\t8\neval\t1.5\t8\n";
        let r = parse_throughput_log(m, "run").unwrap();
        assert_eq!((r[0].bsz, r[0].steps), (8, 2));
        assert!((r[0].samples_per_second - 16.0 / 1.5).abs() < 1e-12);
        assert!(matches!(
            parse_throughput_log("a\t1\t2\n", "x"),
            Err(CostError::Log { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn bilinear_and_inverse_linear(g in 1u32..16, mem in 0.5f64..80.0, h in 0.1f64..500.0, k in 0.1f64..10.0, sps in 0.1f64..1e5) {
            let a = gb_hours(&HardwareSpec::new(g, mem), h).unwrap();
            let b = gb_hours(&HardwareSpec::new(g, mem * k), h).unwrap();
            let c = gb_hours(&HardwareSpec::new(g, mem), h * k).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-9 * b.abs());
            prop_assert!((c - k * a).abs() <= 1e-9 * c.abs());
            let d1 = days_to_cover(1e8, sps).unwrap();
            let d2 = days_to_cover(1e8, sps * k).unwrap();
            prop_assert!((d1 - k * d2).abs() <= 1e-9 * d1);
        }
    }
}
