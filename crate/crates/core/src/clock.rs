//! Step timing. Budgets are accounted in seconds of measured step time, from
//! one of three sources.

use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockMode {
    /// Monotonic wall time.
    Wall,
    /// CPU time of the calling thread; parallel trials on a shared CPU each
    /// see only their own work.
    ThreadCpu,
    /// Deterministic cost model: `per_step + per_sample * samples`.
    Virtual { per_step: f64, per_sample: f64 },
}

impl ClockMode {
    /// Runs `work` and returns its result with the seconds it cost.
    pub fn measure<R>(&self, samples: usize, work: impl FnOnce() -> R) -> (R, f64) {
        match *self {
            ClockMode::Wall => {
                let t0 = Instant::now();
                let r = work();
                (r, t0.elapsed().as_secs_f64())
            }
            ClockMode::ThreadCpu => {
                let t0 = thread_cpu_seconds();
                let r = work();
                (r, (thread_cpu_seconds() - t0).max(0.0))
            }
            ClockMode::Virtual { per_step, per_sample } => (work(), per_step + per_sample * samples as f64),
        }
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, ClockMode::Virtual { .. })
    }

    pub fn describe(&self) -> String {
        match self {
            ClockMode::Wall => "wall".into(),
            ClockMode::ThreadCpu => "cpu".into(),
            ClockMode::Virtual { per_step, per_sample } => format!("virtual:{per_step}:{per_sample}"),
        }
    }

    /// Inverse of [`ClockMode::describe`]; `virtual:S` is shorthand for a
    /// fixed `S` seconds per step.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wall" => Some(ClockMode::Wall),
            "cpu" => Some(ClockMode::ThreadCpu),
            _ => {
                let rest = s.strip_prefix("virtual:")?;
                let mut it = rest.split(':');
                let per_step: f64 = it.next()?.parse().ok()?;
                let per_sample: f64 = match it.next() {
                    Some(x) => x.parse().ok()?,
                    None => 0.0,
                };
                if it.next().is_some() || per_step < 0.0 || per_sample < 0.0 || per_step + per_sample <= 0.0 {
                    return None;
                }
                Some(ClockMode::Virtual { per_step, per_sample })
            }
        }
    }
}

pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: ts is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_cost_model() {
        let c = ClockMode::Virtual {
            per_step: 0.5,
            per_sample: 0.01,
        };
        let (v, s) = c.measure(10, || 3);
        assert_eq!(v, 3);
        assert_eq!(s, 0.6);
    }

    #[test]
    fn parse_round_trip() {
        for c in [
            ClockMode::Wall,
            ClockMode::ThreadCpu,
            ClockMode::Virtual {
                per_step: 0.25,
                per_sample: 0.001,
            },
        ] {
            assert_eq!(ClockMode::parse(&c.describe()), Some(c));
        }
        assert_eq!(
            ClockMode::parse("virtual:2"),
            Some(ClockMode::Virtual {
                per_step: 2.0,
                per_sample: 0.0
            })
        );
        assert_eq!(ClockMode::parse("virtual:0"), None);
        assert_eq!(ClockMode::parse("sundial"), None);
    }

    #[test]
    fn cpu_clock_advances_with_work() {
        let (_, s) = ClockMode::ThreadCpu.measure(1, || {
            let mut x = 0u64;
            for i in 0..5_000_000u64 {
                x = x.wrapping_mul(31).wrapping_add(i);
            }
            std::hint::black_box(x)
        });
        assert!(s > 0.0);
    }
}
