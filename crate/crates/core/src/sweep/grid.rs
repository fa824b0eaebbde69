use super::error::{Result, SweepError};

/// Axis values of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub bsz: Vec<usize>,
    pub peak_lr: Vec<f64>,
    pub warmup: Vec<f64>,
    pub days_factor: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            bsz: vec![4096, 8192, 16384],
            peak_lr: vec![5e-4, 1e-3, 2e-3],
            warmup: vec![0.0, 0.02, 0.04, 0.06],
            days_factor: vec![1.0, 3.0, 9.0],
        }
    }
}

pub const AXIS_KEYS: [&str; 4] = ["bsz", "peak_lr", "warmup", "days_factor"];

impl SearchSpace {
    pub fn size(&self) -> usize {
        self.bsz.len() * self.peak_lr.len() * self.warmup.len() * self.days_factor.len()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SweepError::Config(m));
        for (name, n) in AXIS_KEYS.iter().zip([
            self.bsz.len(),
            self.peak_lr.len(),
            self.warmup.len(),
            self.days_factor.len(),
        ]) {
            if n == 0 {
                return err(format!("axis `{name}` is empty"));
            }
        }
        if self.bsz.contains(&0) {
            return err("bsz values must be positive".into());
        }
        if self.peak_lr.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return err("peak_lr values must be positive".into());
        }
        if self.warmup.iter().any(|&x| !(0.0..1.0).contains(&x)) {
            return err("warmup values must lie in [0, 1)".into());
        }
        if self.days_factor.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return err("days_factor values must be positive".into());
        }
        Ok(())
    }

    /// Parses `axis = v1, v2, ...` lines; `#` starts a comment. Axes that
    /// are not mentioned keep their default values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut space = SearchSpace::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| SweepError::GridFile { line: i + 1, reason };
            let (key, values) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected `axis = values`, got `{line}`")))?;
            let key = key.trim();
            let items: Vec<&str> = values
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let floats = || -> Result<Vec<f64>> {
                items
                    .iter()
                    .map(|s| s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number"))))
                    .collect()
            };
            match key {
                "bsz" => {
                    space.bsz = items
                        .iter()
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|_| bad(format!("`{s}` is not a batch size")))
                        })
                        .collect::<Result<_>>()?
                }
                "peak_lr" => space.peak_lr = floats()?,
                "warmup" => space.warmup = floats()?,
                "days_factor" => space.days_factor = floats()?,
                other => {
                    return Err(bad(format!(
                        "unknown axis `{other}` (expected one of {})",
                        AXIS_KEYS.join(", ")
                    )))
                }
            }
        }
        space.validate()?;
        Ok(space)
    }

    pub fn render(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        format!(
            "bsz = {}\npeak_lr = {}\nwarmup = {}\ndays_factor = {}\n",
            join(&self.bsz),
            join(&self.peak_lr),
            join(&self.warmup),
            join(&self.days_factor)
        )
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub trial_id: usize,
    pub bsz: usize,
    pub peak_lr: f64,
    pub warmup_proportion: f64,
    pub days_factor: f64,
    pub seed: u64,
}

/// Cartesian product in lexicographic axis order (bsz slowest, days
/// fastest). Every trial shares `seed`, so trials differ only in their
/// hyperparameters.
pub fn build_grid(space: &SearchSpace, seed: u64) -> Result<Vec<TrialConfig>> {
    space.validate()?;
    let mut out = Vec::with_capacity(space.size());
    for &bsz in &space.bsz {
        for &peak_lr in &space.peak_lr {
            for &warmup_proportion in &space.warmup {
                for &days_factor in &space.days_factor {
                    out.push(TrialConfig {
                        trial_id: out.len(),
                        bsz,
                        peak_lr,
                        warmup_proportion,
                        days_factor,
                        seed,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        let g = build_grid(&SearchSpace::default(), 1).unwrap();
        assert_eq!(g.len(), 108);
        assert!(g.iter().enumerate().all(|(i, t)| t.trial_id == i));
        assert_eq!(
            (g[0].bsz, g[0].peak_lr, g[0].warmup_proportion, g[0].days_factor),
            (4096, 5e-4, 0.0, 1.0)
        );
        assert_eq!(g[1].days_factor, 3.0);
        assert_eq!(g[107].bsz, 16384);
    }

    #[test]
    fn small_grids() {
        let one = SearchSpace {
            bsz: vec![64],
            peak_lr: vec![1e-3],
            warmup: vec![0.06],
            days_factor: vec![1.0],
        };
        assert_eq!(build_grid(&one, 0).unwrap().len(), 1);
        let toy = SearchSpace {
            bsz: vec![64, 256],
            peak_lr: vec![1e-3, 2e-3],
            warmup: vec![0.06],
            days_factor: vec![1.0, 9.0],
        };
        let g = build_grid(&toy, 0).unwrap();
        assert_eq!(g.len(), 8);
        for (i, a) in g.iter().enumerate() {
            for b in &g[i + 1..] {
                assert!((a.bsz, a.peak_lr, a.days_factor) != (b.bsz, b.peak_lr, b.days_factor));
            }
        }
    }

    #[test]
    fn empty_axis_rejected() {
        let s = SearchSpace {
            warmup: vec![],
            ..SearchSpace::default()
        };
        assert!(matches!(build_grid(&s, 0), Err(SweepError::Config(_))));
    }

    #[test]
    fn grid_file_round_trip_and_errors() {
        let text = "# toy\nbsz = 64, 256\npeak_lr = 1e-3 2e-3\nwarmup = 0.06\ndays_factor = 1, 9 # fast\n";
        let s = SearchSpace::parse(text).unwrap();
        assert_eq!(s.bsz, vec![64, 256]);
        assert_eq!(s.peak_lr, vec![1e-3, 2e-3]);
        assert_eq!(SearchSpace::parse(&s.render()).unwrap(), s);
        assert_eq!(SearchSpace::parse("").unwrap(), SearchSpace::default());
        match SearchSpace::parse("bsz = 64\nlr = 1\n") {
            Err(SweepError::GridFile { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(SearchSpace::parse("bsz 64").is_err());
        assert!(SearchSpace::parse("bsz = -1").is_err());
        assert!(SearchSpace::parse("warmup =").is_err());
    }
}
