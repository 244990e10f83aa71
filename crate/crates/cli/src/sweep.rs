//! Planner run time against grid resolution.

use std::io::Write;
use std::time::Instant;

use impulsive::planner::plan;
use serde::{Deserialize, Serialize};

use crate::montecarlo::{case_seed, random_target};
use crate::scenario::{Scenario, ScenarioError};

pub const DEFAULT_SIZES: [usize; 6] = [10, 100, 1_000, 10_000, 100_000, 1_000_000];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_size: usize,
    /// Slowest planner run over the cases, `Γ` tabulation excluded.
    pub seconds: f64,
    pub mean_seconds: f64,
    /// One-off `Γ` tabulation for this grid.
    pub gamma_seconds: f64,
    pub failures: usize,
}

/// `n` evenly spaced times over the scenario horizon, endpoints included.
pub fn uniform_grid(s: &Scenario, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![s.t_i_sec];
    }
    let span = s.t_f_sec - s.t_i_sec;
    (0..n)
        .map(|k| {
            if k == n - 1 {
                s.t_f_sec
            } else {
                s.t_i_sec + span * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Times the planner on `cases` random targets per grid size, sequentially.
pub fn run(s: &Scenario, sizes: &[usize], cases: usize, seed: u64) -> Result<Vec<SweepRow>, ScenarioError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let built = s.build_on(uniform_grid(s, n.max(1)))?;
        let mut times = Vec::with_capacity(cases);
        let mut failures = 0;
        for i in 0..cases {
            let p = built
                .problem
                .with_target(random_target(case_seed(seed, i)))
                .map_err(|e| ScenarioError::Model(e.to_string()))?;
            let start = Instant::now();
            let r = plan(&p, &built.config);
            times.push(start.elapsed().as_secs_f64());
            if r.is_err() {
                failures += 1;
            }
        }
        rows.push(SweepRow {
            grid_size: n,
            seconds: times.iter().copied().fold(0.0, f64::max),
            mean_seconds: times.iter().sum::<f64>() / times.len().max(1) as f64,
            gamma_seconds: built.gamma_seconds,
            failures,
        });
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
