//! Seeded Monte Carlo runs over random targets on a fixed scenario grid.

use std::io::Write;

use clap::ValueEnum;
use impulsive::planner::{plan, InitScheme};
use impulsive::{PlannerConfig, Problem};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Half-widths of the uniform target distribution, `a·δ` [m].
pub const TARGET_HALF_WIDTH_M: [f64; 6] = [5000.0, 10000.0, 5000.0, 5000.0, 5000.0, 5000.0];

/// Iteration counts at or above this share the last histogram bin.
pub const HISTOGRAM_TOP: usize = 15;

/// Initial candidate schemes named by their candidate count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// First and last grid times.
    Two,
    /// Six best of twenty seed times along the target direction.
    Six,
    /// Ten evenly spaced times.
    Ten,
}

impl Init {
    pub fn apply(self, mut c: PlannerConfig) -> PlannerConfig {
        c.init = match self {
            Self::Two => InitScheme::Endpoints,
            Self::Six => {
                c.n_init = 6;
                c.n_seed_grid = 20;
                InitScheme::Support
            }
            Self::Ten => InitScheme::Uniform(10),
        };
        c
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of case `i`; independent of thread count and scheduling.
pub fn case_seed(seed: u64, i: usize) -> u64 {
    seed ^ splitmix64(i as u64)
}

pub fn random_target(case_seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
    DVector::from_fn(6, |i, _| {
        let h = TARGET_HALF_WIDTH_M[i];
        rng.random_range(-h..h)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub cost_mms: Option<f64>,
    pub bound_mms: Option<f64>,
    pub gap: Option<f64>,
    pub residual: Option<f64>,
    /// Trace maxima of `p` rose between iterations.
    pub max_p_rose: bool,
    pub error: Option<String>,
}

pub fn run_case(problem: &Problem, config: &PlannerConfig, seed: u64, case: usize) -> CaseResult {
    let cs = case_seed(seed, case);
    let result = problem
        .with_target(random_target(cs))
        .map_err(|e| e.to_string())
        .and_then(|p| plan(&p, config).map_err(|e| e.to_string()));
    match result {
        Ok(plan) => CaseResult {
            case,
            seed: cs,
            iterations: Some(plan.iterations),
            cost_mms: Some(plan.total_cost * 1e3),
            bound_mms: Some(plan.lower_bound * 1e3),
            gap: Some(plan.gap()),
            residual: Some(plan.residual),
            max_p_rose: plan.trace.windows(2).any(|w| w[1].max_p > w[0].max_p + 1e-9),
            error: None,
        },
        Err(e) => CaseResult {
            case,
            seed: cs,
            iterations: None,
            cost_mms: None,
            bound_mms: None,
            gap: None,
            residual: None,
            max_p_rose: false,
            error: Some(e),
        },
    }
}

/// Runs `count` cases in parallel; results are in case order.
pub fn run(problem: &Problem, config: &PlannerConfig, seed: u64, count: usize) -> Vec<CaseResult> {
    (0..count)
        .into_par_iter()
        .map(|i| run_case(problem, config, seed, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Iteration count; the last bin holds everything at or above it.
    pub iterations: usize,
    pub open_ended: bool,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub init: Init,
    pub count: usize,
    pub seed: u64,
    pub failures: usize,
    pub mean_iterations: f64,
    pub max_iterations: usize,
    pub within_10: f64,
    pub within_15: f64,
    pub max_residual: f64,
    pub max_gap: f64,
    pub max_p_rose_fraction: f64,
    pub histogram: Vec<HistogramBin>,
}

pub fn summarize(init: Init, seed: u64, cases: &[CaseResult]) -> Summary {
    let iters: Vec<usize> = cases.iter().filter_map(|c| c.iterations).collect();
    let n = cases.len().max(1) as f64;
    let mut histogram: Vec<HistogramBin> = (1..=HISTOGRAM_TOP)
        .map(|k| HistogramBin {
            iterations: k,
            open_ended: k == HISTOGRAM_TOP,
            cases: 0,
        })
        .collect();
    for &k in &iters {
        histogram[k.clamp(1, HISTOGRAM_TOP) - 1].cases += 1;
    }
    let fmax = |f: fn(&CaseResult) -> Option<f64>| cases.iter().filter_map(f).fold(0.0, f64::max);
    Summary {
        init,
        count: cases.len(),
        seed,
        failures: cases.len() - iters.len(),
        mean_iterations: iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64,
        max_iterations: iters.iter().copied().max().unwrap_or(0),
        within_10: iters.iter().filter(|&&k| k <= 10).count() as f64 / n,
        within_15: iters.iter().filter(|&&k| k <= 15).count() as f64 / n,
        max_residual: fmax(|c| c.residual),
        max_gap: fmax(|c| c.gap),
        max_p_rose_fraction: cases.iter().filter(|c| c.max_p_rose).count() as f64 / n,
        histogram,
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    case: usize,
    seed: u64,
    iterations: Option<usize>,
    cost_mms: Option<f64>,
    bound_mms: Option<f64>,
    gap: Option<f64>,
    residual: Option<f64>,
    error: Option<&'a str>,
}

pub fn write_csv<W: Write>(out: W, cases: &[CaseResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cases {
        w.serialize(CsvRow {
            case: c.case,
            seed: c.seed,
            iterations: c.iterations,
            cost_mms: c.cost_mms,
            bound_mms: c.bound_mms,
            gap: c.gap,
            residual: c.residual,
            error: c.error.as_deref(),
        })?;
    }
    w.flush()?;
    Ok(())
}
