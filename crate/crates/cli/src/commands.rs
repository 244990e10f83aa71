//! Command implementations shared by the binary and the tests.

use std::time::Instant;

use impulsive::dual::profile_all;
use impulsive::planner::{lower_bound, plan, RESIDUAL_TOL};
use impulsive::reference::{compare as compare_solvers, CompareReport};
use impulsive::PlannerConfig;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::montecarlo::Init;
use crate::report::{ProfileRow, RunReport, RunTiming};
use crate::scenario::{Built, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("certificate violated: {0}")]
    Certificate(String),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Scenario(ScenarioError::Io { .. }) => 1,
            Self::Scenario(_) => 2,
            Self::Solver(_) => 3,
            Self::Certificate(_) => 4,
        }
    }
}

fn config_for(built: &Built, init: Option<Init>) -> PlannerConfig {
    match init {
        Some(i) => i.apply(built.config.clone()),
        None => built.config.clone(),
    }
}

pub fn solve(s: &Scenario, init: Option<Init>) -> Result<RunReport, CliError> {
    let built = s.build()?;
    let config = config_for(&built, init);
    let start = Instant::now();
    let planned = plan(&built.problem, &config).map_err(|e| CliError::Solver(e.to_string()))?;
    let timing = RunTiming {
        gamma_sec: built.gamma_seconds,
        plan_sec: start.elapsed().as_secs_f64(),
    };
    Ok(RunReport::new(
        &s.name,
        &built.problem,
        &planned,
        config.eps_cost,
        timing,
    ))
}

/// Checks the optimality certificate and the reached residual of a report.
pub fn check_certificate(report: &RunReport) -> Result<(), CliError> {
    if !report.certified {
        return Err(CliError::Certificate(format!(
            "cost {:.6} mm/s exceeds the certified bound {:.6} mm/s (gap {:.6})",
            report.total_cost_mms, report.lower_bound_mms, report.gap
        )));
    }
    if report.residual > RESIDUAL_TOL {
        return Err(CliError::Certificate(format!(
            "residual {:e} above {RESIDUAL_TOL:e}",
            report.residual
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    pub seed: u64,
    /// Bound along the target direction itself.
    pub target_direction_bound_mms: f64,
    /// Best bound over the target direction and the random samples.
    pub best_bound_mms: f64,
    pub best_direction: Vec<f64>,
}

/// Directions uniform on the unit sphere, by rejection from the cube.
pub fn sample_directions(n: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let r = v.norm();
        if r > 0.0 && r <= 1.0 {
            out.push(v / r);
        }
    }
    out
}

pub fn bound(s: &Scenario, samples: usize, seed: u64) -> Result<BoundReport, CliError> {
    let built = s.build()?;
    let p = &built.problem;
    if p.w.norm() == 0.0 {
        return Ok(BoundReport {
            samples,
            seed,
            target_direction_bound_mms: 0.0,
            best_bound_mms: 0.0,
            best_direction: vec![0.0; p.state_dim()],
        });
    }
    let what = p.w.normalize();
    let solver = |e: impulsive::planner::PlanError| CliError::Solver(e.to_string());
    let (from_w, _) = lower_bound(p, std::slice::from_ref(&what)).map_err(solver)?;
    let mut dirs = sample_directions(p.state_dim(), samples, seed);
    dirs.push(what);
    let (best, dir) = lower_bound(p, &dirs).map_err(solver)?;
    Ok(BoundReport {
        samples,
        seed,
        target_direction_bound_mms: from_w * 1e3,
        best_bound_mms: best * 1e3,
        best_direction: dir.iter().copied().collect(),
    })
}

/// Profile samples `p_j(t)` on the full grid, for `lambda` or, when absent,
/// for the converged direction of a fresh solve.
pub fn profile(s: &Scenario, lambda: Option<Vec<f64>>) -> Result<Vec<ProfileRow>, CliError> {
    let built = s.build()?;
    let lambda = match lambda {
        Some(l) => {
            if l.len() != built.problem.state_dim() {
                return Err(CliError::Io(anyhow::anyhow!(
                    "report lambda has {} entries, expected {}",
                    l.len(),
                    built.problem.state_dim()
                )));
            }
            l
        }
        None => {
            let planned = plan(&built.problem, &built.config).map_err(|e| CliError::Solver(e.to_string()))?;
            match planned.dual {
                Some(d) => d.lambda.iter().copied().collect(),
                None => return Ok(Vec::new()),
            }
        }
    };
    Ok(profile_all(&built.problem, &lambda)
        .iter()
        .flatten()
        .map(ProfileRow::from)
        .collect())
}

pub fn compare(s: &Scenario, reps: usize, facets: usize) -> Result<CompareReport, CliError> {
    let built = s.build()?;
    Ok(compare_solvers(&built.problem, &built.config, reps.max(1), facets))
}
