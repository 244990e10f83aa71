//! Scenario files: JSON schema, validation and problem construction.

use std::f64::consts::TAU;
use std::path::Path;

use impulsive::astro::{gamma_table, target_pseudostate, OrbitElements, PhysicalConstants, RoeState, SecularRates};
use impulsive::cost::{decompose_schedule, CostPiece, Interval, ScheduleError};
use impulsive::planner::InitScheme;
use impulsive::{CostModel, PlannerConfig, Problem, ThrusterSet};
use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("ambiguous target: give either pseudostate_m or initial_roe_m/final_roe_m, not both")]
    AmbiguousTarget,
    #[error("missing target: give pseudostate_m or both initial_roe_m and final_roe_m")]
    MissingTarget,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{0}")]
    Model(String),
}

impl ScenarioError {
    fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }
}

/// Chief orbit in kilometers and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSpec {
    pub a_km: f64,
    pub e: f64,
    pub i_deg: f64,
    pub raan_deg: f64,
    pub argp_deg: f64,
    pub mean_anomaly_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub mu_m3_s2: f64,
    pub r_earth_m: f64,
    pub j2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Uniform step that divides the horizon.
    StepSec(f64),
    /// Explicit strictly increasing times inside the horizon.
    TimesSec(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    TwoNorm,
    OneNorm,
    /// Thruster directions in the RTN frame; the cost is the least total
    /// thruster effort reaching `u`.
    PolyhedralThrusters {
        rows: Vec<[f64; 3]>,
    },
    MixedAxis {
        fixed_axis: usize,
    },
}

impl CostSpec {
    pub fn model(&self) -> Result<CostModel, ScenarioError> {
        Ok(match self {
            Self::TwoNorm => CostModel::TwoNorm,
            Self::OneNorm => CostModel::OneNorm,
            Self::PolyhedralThrusters { rows } => CostModel::PolyhedralThrusters(
                ThrusterSet::new(rows.iter().map(|r| r.to_vec()).collect())
                    .map_err(|e| ScenarioError::Model(e.to_string()))?,
            ),
            Self::MixedAxis { fixed_axis } => CostModel::MixedAxis {
                fixed_axis: *fixed_axis,
            },
        })
    }
}

fn closed_end() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub start_sec: f64,
    pub end_sec: f64,
    #[serde(default = "closed_end")]
    pub start_closed: bool,
    #[serde(default = "closed_end")]
    pub end_closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerigeeSpec {
    pub half_width_sec: f64,
}

/// Where a mode applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    /// Absolute time intervals.
    Intervals(Vec<IntervalSpec>),
    /// Closed windows around every perigee passage of the chief.
    Perigee(PerigeeSpec),
    /// Every time not covered by the other modes' windows.
    Remainder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub cost: CostSpec,
    pub windows: WindowSpec,
}

/// Either the pseudostate `w` or an initial/final ROE pair, all as `a·δ` [m].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudostate_m: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_roe_m: Option<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_roe_m: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_remove: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_init: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seed_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitScheme>,
    /// Row-major residual weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_weight: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_min_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

impl PlannerOverrides {
    pub fn apply(&self, mut c: PlannerConfig) -> Result<PlannerConfig, ScenarioError> {
        if let Some(v) = self.eps_cost {
            c.eps_cost = v;
        }
        if let Some(v) = self.eps_remove {
            c.eps_remove = v;
        }
        if let Some(v) = self.n_init {
            c.n_init = v;
        }
        if let Some(v) = self.n_seed_grid {
            c.n_seed_grid = v;
        }
        if let Some(v) = self.init {
            c.init = v;
        }
        if let Some(rows) = &self.q_weight {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(ScenarioError::invalid("planner.q_weight must be square"));
            }
            c.q_weight = Some(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
        }
        if let Some(v) = self.alpha_min_mps {
            c.alpha_min = Some(v);
        }
        if let Some(v) = self.max_iters {
            c.max_iters = v;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub orbit: OrbitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSpec>,
    pub t_i_sec: f64,
    pub t_f_sec: f64,
    pub grid: GridSpec,
    pub modes: Vec<ModeSpec>,
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planner: Option<PlannerOverrides>,
}

/// A scenario turned into a planning problem.
#[derive(Debug, Clone)]
pub struct Built {
    pub problem: Problem,
    pub config: PlannerConfig,
    /// Seconds spent tabulating `Γ`.
    pub gamma_seconds: f64,
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Parses and validates a scenario, reporting schema errors with the path of
/// the offending field.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    s.validate()?;
    Ok(s)
}

fn finite(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::invalid(format!("{name} must be finite")))
    }
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        finite("t_i_sec", self.t_i_sec)?;
        finite("t_f_sec", self.t_f_sec)?;
        if !(self.t_f_sec > self.t_i_sec) {
            return Err(ScenarioError::invalid("t_f_sec must exceed t_i_sec"));
        }
        self.elements()?;
        if self.modes.is_empty() {
            return Err(ScenarioError::invalid("modes must not be empty"));
        }
        let remainders = self.modes.iter().filter(|m| m.windows == WindowSpec::Remainder).count();
        if remainders > 1 {
            return Err(ScenarioError::invalid("at most one mode may use the remainder window"));
        }
        for (j, m) in self.modes.iter().enumerate() {
            m.cost
                .model()?
                .check_dim(3)
                .map_err(|e| ScenarioError::Model(format!("modes[{j}]: {e}")))?;
            match &m.windows {
                WindowSpec::Intervals(ivs) => {
                    for iv in ivs {
                        finite("start_sec", iv.start_sec)?;
                        finite("end_sec", iv.end_sec)?;
                        if iv.end_sec < iv.start_sec {
                            return Err(ScenarioError::invalid(format!(
                                "modes[{j}]: interval ends before it starts"
                            )));
                        }
                    }
                }
                WindowSpec::Perigee(p) => {
                    if !(p.half_width_sec > 0.0 && p.half_width_sec.is_finite()) {
                        return Err(ScenarioError::invalid(format!(
                            "modes[{j}]: half_width_sec must be positive"
                        )));
                    }
                }
                WindowSpec::Remainder => {}
            }
        }
        self.target_kind()?;
        self.grid_times()?;
        if let Some(p) = &self.planner {
            p.apply(PlannerConfig::default())?
                .validate(6)
                .map_err(ScenarioError::Invalid)?;
        }
        Ok(())
    }

    pub fn constants(&self) -> PhysicalConstants {
        match self.constants {
            Some(c) => PhysicalConstants {
                mu: c.mu_m3_s2,
                r_earth: c.r_earth_m,
                j2: c.j2,
            },
            None => PhysicalConstants::default(),
        }
    }

    pub fn elements(&self) -> Result<OrbitElements, ScenarioError> {
        let o = self.orbit;
        OrbitElements::from_km_deg(o.a_km, o.e, o.i_deg, o.raan_deg, o.argp_deg, o.mean_anomaly_deg)
            .map_err(|e| ScenarioError::Model(format!("orbit: {e}")))
    }

    fn target_kind(&self) -> Result<(), ScenarioError> {
        let t = &self.target;
        let pair = t.initial_roe_m.is_some() || t.final_roe_m.is_some();
        match (t.pseudostate_m.is_some(), pair) {
            (true, true) => Err(ScenarioError::AmbiguousTarget),
            (false, false) => Err(ScenarioError::MissingTarget),
            (false, true) if t.initial_roe_m.is_none() || t.final_roe_m.is_none() => Err(ScenarioError::MissingTarget),
            _ => Ok(()),
        }
    }

    /// The target pseudostate `w` [m].
    pub fn pseudostate(&self) -> Result<DVector<f64>, ScenarioError> {
        self.target_kind()?;
        let t = &self.target;
        if let Some(w) = t.pseudostate_m {
            return Ok(DVector::from_column_slice(&w));
        }
        let oe = self.elements()?;
        let roe = |v: [f64; 6]| RoeState::from_vector(&(Vector6::from_column_slice(&v) / oe.a));
        let (xi, xf) = (roe(t.initial_roe_m.unwrap()), roe(t.final_roe_m.unwrap()));
        let w = target_pseudostate(&xi, &xf, &oe, self.t_i_sec, self.t_f_sec, &self.constants());
        Ok(DVector::from_column_slice(w.as_slice()))
    }

    /// The candidate time grid declared by the scenario.
    pub fn grid_times(&self) -> Result<Vec<f64>, ScenarioError> {
        let (ti, tf) = (self.t_i_sec, self.t_f_sec);
        match &self.grid {
            GridSpec::StepSec(step) => {
                if !(*step > 0.0 && step.is_finite()) {
                    return Err(ScenarioError::invalid("grid.step_sec must be positive"));
                }
                let ratio = (tf - ti) / step;
                let n = ratio.round();
                if (ratio - n).abs() > 1e-9 * ratio.max(1.0) || n < 1.0 {
                    return Err(ScenarioError::invalid(format!(
                        "grid.step_sec {step} does not divide the horizon {}",
                        tf - ti
                    )));
                }
                let n = n as usize;
                Ok((0..=n)
                    .map(|k| if k == n { tf } else { ti + k as f64 * step })
                    .collect())
            }
            GridSpec::TimesSec(times) => {
                if times.is_empty() {
                    return Err(ScenarioError::invalid("grid.times_sec must not be empty"));
                }
                if times.iter().any(|t| !t.is_finite() || *t < ti || *t > tf) {
                    return Err(ScenarioError::invalid(
                        "grid.times_sec must lie inside [t_i_sec, t_f_sec]",
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ScenarioError::invalid("grid.times_sec must be strictly increasing"));
                }
                Ok(times.clone())
            }
        }
    }

    /// Perigee times `t_i + (2πN − M₀)/Ṁ` whose window meets the horizon.
    pub fn perigee_times(&self, half_width: f64) -> Result<Vec<f64>, ScenarioError> {
        let oe = self.elements()?;
        let rate = SecularRates::of(&oe, &self.constants()).mean_anomaly;
        let m0 = oe.mean_anomaly;
        let span = self.t_f_sec - self.t_i_sec;
        let first = ((m0 - rate * half_width) / TAU).ceil() as i64;
        let last = ((m0 + rate * (span + half_width)) / TAU).floor() as i64;
        Ok((first..=last)
            .map(|n| self.t_i_sec + (TAU * n as f64 - m0) / rate)
            .collect())
    }

    /// Every mode's intervals, with perigee windows expanded and the
    /// remainder filled in as the open gaps between the other windows.
    pub fn pieces(&self) -> Result<Vec<(usize, Interval)>, ScenarioError> {
        let (ti, tf) = (self.t_i_sec, self.t_f_sec);
        let mut out = Vec::new();
        for (j, m) in self.modes.iter().enumerate() {
            match &m.windows {
                WindowSpec::Intervals(ivs) => out.extend(ivs.iter().map(|iv| {
                    (
                        j,
                        Interval {
                            start: iv.start_sec,
                            end: iv.end_sec,
                            start_closed: iv.start_closed,
                            end_closed: iv.end_closed,
                        },
                    )
                })),
                WindowSpec::Perigee(p) => {
                    for tp in self.perigee_times(p.half_width_sec)? {
                        let lo = (tp - p.half_width_sec).max(ti);
                        let hi = (tp + p.half_width_sec).min(tf);
                        if lo <= hi {
                            out.push((j, Interval::closed(lo, hi)));
                        }
                    }
                }
                WindowSpec::Remainder => {}
            }
        }
        if let Some(r) = self.modes.iter().position(|m| m.windows == WindowSpec::Remainder) {
            let mut taken: Vec<Interval> = out.iter().map(|(_, iv)| *iv).collect();
            taken.sort_by(|a, b| a.start.total_cmp(&b.start));
            let mut cursor = ti;
            let mut cursor_closed = true;
            for iv in taken {
                if iv.start > cursor || (iv.start == cursor && cursor_closed && !iv.start_closed) {
                    out.push((
                        r,
                        Interval {
                            start: cursor,
                            end: iv.start.min(tf),
                            start_closed: cursor_closed,
                            end_closed: !iv.start_closed,
                        },
                    ));
                }
                if iv.end > cursor || (iv.end == cursor && iv.end_closed) {
                    cursor = iv.end;
                    cursor_closed = !iv.end_closed;
                }
            }
            if cursor < tf || (cursor == tf && cursor_closed) {
                out.push((
                    r,
                    Interval {
                        start: cursor,
                        end: tf,
                        start_closed: cursor_closed,
                        end_closed: true,
                    },
                ));
            }
        }
        Ok(out)
    }

    pub fn planner_config(&self) -> Result<PlannerConfig, ScenarioError> {
        match &self.planner {
            Some(p) => p.apply(PlannerConfig::default()),
            None => Ok(PlannerConfig::default()),
        }
    }

    /// Builds the problem on the scenario's own grid.
    pub fn build(&self) -> Result<Built, ScenarioError> {
        self.build_on(self.grid_times()?)
    }

    /// Builds the problem on an arbitrary grid inside the horizon. Pieces
    /// that contain no grid time are dropped, so a coarse grid simply loses
    /// the modes it never samples.
    pub fn build_on(&self, grid: Vec<f64>) -> Result<Built, ScenarioError> {
        let pieces: Vec<CostPiece> = self
            .pieces()?
            .into_iter()
            .filter(|(_, iv)| grid.iter().any(|&t| iv.contains(t)))
            .map(|(j, iv)| {
                Ok(CostPiece {
                    interval: iv,
                    cost: self.modes[j].cost.model()?,
                })
            })
            .collect::<Result<_, ScenarioError>>()?;
        let schedule = decompose_schedule(&pieces, &grid)?;
        let oe = self.elements()?;
        let start = std::time::Instant::now();
        let gamma = gamma_table(&oe, self.t_i_sec, self.t_f_sec, grid, &self.constants())
            .map_err(|e| ScenarioError::Model(e.to_string()))?;
        let gamma_seconds = start.elapsed().as_secs_f64();
        let problem =
            Problem::new(self.pseudostate()?, gamma, schedule).map_err(|e| ScenarioError::Model(e.to_string()))?;
        Ok(Built {
            problem,
            config: self.planner_config()?,
            gamma_seconds,
        })
    }
}
