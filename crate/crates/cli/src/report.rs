//! Run reports (JSON) and plot tables (CSV).

use std::io::Write;

use impulsive::dual::ProfileSample;
use impulsive::planner::IterationRecord;
use impulsive::{ManeuverPlan, Problem};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseRow {
    pub t_sec: f64,
    pub mode: usize,
    pub mode_cost: String,
    /// Radial, transverse, normal.
    pub u_rtn_mms: [f64; 3],
    pub cost_mms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub candidates: usize,
    pub objective_mms: f64,
    pub max_p: f64,
    pub bound_mms: f64,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            candidates: r.candidates,
            objective_mms: r.objective * 1e3,
            max_p: r.max_p,
            bound_mms: r.bound * 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub t_sec: f64,
    pub mode_id: usize,
    pub p: f64,
}

impl From<&ProfileSample> for ProfileRow {
    fn from(s: &ProfileSample) -> Self {
        Self {
            t_sec: s.t,
            mode_id: s.mode,
            p: s.p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub gamma_sec: f64,
    pub plan_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub grid_size: usize,
    pub impulses: Vec<ImpulseRow>,
    pub total_cost_mms: f64,
    pub lower_bound_mms: f64,
    /// `total_cost / lower_bound`.
    pub gap: f64,
    pub certified: bool,
    pub iterations: usize,
    /// `‖w − Σ Γu‖ / ‖w‖`.
    pub residual: f64,
    /// Converged dual direction; empty for the zero target.
    pub lambda: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub profile: Vec<ProfileRow>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub timing: RunTiming,
}

impl RunReport {
    pub fn new(name: &str, problem: &Problem, plan: &ManeuverPlan, eps_cost: f64, timing: RunTiming) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: name.to_string(),
            grid_size: problem.gamma.len(),
            impulses: plan
                .impulses
                .iter()
                .map(|i| ImpulseRow {
                    t_sec: i.t,
                    mode: i.mode,
                    mode_cost: problem.schedule.modes[i.mode].cost.name().to_string(),
                    u_rtn_mms: [i.u[0] * 1e3, i.u[1] * 1e3, i.u[2] * 1e3],
                    cost_mms: i.cost * 1e3,
                })
                .collect(),
            total_cost_mms: plan.total_cost * 1e3,
            lower_bound_mms: plan.lower_bound * 1e3,
            gap: plan.gap(),
            certified: plan.certified(eps_cost),
            iterations: plan.iterations,
            residual: plan.residual,
            lambda: plan
                .dual
                .as_ref()
                .map(|d| d.lambda.iter().copied().collect())
                .unwrap_or_default(),
            trace: plan.trace.iter().map(TraceRow::from).collect(),
            profile: plan.profiles.iter().flatten().map(ProfileRow::from).collect(),
            timing,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Serialize)]
struct ManeuverCsvRow {
    t_sec: f64,
    mode: usize,
    #[serde(rename = "uR_mms")]
    ur_mms: f64,
    #[serde(rename = "uT_mms")]
    ut_mms: f64,
    #[serde(rename = "uN_mms")]
    un_mms: f64,
    cost_mms: f64,
}

pub fn write_maneuvers_csv<W: Write>(out: W, report: &RunReport) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for i in &report.impulses {
        w.serialize(ManeuverCsvRow {
            t_sec: i.t_sec,
            mode: i.mode,
            ur_mms: i.u_rtn_mms[0],
            ut_mms: i.u_rtn_mms[1],
            un_mms: i.u_rtn_mms[2],
            cost_mms: i.cost_mms,
        })?;
    }
    if report.impulses.is_empty() {
        w.write_record(["t_sec", "mode", "uR_mms", "uT_mms", "uN_mms", "cost_mms"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_profile_csv<W: Write>(out: W, rows: &[ProfileRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["t_sec", "mode_id", "p"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
