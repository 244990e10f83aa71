//! Closed-form J2-perturbed mean relative orbital element dynamics.
//!
//! The relative state is the quasi-nonsingular ROE vector
//! `(δa, δλ, δe_x, δe_y, δi_x, δi_y)` defined against the chief's mean
//! Keplerian elements. Mean elements evolve with constant secular rates, the
//! state transition matrix is available in closed form, and impulsive
//! delta-v in the chief RTN frame maps to ROE jumps through a 6×3 control
//! matrix.
//!
//! Pseudostates and `Γ(t)` carry a factor of the chief semimajor axis, so
//! pseudostates are in meters and `Γ` maps m/s to meters.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, Matrix6, Matrix6x3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{GammaTable, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AstroError {
    #[error("invalid orbit elements: {0}")]
    InvalidElements(String),
    #[error("kepler solver did not converge for M = {mean_anomaly}, e = {eccentricity}")]
    KeplerNonConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("equatorial chief orbit (i = {0} rad) makes the control matrix singular")]
    EquatorialChief(f64),
    #[error("time {t} outside [{t_i}, {t_f}]")]
    TimeOutOfRange { t: f64, t_i: f64, t_f: f64 },
}

/// Gravitational parameter, Earth radius and J2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// m³/s²
    pub mu: f64,
    /// m
    pub r_earth: f64,
    pub j2: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu: 3.986e14,
            r_earth: 6.378e6,
            j2: 1.082e-3,
        }
    }
}

impl PhysicalConstants {
    /// Same gravity field with the J2 term switched off.
    pub fn keplerian(&self) -> Self {
        Self { j2: 0.0, ..*self }
    }
}

/// Mean Keplerian elements. Angles are radians and are never wrapped here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitElements {
    /// Semimajor axis [m].
    pub a: f64,
    pub e: f64,
    pub i: f64,
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
}

impl OrbitElements {
    pub fn new(a: f64, e: f64, i: f64, raan: f64, argp: f64, mean_anomaly: f64) -> Result<Self, AstroError> {
        let oe = Self {
            a,
            e,
            i,
            raan,
            argp,
            mean_anomaly,
        };
        oe.validate()?;
        Ok(oe)
    }

    /// Builds elements from kilometers and degrees.
    pub fn from_km_deg(
        a_km: f64,
        e: f64,
        i_deg: f64,
        raan_deg: f64,
        argp_deg: f64,
        mean_anomaly_deg: f64,
    ) -> Result<Self, AstroError> {
        Self::new(
            a_km * 1e3,
            e,
            i_deg.to_radians(),
            raan_deg.to_radians(),
            argp_deg.to_radians(),
            mean_anomaly_deg.to_radians(),
        )
    }

    pub fn validate(&self) -> Result<(), AstroError> {
        let all = [self.a, self.e, self.i, self.raan, self.argp, self.mean_anomaly];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(AstroError::InvalidElements("non-finite element".into()));
        }
        if self.a <= 0.0 {
            return Err(AstroError::InvalidElements(format!("a = {} must be > 0", self.a)));
        }
        if !(0.0..1.0).contains(&self.e) {
            return Err(AstroError::InvalidElements(format!("e = {} must be in [0, 1)", self.e)));
        }
        if !(0.0..=PI).contains(&self.i) {
            return Err(AstroError::InvalidElements(format!("i = {} must be in [0, π]", self.i)));
        }
        Ok(())
    }

    /// η = √(1 − e²)
    pub fn eta(&self) -> f64 {
        (1.0 - self.e * self.e).sqrt()
    }

    pub fn mean_motion(&self, k: &PhysicalConstants) -> f64 {
        (k.mu / self.a.powi(3)).sqrt()
    }

    /// Keplerian period 2π/n [s].
    pub fn period(&self, k: &PhysicalConstants) -> f64 {
        TAU / self.mean_motion(k)
    }

    /// Time between perigee passes, 2π/Ṁ including the J2 drift [s].
    pub fn anomalistic_period(&self, k: &PhysicalConstants) -> f64 {
        TAU / SecularRates::of(self, k).mean_anomaly
    }
}

/// Secular drift of Ω, ω and M for the mean elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularRates {
    pub raan: f64,
    pub argp: f64,
    pub mean_anomaly: f64,
    /// κ = 3 J2 R² √μ / (4 a^{7/2} η⁴)
    pub kappa: f64,
}

impl SecularRates {
    pub fn of(oe: &OrbitElements, k: &PhysicalConstants) -> Self {
        let eta = oe.eta();
        let kappa = 0.75 * k.j2 * k.r_earth * k.r_earth * k.mu.sqrt() / (oe.a.powf(3.5) * eta.powi(4));
        let ci = oe.i.cos();
        Self {
            raan: -2.0 * kappa * ci,
            argp: kappa * (5.0 * ci * ci - 1.0),
            mean_anomaly: oe.mean_motion(k) + kappa * eta * (3.0 * ci * ci - 1.0),
            kappa,
        }
    }
}

/// Dimensionless relative orbital elements.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoeState {
    pub da: f64,
    pub dlambda: f64,
    pub dex: f64,
    pub dey: f64,
    pub dix: f64,
    pub diy: f64,
}

impl RoeState {
    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            da: v[0],
            dlambda: v[1],
            dex: v[2],
            dey: v[3],
            dix: v[4],
            diy: v[5],
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.da, self.dlambda, self.dex, self.dey, self.dix, self.diy)
    }

    /// ROE of a deputy with respect to a chief.
    pub fn between(chief: &OrbitElements, deputy: &OrbitElements) -> Self {
        let d_raan = deputy.raan - chief.raan;
        let d_argp = deputy.argp - chief.argp;
        Self {
            da: (deputy.a - chief.a) / chief.a,
            dlambda: (deputy.mean_anomaly - chief.mean_anomaly) + chief.eta() * (d_argp + d_raan * chief.i.cos()),
            dex: deputy.e * deputy.argp.cos() - chief.e * chief.argp.cos(),
            dey: deputy.e * deputy.argp.sin() - chief.e * chief.argp.sin(),
            dix: deputy.i - chief.i,
            diy: d_raan * chief.i.sin(),
        }
    }
}

/// Target minus free drift, scaled by the chief semimajor axis [m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pseudostate(pub Vector6<f64>);

impl Pseudostate {
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Closed-form STM over an interval of length `dt` starting at the epoch of
/// the elements it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Stm {
    pub matrix: Matrix6<f64>,
    pub dt: f64,
}

/// RTN delta-v [m/s] to ROE jump.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMatrix(pub Matrix6x3<f64>);

/// Solves Kepler's equation for the true anomaly.
///
/// The result stays on the same revolution as `mean_anomaly`, so unwrapped
/// inputs give unwrapped outputs.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64, AstroError> {
    let ecc_anomaly = solve_eccentric_anomaly(mean_anomaly, e)?;
    Ok(eccentric_to_true(ecc_anomaly, e))
}

/// Newton iteration on `E − e sin E = M` seeded at `M + e sin M`, bracketed
/// so a bisection step replaces any Newton step that leaves the bracket.
pub fn solve_eccentric_anomaly(mean_anomaly: f64, e: f64) -> Result<f64, AstroError> {
    const MAX_ITERS: usize = 50;
    const TOL: f64 = 1e-13;
    let fail = || AstroError::KeplerNonConvergence {
        mean_anomaly,
        eccentricity: e,
    };
    if !mean_anomaly.is_finite() || !(0.0..1.0).contains(&e) {
        return Err(fail());
    }
    // Reduce to [-π, π) and restore the revolution count afterwards.
    let revs = ((mean_anomaly + PI) / TAU).floor();
    let m = mean_anomaly - revs * TAU;
    if m == 0.0 || e == 0.0 {
        return Ok(m + revs * TAU);
    }

    // E − e sin E − M is monotone in E; E ∈ [M − e, M + e] brackets the root.
    let (mut lo, mut hi) = (m - e, m + e);
    let mut ecc = m + e * m.sin();
    for _ in 0..MAX_ITERS {
        let f = ecc - e * ecc.sin() - m;
        if f.abs() <= TOL {
            return Ok(ecc + revs * TAU);
        }
        if f > 0.0 {
            hi = ecc;
        } else {
            lo = ecc;
        }
        let fp = 1.0 - e * ecc.cos();
        let newton = ecc - f / fp;
        ecc = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * 4.0 * (1.0 + m.abs()) {
            return Ok(ecc + revs * TAU);
        }
    }
    let f = ecc - e * ecc.sin() - m;
    if f.abs() <= 1e-12 {
        Ok(ecc + revs * TAU)
    } else {
        Err(fail())
    }
}

pub fn eccentric_to_true(ecc_anomaly: f64, e: f64) -> f64 {
    let revs = ((ecc_anomaly + PI) / TAU).floor();
    let ea = ecc_anomaly - revs * TAU;
    let half = ea / 2.0;
    let nu = 2.0 * ((1.0 + e).sqrt() * half.sin()).atan2((1.0 - e).sqrt() * half.cos());
    nu + revs * TAU
}

pub fn true_to_mean(nu: f64, e: f64) -> f64 {
    let revs = ((nu + PI) / TAU).floor();
    let v = nu - revs * TAU;
    let half = v / 2.0;
    let ea = 2.0 * ((1.0 - e).sqrt() * half.sin()).atan2((1.0 + e).sqrt() * half.cos());
    ea - e * ea.sin() + revs * TAU
}

/// Advances the mean elements by `dt` seconds under the J2 secular rates.
pub fn propagate_elements(oe: &OrbitElements, dt: f64, k: &PhysicalConstants) -> OrbitElements {
    if dt == 0.0 {
        return *oe;
    }
    let rates = SecularRates::of(oe, k);
    OrbitElements {
        raan: oe.raan + rates.raan * dt,
        argp: oe.argp + rates.argp * dt,
        mean_anomaly: oe.mean_anomaly + rates.mean_anomaly * dt,
        ..*oe
    }
}

/// State transition matrix for the ROE over `[t1, t1 + dt]` given the
/// chief's mean elements at `t1`.
pub fn compute_stm(oe_t1: &OrbitElements, dt: f64, k: &PhysicalConstants) -> Stm {
    let rates = SecularRates::of(oe_t1, k);
    let kappa = rates.kappa;
    let eta = oe_t1.eta();
    let n = oe_t1.mean_motion(k);
    let (si, ci) = oe_t1.i.sin_cos();

    let g = 1.0 / (eta * eta);
    let p = 3.0 * ci * ci - 1.0;
    let q = 5.0 * ci * ci - 1.0;
    let s = (2.0 * oe_t1.i).sin();
    let t = si * si;

    let w1 = oe_t1.argp;
    let w2 = oe_t1.argp + rates.argp * dt;
    let (ex1, ey1) = (oe_t1.e * w1.cos(), oe_t1.e * w1.sin());
    let (ex2, ey2) = (oe_t1.e * w2.cos(), oe_t1.e * w2.sin());
    let (sw, cw) = (rates.argp * dt).sin_cos();

    let kd = kappa * dt;
    let mut m = Matrix6::<f64>::zeros();
    m[(0, 0)] = 1.0;

    m[(1, 0)] = (-1.5 * n - 7.0 * kappa * eta * p) * dt;
    m[(1, 1)] = 1.0;
    m[(1, 2)] = 7.0 * kd * ex1 * p / eta;
    m[(1, 3)] = 7.0 * kd * ey1 * p / eta;
    m[(1, 4)] = -7.0 * kd * eta * s;

    m[(2, 0)] = 3.5 * kd * ey2 * q;
    m[(2, 2)] = cw - 4.0 * kd * ex1 * ey2 * g * q;
    m[(2, 3)] = -sw - 4.0 * kd * ey1 * ey2 * g * q;
    m[(2, 4)] = 5.0 * kd * ey2 * s;

    m[(3, 0)] = -3.5 * kd * ex2 * q;
    m[(3, 2)] = sw + 4.0 * kd * ex1 * ex2 * g * q;
    m[(3, 3)] = cw + 4.0 * kd * ey1 * ex2 * g * q;
    m[(3, 4)] = -5.0 * kd * ex2 * s;

    m[(4, 4)] = 1.0;

    m[(5, 0)] = 3.5 * kd * s;
    m[(5, 2)] = -4.0 * kd * ex1 * g * s;
    m[(5, 3)] = -4.0 * kd * ey1 * g * s;
    m[(5, 4)] = 2.0 * kd * t;
    m[(5, 5)] = 1.0;

    Stm { matrix: m, dt }
}

/// Maps an RTN impulse to the ROE change at the chief elements `oe`.
pub fn control_input_matrix(oe: &OrbitElements, k: &PhysicalConstants) -> Result<ControlMatrix, AstroError> {
    let (si, ci) = oe.i.sin_cos();
    if si.abs() < 1e-12 {
        return Err(AstroError::EquatorialChief(oe.i));
    }
    let tan_i = si / ci;
    let nu = solve_kepler(oe.mean_anomaly, oe.e)?;
    let e = oe.e;
    let eta = oe.eta();
    let theta = oe.argp + nu;
    let (snu, cnu) = nu.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (sw, cw) = oe.argp.sin_cos();
    let denom = 1.0 + e * cnu;

    let mut b = Matrix6x3::<f64>::zeros();
    b[(0, 0)] = 2.0 / eta * e * snu;
    b[(0, 1)] = 2.0 / eta * denom;
    b[(1, 0)] = -2.0 * eta * eta / denom;
    b[(2, 0)] = eta * sth;
    b[(2, 1)] = eta * ((2.0 + e * cnu) * cth + e * cw) / denom;
    b[(2, 2)] = eta * e * sw * sth / (tan_i * denom);
    b[(3, 0)] = -eta * cth;
    b[(3, 1)] = eta * ((2.0 + e * cnu) * sth + e * sw) / denom;
    b[(3, 2)] = -eta * e * cw * sth / (tan_i * denom);
    b[(4, 2)] = eta * cth / denom;
    b[(5, 2)] = eta * sth / denom;

    Ok(ControlMatrix(b * (oe.a / k.mu).sqrt()))
}

/// `Γ(t) = a_c Φ(t, t_f) B(t)` with the chief propagated from `t_i` to `t`.
pub fn gamma(
    oe_ti: &OrbitElements,
    t_i: f64,
    t: f64,
    t_f: f64,
    k: &PhysicalConstants,
) -> Result<Matrix6x3<f64>, AstroError> {
    if t < t_i || t > t_f {
        return Err(AstroError::TimeOutOfRange { t, t_i, t_f });
    }
    let oe_t = propagate_elements(oe_ti, t - t_i, k);
    let stm = compute_stm(&oe_t, t_f - t, k);
    let b = control_input_matrix(&oe_t, k)?;
    Ok(oe_ti.a * stm.matrix * b.0)
}

/// `Γ` tabulated on `grid`, which must lie inside `[t_i, t_f]`.
pub fn gamma_table(
    oe_ti: &OrbitElements,
    t_i: f64,
    t_f: f64,
    grid: Vec<f64>,
    k: &PhysicalConstants,
) -> Result<GammaTable, ProblemError> {
    GammaTable::from_fn(grid, 6, 3, |t| {
        gamma(oe_ti, t_i, t, t_f, k).map(|g| DMatrix::from_column_slice(6, 3, g.as_slice()))
    })
}

/// `w = a_c (x_f − Φ(t_i, t_f) x_i)`.
pub fn target_pseudostate(
    x_i: &RoeState,
    x_f: &RoeState,
    oe_i: &OrbitElements,
    t_i: f64,
    t_f: f64,
    k: &PhysicalConstants,
) -> Pseudostate {
    let stm = compute_stm(oe_i, t_f - t_i, k);
    Pseudostate(oe_i.a * (x_f.to_vector() - stm.matrix * x_i.to_vector()))
}

/// Index pairs of the structurally nonzero STM entries.
pub const STM_NONZERO: [(usize, usize); 20] = [
    (0, 0),
    (1, 0),
    (1, 1),
    (1, 2),
    (1, 3),
    (1, 4),
    (2, 0),
    (2, 2),
    (2, 3),
    (2, 4),
    (3, 0),
    (3, 2),
    (3, 3),
    (3, 4),
    (4, 4),
    (5, 0),
    (5, 2),
    (5, 3),
    (5, 4),
    (5, 5),
];

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table2() -> OrbitElements {
        OrbitElements::from_km_deg(25000.0, 0.7, 40.0, 358.0, 0.0, 180.0).unwrap()
    }

    fn forward_kepler(nu: f64, e: f64) -> f64 {
        // Independent route: E from tan(ν/2) relation, then M = E − e sin E.
        let ea = 2.0 * (((1.0 - e) / (1.0 + e)).sqrt() * (nu / 2.0).tan()).atan();
        ea - e * ea.sin()
    }

    #[test]
    fn kepler_symmetry_points() {
        assert_eq!(solve_kepler(0.0, 0.7).unwrap(), 0.0);
        assert_relative_eq!(solve_kepler(PI, 0.7).unwrap(), PI, epsilon = 1e-14);
    }

    #[test]
    fn kepler_round_trip() {
        let nu = solve_kepler(1.0, 0.3).unwrap();
        assert!((forward_kepler(nu, 0.3) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn kepler_rejects_hyperbolic() {
        assert!(solve_kepler(1.0, 1.0).is_err());
        assert!(solve_kepler(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn kepler_keeps_revolution() {
        let nu = solve_kepler(1.0 + 4.0 * PI, 0.3).unwrap();
        let base = solve_kepler(1.0, 0.3).unwrap();
        assert_relative_eq!(nu, base + 4.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn elements_validation() {
        assert!(OrbitElements::new(-1.0, 0.1, 0.5, 0.0, 0.0, 0.0).is_err());
        assert!(OrbitElements::new(7e6, 1.0, 0.5, 0.0, 0.0, 0.0).is_err());
        assert!(OrbitElements::new(7e6, 0.1, 3.5, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn propagation_zero_interval() {
        let oe = table2();
        assert_eq!(propagate_elements(&oe, 0.0, &PhysicalConstants::default()), oe);
    }

    #[test]
    fn propagation_one_orbit_matches_rates() {
        let k = PhysicalConstants::default();
        let oe = table2();
        let period = oe.period(&k);
        let out = propagate_elements(&oe, period, &k);
        assert_eq!((out.a, out.e, out.i), (oe.a, oe.e, oe.i));
        // Independent evaluation of the mean anomaly rate.
        let eta = (1.0f64 - 0.49).sqrt();
        let ci = 40f64.to_radians().cos();
        let j2_term =
            3.0 * k.j2 * k.r_earth.powi(2) * k.mu.sqrt() / (4.0 * oe.a.powf(3.5) * eta.powi(3)) * (3.0 * ci * ci - 1.0);
        let expected = TAU * (1.0 + j2_term / oe.mean_motion(&k));
        assert_relative_eq!(out.mean_anomaly - oe.mean_anomaly, expected, max_relative = 1e-12);
        let raan_rate = -3.0 * k.j2 * k.r_earth.powi(2) * k.mu.sqrt() / (2.0 * oe.a.powf(3.5) * eta.powi(4)) * ci;
        assert_relative_eq!(out.raan - oe.raan, raan_rate * period, max_relative = 1e-12);
    }

    #[test]
    fn propagation_keplerian_limit() {
        let k = PhysicalConstants::default().keplerian();
        let oe = table2();
        let out = propagate_elements(&oe, 1234.5, &k);
        assert_eq!(out.raan, oe.raan);
        assert_eq!(out.argp, oe.argp);
        assert_relative_eq!(
            out.mean_anomaly - oe.mean_anomaly,
            (k.mu / oe.a.powi(3)).sqrt() * 1234.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn stm_identity_at_zero() {
        let stm = compute_stm(&table2(), 0.0, &PhysicalConstants::default());
        assert_eq!(stm.matrix, Matrix6::identity());
    }

    #[test]
    fn stm_keplerian_reduction() {
        let k = PhysicalConstants::default().keplerian();
        let oe = table2();
        let dt = 5000.0;
        let stm = compute_stm(&oe, dt, &k).matrix;
        let mut expected = Matrix6::identity();
        expected[(1, 0)] = -1.5 * (k.mu / oe.a.powi(3)).sqrt() * dt;
        assert_eq!(stm, expected);
    }

    #[test]
    fn stm_structural_zeros() {
        let stm = compute_stm(&table2(), 4321.0, &PhysicalConstants::default()).matrix;
        for r in 0..6 {
            for c in 0..6 {
                if !STM_NONZERO.contains(&(r, c)) {
                    assert_eq!(stm[(r, c)], 0.0, "entry ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn control_matrix_circular() {
        let k = PhysicalConstants::default();
        let oe = OrbitElements::new(7e6, 0.0, 0.9, 0.0, 0.0, 0.0).unwrap();
        let b = control_input_matrix(&oe, &k).unwrap().0;
        let s = (oe.a / k.mu).sqrt();
        assert_relative_eq!(b[(1, 0)], -2.0 * s, max_relative = 1e-14);
        assert_eq!(b[(0, 0)], 0.0);
        assert_relative_eq!(b[(0, 1)], 2.0 * s, max_relative = 1e-14);
    }

    #[test]
    fn control_matrix_apogee() {
        let k = PhysicalConstants::default();
        let oe = table2();
        let b = control_input_matrix(&oe, &k).unwrap().0;
        let s = (oe.a / k.mu).sqrt();
        let eta2 = 1.0 - 0.49;
        assert_relative_eq!(b[(1, 0)], -2.0 * eta2 * s / (1.0 - 0.7), max_relative = 1e-12);
    }

    #[test]
    fn control_matrix_perigee_apogee_ratio() {
        let k = PhysicalConstants::default();
        let apo = table2();
        let peri = OrbitElements {
            mean_anomaly: 0.0,
            ..apo
        };
        let b_apo = control_input_matrix(&apo, &k).unwrap().0;
        let b_peri = control_input_matrix(&peri, &k).unwrap().0;
        assert_relative_eq!(b_peri[(0, 1)] / b_apo[(0, 1)], 1.7 / 0.3, max_relative = 1e-12);
    }

    #[test]
    fn control_matrix_rejects_equatorial() {
        let oe = OrbitElements::new(7e6, 0.01, 0.0, 0.0, 0.0, 0.3).unwrap();
        assert!(matches!(
            control_input_matrix(&oe, &PhysicalConstants::default()),
            Err(AstroError::EquatorialChief(_))
        ));
    }

    #[test]
    fn gamma_at_final_time_is_scaled_b() {
        let k = PhysicalConstants::default();
        let oe = table2();
        let tf = 117990.0;
        let g = gamma(&oe, 0.0, tf, tf, &k).unwrap();
        let b = control_input_matrix(&propagate_elements(&oe, tf, &k), &k).unwrap().0;
        assert_relative_eq!(g, oe.a * b, max_relative = 1e-14);
        assert!(gamma(&oe, 0.0, tf + 1.0, tf, &k).is_err());
    }

    #[test]
    fn gamma_column_continuity() {
        // Near perigee the RTN frame turns at n(1+e)²/η³ ≈ 1.3e-3 rad/s, so
        // the check is Lipschitz-style: small jumps that halve with the step.
        let k = PhysicalConstants::default();
        let oe = table2();
        let tf = 117990.0;
        let max_jump = |step: f64| {
            let steps = (tf / step) as usize;
            let norms: Vec<[f64; 3]> = (0..=steps)
                .map(|i| {
                    let g = gamma(&oe, 0.0, i as f64 * step, tf, &k).unwrap();
                    [g.column(0).norm(), g.column(1).norm(), g.column(2).norm()]
                })
                .collect();
            let mut worst = 0.0f64;
            for c in 0..3 {
                let scale = norms.iter().map(|n| n[c]).fold(0.0, f64::max);
                for w in norms.windows(2) {
                    worst = worst.max((w[1][c] - w[0][c]).abs() / scale);
                }
            }
            worst
        };
        let one = max_jump(1.0);
        let half = max_jump(0.5);
        assert!(one < 2e-3, "1 s jump {one}");
        assert!(half < 0.6 * one, "0.5 s jump {half} vs 1 s jump {one}");
    }

    #[test]
    fn cross_track_impulse_at_node() {
        let k = PhysicalConstants::default();
        // θ = ω + ν = 0 at perigee with ω = 0.
        let oe = OrbitElements::new(8e6, 0.1, 0.8, 0.2, 0.0, 0.0).unwrap();
        let b = control_input_matrix(&oe, &k).unwrap().0;
        assert_eq!(b[(5, 2)], 0.0);
        let g = gamma(&oe, 0.0, 0.0, 0.0, &k).unwrap();
        assert_eq!(g[(5, 2)], 0.0);
    }

    #[test]
    fn pseudostate_homogeneous_and_drift() {
        let k = PhysicalConstants::default();
        let oe = table2();
        let xf = RoeState {
            da: 2e-6,
            dlambda: 2e-4,
            dex: 4e-6,
            dey: 4e-6,
            dix: 0.0,
            diy: 1.6e-5,
        };
        let w = target_pseudostate(&RoeState::default(), &xf, &oe, 0.0, 117990.0, &k);
        assert_relative_eq!(w.0, oe.a * xf.to_vector(), max_relative = 1e-15);
        assert_relative_eq!(
            w.0,
            Vector6::new(50.0, 5000.0, 100.0, 100.0, 0.0, 400.0),
            max_relative = 1e-12
        );

        let xi = xf;
        let phi = compute_stm(&oe, 117990.0, &k).matrix;
        let drifted = RoeState::from_vector(&(phi * xi.to_vector()));
        let w0 = target_pseudostate(&xi, &drifted, &oe, 0.0, 117990.0, &k);
        assert!(w0.0.norm() < 1e-9);
    }

    #[test]
    fn roe_between_identical_is_zero() {
        let oe = table2();
        assert_eq!(RoeState::between(&oe, &oe), RoeState::default());
    }
}
