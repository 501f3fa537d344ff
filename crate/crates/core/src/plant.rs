//! Nonlinear three-tank dynamics.
//!
//! Tanks 1 and 2 are fed by pumps, tank 3 sits between them, and tank 2 drains to
//! the reservoir. Inter-tank flows follow Torricelli's law. All functions here are
//! pure; the state is a small `Copy` value.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Head differences below this are treated as exactly zero.
pub const HEAD_DEADBAND: f64 = 1e-12;

/// Largest RK4 step used when advancing the plant over a control period.
pub const MAX_SUBSTEP: f64 = 0.1;

/// Physical constants of the rig, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Cross-sectional area of each tank, m².
    pub tank_area: f64,
    /// Cross-sectional area of the connecting pipes and the drain, m².
    pub pipe_area: f64,
    pub mu13: f64,
    pub mu32: f64,
    pub mu20: f64,
    /// m/s².
    pub gravity: f64,
    /// Peak pump flow, m³/s.
    pub q_max: f64,
    /// Tank height, m.
    pub h_max: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            tank_area: 0.0154,
            pipe_area: 5e-5,
            mu13: 0.5,
            mu32: 0.5,
            mu20: 0.675,
            gravity: 9.81,
            q_max: 1.2e-4,
            h_max: 0.62,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tank_area", self.tank_area),
            ("pipe_area", self.pipe_area),
            ("gravity", self.gravity),
            ("q_max", self.q_max),
            ("h_max", self.h_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("mu13", self.mu13), ("mu32", self.mu32), ("mu20", self.mu20)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }

    /// `Φ·√(2g)`, the factor shared by every orifice flow.
    pub fn orifice_factor(&self) -> f64 {
        self.pipe_area * (2.0 * self.gravity).sqrt()
    }
}

/// Liquid levels `(h1, h2, h3)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub h: Vector3<f64>,
}

impl PlantState {
    pub fn new(h1: f64, h2: f64, h3: f64) -> Self {
        Self { h: Vector3::new(h1, h2, h3) }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
    }

    /// Levels clamped into `[0, h_max]`.
    pub fn clamped(&self, params: &PlantParams) -> Self {
        Self { h: self.h.map(|v| v.clamp(0.0, params.h_max)) }
    }
}

impl From<Vector3<f64>> for PlantState {
    fn from(h: Vector3<f64>) -> Self {
        Self { h }
    }
}

/// Pump flows `(q1, q2)` in m³/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpInput {
    pub q: Vector2<f64>,
}

impl PumpInput {
    pub fn new(q1: f64, q2: f64) -> Self {
        Self { q: Vector2::new(q1, q2) }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    /// Clamp each pump into `[0, q_max]`; the flags report which ones saturated.
    pub fn clamped(&self, params: &PlantParams) -> (Self, [bool; 2]) {
        let mut sat = [false; 2];
        let q = Vector2::from_fn(|i, _| {
            let v = self.q[i];
            let c = v.clamp(0.0, params.q_max);
            sat[i] = c != v;
            c
        });
        (Self { q }, sat)
    }
}

impl From<Vector2<f64>> for PumpInput {
    fn from(q: Vector2<f64>) -> Self {
        Self { q }
    }
}

/// Torricelli flow from tank `a` to tank `b` through an orifice with coefficient `mu`.
pub fn flow_between(h_a: f64, h_b: f64, mu: f64, params: &PlantParams) -> f64 {
    let dh = h_a - h_b;
    if dh.abs() < HEAD_DEADBAND {
        return 0.0;
    }
    mu * params.orifice_factor() * dh.signum() * dh.abs().sqrt()
}

/// Drain flow out of tank 2.
pub fn outflow(h2: f64, params: &PlantParams) -> f64 {
    params.mu20 * params.orifice_factor() * h2.max(0.0).sqrt()
}

/// Individual flows `(q13, q32, q20)` at the given levels.
pub fn flows(h: &Vector3<f64>, params: &PlantParams) -> (f64, f64, f64) {
    (
        flow_between(h[0], h[2], params.mu13, params),
        flow_between(h[2], h[1], params.mu32, params),
        outflow(h[1], params),
    )
}

fn level_rates(h: &Vector3<f64>, q: &Vector2<f64>, params: &PlantParams) -> Vector3<f64> {
    let (q13, q32, q20) = flows(h, params);
    Vector3::new(q[0] - q13, q[1] + q32 - q20, q13 - q32) / params.tank_area
}

/// Mass-balance right-hand side `dh/dt`.
pub fn derivatives(state: &PlantState, u: &PumpInput, params: &PlantParams) -> Vector3<f64> {
    level_rates(&state.h, &u.q, params)
}

/// One classical RK4 step of `dx/dt = f(x)`.
pub fn rk4<F>(x: &Vector3<f64>, dt: f64, mut f: F) -> Vector3<f64>
where
    F: FnMut(&Vector3<f64>) -> Vector3<f64>,
{
    let k1 = f(x);
    let k2 = f(&(x + k1 * (dt / 2.0)));
    let k3 = f(&(x + k2 * (dt / 2.0)));
    let k4 = f(&(x + k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn check_step(state: &PlantState, dt: f64) -> Result<()> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter(format!("step size must be positive, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("plant state"));
    }
    Ok(())
}

/// Single RK4 step with the pump input held constant.
///
/// The input is clamped to `[0, q_max]` before integration and the levels to
/// `[0, h_max]` afterwards.
pub fn step(state: &PlantState, u: &PumpInput, dt: f64, params: &PlantParams) -> Result<PlantState> {
    check_step(state, dt)?;
    let (u, _) = u.clamped(params);
    let h = rk4(&state.h, dt, |h| level_rates(h, &u.q, params));
    Ok(PlantState { h }.clamped(params))
}

/// Result of advancing the plant across one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub state: PlantState,
    /// Set when any pump hit a limit during the period.
    pub saturated: [bool; 2],
}

fn substeps(period: f64) -> (usize, f64) {
    let n = (period / MAX_SUBSTEP).ceil().max(1.0) as usize;
    (n, period / n as f64)
}

/// Hold `u` for `period` seconds, sub-stepping with RK4 at most [`MAX_SUBSTEP`].
pub fn advance(state: &PlantState, u: &PumpInput, period: f64, params: &PlantParams) -> Result<Advance> {
    check_step(state, period)?;
    let (u_c, saturated) = u.clamped(params);
    let (n, dt) = substeps(period);
    let mut s = *state;
    for _ in 0..n {
        s = step(&s, &u_c, dt, params)?;
    }
    Ok(Advance { state: s, saturated })
}

/// Advance under a continuous state-feedback law.
///
/// `law` is evaluated at every RK4 stage and its output clamped to the pump
/// limits, so the closed loop is integrated as a continuous-time system.
pub fn advance_with_feedback<L>(
    state: &PlantState,
    period: f64,
    params: &PlantParams,
    mut law: L,
) -> Result<Advance>
where
    L: FnMut(&Vector3<f64>) -> Vector2<f64>,
{
    check_step(state, period)?;
    let (n, dt) = substeps(period);
    let mut saturated = [false; 2];
    let mut h = state.h;
    for _ in 0..n {
        let next = rk4(&h, dt, |x| {
            let (u, sat) = PumpInput::from(law(x)).clamped(params);
            saturated[0] |= sat[0];
            saturated[1] |= sat[1];
            level_rates(x, &u.q, params)
        });
        h = PlantState { h: next }.clamped(params).h;
        if !h.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("plant state"));
        }
    }
    Ok(Advance { state: PlantState { h }, saturated })
}
