//! Linearization about an operating point and exact zero-order-hold
//! discretization.

use nalgebra::{DMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::PlantParams;

/// Minimum level gap required by the `h1 > h3 > h2` ordering.
pub const ORDERING_GAP: f64 = 1e-6;

/// Constant input/output pair the linear model is taken about.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub u0: Vector2<f64>,
    pub y0: Vector3<f64>,
}

impl OperatingPoint {
    pub fn new(u0: Vector2<f64>, y0: Vector3<f64>) -> Result<Self> {
        check_ordering(&y0)?;
        Ok(Self { u0, y0 })
    }
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self {
            u0: Vector2::new(0.35e-4, 0.375e-4),
            y0: Vector3::new(0.40, 0.20, 0.30),
        }
    }
}

/// Serializable form of [`OperatingPoint`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPointSpec {
    pub u0: [f64; 2],
    pub y0: [f64; 3],
}

impl Default for OperatingPointSpec {
    fn default() -> Self {
        let op = OperatingPoint::default();
        Self { u0: [op.u0[0], op.u0[1]], y0: [op.y0[0], op.y0[1], op.y0[2]] }
    }
}

impl TryFrom<OperatingPointSpec> for OperatingPoint {
    type Error = Error;

    fn try_from(s: OperatingPointSpec) -> Result<Self> {
        OperatingPoint::new(Vector2::from(s.u0), Vector3::from(s.y0))
    }
}

fn check_ordering(y0: &Vector3<f64>) -> Result<()> {
    let ok = y0.iter().all(|v| v.is_finite())
        && y0[1] > 0.0
        && y0[0] - y0[2] > ORDERING_GAP
        && y0[2] - y0[1] > ORDERING_GAP;
    if ok {
        Ok(())
    } else {
        Err(Error::Ordering([y0[0], y0[1], y0[2]]))
    }
}

/// `dx/dt = F x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub f: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// `x(k+1) = A_d x(k) + B_d u(k)`, `y(k) = C x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub t_s: f64,
}

impl DiscreteModel {
    pub fn n_states(&self) -> usize {
        self.a_d.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b_d.ncols()
    }
}

/// Analytic Jacobian of the mass balance at `y0`, valid for `h1 > h3 > h2`.
///
/// `C` is the identity: every level is measured.
pub fn jacobian_at(params: &PlantParams, y0: &Vector3<f64>) -> Result<ContinuousModel> {
    check_ordering(y0)?;
    let k = params.orifice_factor();
    // d q_ab / d(h_a - h_b) for each orifice
    let a13 = params.mu13 * k / (2.0 * (y0[0] - y0[2]).sqrt());
    let a32 = params.mu32 * k / (2.0 * (y0[2] - y0[1]).sqrt());
    let a20 = params.mu20 * k / (2.0 * y0[1].sqrt());
    let area = params.tank_area;

    #[rustfmt::skip]
    let f = DMatrix::from_row_slice(3, 3, &[
        -a13, 0.0,        a13,
        0.0,  -a32 - a20, a32,
        a13,  a32,        -a13 - a32,
    ]) / area;

    let mut b = DMatrix::zeros(3, 2);
    b[(0, 0)] = 1.0 / area;
    b[(1, 1)] = 1.0 / area;

    Ok(ContinuousModel { f, b, c: DMatrix::identity(3, 3) })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square(), "expm needs a square matrix");
    let n = m.nrows();
    let norm = m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(squarings);

    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Exact zero-order-hold discretization.
///
/// Uses the block exponential `exp([[F, B], [0, 0]]·t_s) = [[A_d, B_d], [0, I]]`.
pub fn discretize(cm: &ContinuousModel, t_s: f64) -> Result<DiscreteModel> {
    if !(t_s.is_finite() && t_s > 0.0) {
        return Err(Error::InvalidParameter(format!("sampling time must be positive, got {t_s}")));
    }
    let n = cm.f.nrows();
    let m = cm.b.ncols();
    if cm.f.ncols() != n || cm.b.nrows() != n {
        return Err(Error::Dimension(format!(
            "F is {}x{}, B is {}x{}",
            cm.f.nrows(),
            cm.f.ncols(),
            cm.b.nrows(),
            m
        )));
    }
    let mut blk = DMatrix::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(&(&cm.f * t_s));
    blk.view_mut((0, n), (n, m)).copy_from(&(&cm.b * t_s));
    let e = expm(&blk);
    Ok(DiscreteModel {
        a_d: e.view((0, 0), (n, n)).into_owned(),
        b_d: e.view((0, n), (n, m)).into_owned(),
        c: cm.c.clone(),
        t_s,
    })
}

/// Jacobian plus discretization in one call.
pub fn linearize(params: &PlantParams, op: &OperatingPoint, t_s: f64) -> Result<(ContinuousModel, DiscreteModel)> {
    let cm = jacobian_at(params, &op.y0)?;
    let dm = discretize(&cm, t_s)?;
    Ok((cm, dm))
}

/// Absolute levels and flows to deviation variables.
pub fn to_deviation(y_abs: &Vector3<f64>, u_abs: &Vector2<f64>, op: &OperatingPoint) -> (Vector3<f64>, Vector2<f64>) {
    (y_abs - op.y0, u_abs - op.u0)
}

/// Inverse of [`to_deviation`].
pub fn from_deviation(y: &Vector3<f64>, u: &Vector2<f64>, op: &OperatingPoint) -> (Vector3<f64>, Vector2<f64>) {
    (y + op.y0, u + op.u0)
}

/// Pump flows that hold tanks 1 and 2 stationary at `y0`.
///
/// Tank 3 is stationary too only when `q13 = q32` at `y0`.
pub fn balancing_input(params: &PlantParams, y0: &Vector3<f64>) -> Vector2<f64> {
    let (q13, q32, q20) = crate::plant::flows(y0, params);
    Vector2::new(q13, q20 - q32)
}
