//! Exact input–output linearization with decoupling.
//!
//! The plant is written in control-affine form `ẋ = Δ(x) + Σ ξ_j u_j`,
//! `y_i = H_i(x)`. Lie derivatives of the outputs give each channel's relative
//! degree, the decoupling matrix `Λ(x)` and the drift term `Λ₀(x)`. The feedback
//! `u = Λ⁻¹(ζ − Λ₀)` turns channel `i` into `ϑ_i` integrators driven by `ζ_i`,
//! which an outer proportional loop then stabilises.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::plant::{self, PlantParams, PlantState, PumpInput};

/// Values at or below this magnitude count as zero when probing relative degrees.
pub const ZERO_THRESHOLD: f64 = 1e-12;

const FD_STEP: f64 = 1e-6;

/// A smooth vector field on ℝ³ with its Jacobian.
pub trait VectorField {
    fn value(&self, x: &Vector3<f64>) -> Result<Vector3<f64>>;
    fn jacobian(&self, x: &Vector3<f64>) -> Result<Matrix3<f64>>;
}

/// A smooth scalar function on ℝ³ with its gradient.
pub trait ScalarField {
    fn value(&self, x: &Vector3<f64>) -> Result<f64>;
    fn gradient(&self, x: &Vector3<f64>) -> Result<Vector3<f64>>;
}

/// `x ↦ c` for a fixed `c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantField(pub Vector3<f64>);

impl VectorField for ConstantField {
    fn value(&self, _: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(self.0)
    }

    fn jacobian(&self, _: &Vector3<f64>) -> Result<Matrix3<f64>> {
        Ok(Matrix3::zeros())
    }
}

/// `x ↦ c·x`
#[derive(Debug, Clone, Copy)]
pub struct LinearOutput(pub Vector3<f64>);

impl LinearOutput {
    /// The level of tank `i` (0-based).
    pub fn level(i: usize) -> Self {
        let mut c = Vector3::zeros();
        c[i] = 1.0;
        Self(c)
    }
}

impl ScalarField for LinearOutput {
    fn value(&self, x: &Vector3<f64>) -> Result<f64> {
        Ok(self.0.dot(x))
    }

    fn gradient(&self, _: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(self.0)
    }
}

/// The unforced mass balance `Δ(x) = dh/dt |_{u=0}`.
#[derive(Debug, Clone, Copy)]
pub struct TankDrift {
    pub params: PlantParams,
}

impl TankDrift {
    fn check(&self, x: &Vector3<f64>) -> Result<()> {
        let gap = |a: f64, b: f64| (a - b).abs() > plant::HEAD_DEADBAND;
        if x.iter().all(|v| v.is_finite()) && gap(x[0], x[2]) && gap(x[2], x[1]) && x[1] > plant::HEAD_DEADBAND {
            Ok(())
        } else {
            Err(Error::NonDifferentiable([x[0], x[1], x[2]]))
        }
    }
}

impl VectorField for TankDrift {
    fn value(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(plant::derivatives(&PlantState { h: *x }, &PumpInput::zero(), &self.params))
    }

    fn jacobian(&self, x: &Vector3<f64>) -> Result<Matrix3<f64>> {
        self.check(x)?;
        let p = &self.params;
        let k = p.orifice_factor();
        // d q / d(head difference); positive on either side of the orifice
        let slope = |mu: f64, dh: f64| mu * k / (2.0 * dh.abs().sqrt());
        let a13 = slope(p.mu13, x[0] - x[2]);
        let a32 = slope(p.mu32, x[2] - x[1]);
        let a20 = slope(p.mu20, x[1]);
        #[rustfmt::skip]
        let j = Matrix3::new(
            -a13, 0.0,        a13,
            0.0,  -a32 - a20, a32,
            a13,  a32,        -a13 - a32,
        );
        Ok(j / p.tank_area)
    }
}

/// `L_f H` as a scalar field in its own right, so it can be iterated.
///
/// Its gradient is `J_fᵀ ∇H + ∇²H f`; the Hessian of `H` is taken by central
/// differences of `∇H`, which is exact when `∇H` is constant.
pub struct LieDerivative<'a> {
    pub field: &'a dyn VectorField,
    pub inner: &'a dyn ScalarField,
}

impl ScalarField for LieDerivative<'_> {
    fn value(&self, x: &Vector3<f64>) -> Result<f64> {
        Ok(self.field.value(x)?.dot(&self.inner.gradient(x)?))
    }

    fn gradient(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let f = self.field.value(x)?;
        let grad = self.inner.gradient(x)?;
        let mut hess = Matrix3::zeros();
        for c in 0..3 {
            let mut xp = *x;
            let mut xm = *x;
            xp[c] += FD_STEP;
            xm[c] -= FD_STEP;
            let d = (self.inner.gradient(&xp)? - self.inner.gradient(&xm)?) / (2.0 * FD_STEP);
            hess.set_column(c, &d);
        }
        Ok(self.field.jacobian(x)?.transpose() * grad + hess * f)
    }
}

/// `L_f H(x) = Σ_j f_j(x) ∂H/∂x_j(x)`
pub fn lie_derivative(f: &dyn VectorField, h: &dyn ScalarField, x: &Vector3<f64>) -> Result<f64> {
    LieDerivative { field: f, inner: h }.value(x)
}

/// `L_g L_f^k H(x)`, or `L_f^k H(x)` when `g` is `None`.
pub fn lie_chain(
    f: &dyn VectorField,
    g: Option<&dyn VectorField>,
    h: &dyn ScalarField,
    k: usize,
    x: &Vector3<f64>,
) -> Result<f64> {
    fn go(f: &dyn VectorField, g: Option<&dyn VectorField>, h: &dyn ScalarField, k: usize, x: &Vector3<f64>) -> Result<f64> {
        if k == 0 {
            return match g {
                Some(g) => lie_derivative(g, h, x),
                None => h.value(x),
            };
        }
        let next = LieDerivative { field: f, inner: h };
        go(f, g, &next, k - 1, x)
    }
    go(f, g, h, k, x)
}

/// Control-affine system on ℝ³.
pub struct AffineSystem {
    pub drift: Box<dyn VectorField + Send + Sync>,
    pub input_fields: Vec<ConstantField>,
    pub outputs: Vec<Box<dyn ScalarField + Send + Sync>>,
}

impl AffineSystem {
    /// Drift = unforced mass balance, `ξ_j = e_j / A`, outputs `h1`, `h2`.
    pub fn three_tank(params: PlantParams) -> Self {
        let a = params.tank_area;
        Self {
            drift: Box::new(TankDrift { params }),
            input_fields: vec![
                ConstantField(Vector3::new(1.0 / a, 0.0, 0.0)),
                ConstantField(Vector3::new(0.0, 1.0 / a, 0.0)),
            ],
            outputs: vec![Box::new(LinearOutput::level(0)), Box::new(LinearOutput::level(1))],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.input_fields.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }
}

/// Deterministic probe set: `center` plus the eight corners of a cube of half-width `radius`.
pub fn probe_points(center: &Vector3<f64>, radius: f64) -> Vec<Vector3<f64>> {
    let mut pts = vec![*center];
    for bits in 0..8u8 {
        let s = |b: u8| if bits & (1 << b) != 0 { radius } else { -radius };
        pts.push(center + Vector3::new(s(0), s(1), 0.7 * s(2)));
    }
    pts
}

/// Smallest `l ≥ 1` with `L_{ξ_j} L_Δ^{l-1} H_i ≠ 0` for some `j` at some probe.
pub fn relative_degree(sys: &AffineSystem, output: usize, probes: &[Vector3<f64>]) -> Result<usize> {
    let h = sys
        .outputs
        .get(output)
        .ok_or_else(|| Error::Dimension(format!("no output {output}")))?;
    for l in 1..=3 {
        for x in probes {
            for xi in &sys.input_fields {
                let v = lie_chain(sys.drift.as_ref(), Some(xi), h.as_ref(), l - 1, x)?;
                if v.abs() > ZERO_THRESHOLD {
                    return Ok(l);
                }
            }
        }
    }
    Err(Error::UndefinedRelativeDegree(output))
}

/// `Λ[i][j] = L_{ξ_j} L_Δ^{ϑ_i−1} H_i(x)` and `Λ₀[i] = L_Δ^{ϑ_i} H_i(x)`.
pub fn decoupling_matrices(
    sys: &AffineSystem,
    degrees: &[usize],
    x: &Vector3<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = sys.n_outputs();
    if degrees.len() != m {
        return Err(Error::Dimension(format!("{} degrees for {m} outputs", degrees.len())));
    }
    let mut lam = DMatrix::zeros(m, sys.n_inputs());
    let mut lam0 = DVector::zeros(m);
    for (i, (h, &deg)) in sys.outputs.iter().zip(degrees).enumerate() {
        for (j, xi) in sys.input_fields.iter().enumerate() {
            lam[(i, j)] = lie_chain(sys.drift.as_ref(), Some(xi), h.as_ref(), deg - 1, x)?;
        }
        lam0[i] = lie_chain(sys.drift.as_ref(), None, h.as_ref(), deg, x)?;
    }
    Ok((lam, lam0))
}

/// Numerical rank with a relative singular-value cut-off.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let tol = sv.max() * 1e-10;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Relative degrees, outer-loop gains and input limits of the decoupling controller.
pub struct DecouplingLaw {
    pub system: AffineSystem,
    pub relative_degrees: Vec<usize>,
    /// Outer proportional gains `K_i`, 1/s.
    pub outer_gains: Vec<f64>,
    pub q_max: f64,
}

/// Pump command after saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackCommand {
    pub u: Vector2<f64>,
    pub saturated: [bool; 2],
}

impl DecouplingLaw {
    /// Build the law for the three-tank plant; degrees are probed around `center`.
    pub fn three_tank(params: PlantParams, outer_gains: [f64; 2], center: &Vector3<f64>) -> Result<Self> {
        Self::new(AffineSystem::three_tank(params), outer_gains.to_vec(), params.q_max, &probe_points(center, 0.02))
    }

    pub fn new(system: AffineSystem, outer_gains: Vec<f64>, q_max: f64, probes: &[Vector3<f64>]) -> Result<Self> {
        if system.n_inputs() != 2 || system.n_outputs() != 2 {
            return Err(Error::Dimension("decoupling law needs two inputs and two outputs".into()));
        }
        if outer_gains.len() != 2 || outer_gains.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidParameter(format!("outer gains must be positive, got {outer_gains:?}")));
        }
        let relative_degrees = (0..system.n_outputs())
            .map(|i| relative_degree(&system, i, probes))
            .collect::<Result<Vec<_>>>()?;
        for x in probes {
            let (lam, _) = decoupling_matrices(&system, &relative_degrees, x)?;
            if rank(&lam) < 2 {
                return Err(Error::SingularDecoupling);
            }
        }
        Ok(Self { system, relative_degrees, outer_gains, q_max })
    }

    pub fn matrices(&self, x: &Vector3<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        decoupling_matrices(&self.system, &self.relative_degrees, x)
    }

    /// Unsaturated `u = −Λ⁻¹Λ₀ + Λ⁻¹ζ`.
    pub fn raw_feedback(&self, x: &Vector3<f64>, zeta: &Vector2<f64>) -> Result<Vector2<f64>> {
        let (lam, lam0) = self.matrices(x)?;
        let rhs = DVector::from_column_slice(zeta.as_slice()) - lam0;
        let u = lam.lu().solve(&rhs).ok_or(Error::SingularDecoupling)?;
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularDecoupling);
        }
        Ok(Vector2::new(u[0], u[1]))
    }
}

/// Linearizing feedback clamped to the pump limits.
pub fn linearizing_feedback(law: &DecouplingLaw, x: &Vector3<f64>, zeta: &Vector2<f64>) -> Result<FeedbackCommand> {
    let u = law.raw_feedback(x, zeta)?;
    let mut saturated = [false; 2];
    let u = Vector2::from_fn(|i, _| {
        let c = u[i].clamp(0.0, law.q_max);
        saturated[i] = c != u[i];
        c
    });
    Ok(FeedbackCommand { u, saturated })
}

/// `ζ_i = K_i (y_{r,i} − h_i)`
pub fn outer_loop(law: &DecouplingLaw, y_r: &Vector2<f64>, h: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(law.outer_gains[0] * (y_r[0] - h[0]), law.outer_gains[1] * (y_r[1] - h[1]))
}
