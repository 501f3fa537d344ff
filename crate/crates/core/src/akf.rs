//! Kalman filter with adaptive process-noise covariance.
//!
//! The filter runs the usual predict/update recursion on an affine discrete
//! model. After each update it records the post-fit residual `v = y − H x̂` and
//! the state correction `Δx = x̂ − x̂⁺` in fixed-length windows. Once both
//! windows are full, `Q̂` is re-estimated from them and projected into the
//! eigenvalue band `[q⁻, q⁺]`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::DiscreteModel;

/// How `Q̂` is re-estimated once the windows are full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QEstimator {
    /// `Q_α + P_k − F P_{k−1} Fᵀ` with `Q_α` the windowed mean of `Δx Δxᵀ`.
    #[default]
    IncrementWindow,
    /// `K Ĉ_v Kᵀ` with `Ĉ_v` the windowed residual covariance.
    ResidualGain,
    /// Keep `Q` at its initial value (plain Kalman filter).
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AkfConfig {
    /// Window length `Ψ` in samples.
    pub window: usize,
    pub q0: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    /// Eigenvalue band `(q⁻, q⁺)` for `Q̂`.
    pub q_bounds: (f64, f64),
    /// Band `(r⁻, r⁺)` for `R`. Validated only; `R` is not adapted.
    pub r_bounds: (f64, f64),
    pub estimator: QEstimator,
}

impl AkfConfig {
    pub const DEFAULT_WINDOW: usize = 30;
    pub const DEFAULT_Q_BOUNDS: (f64, f64) = (1e-14, 1e-2);

    /// Scalar-times-identity covariances with default window and bounds.
    pub fn isotropic(n: usize, p0: f64, q0: f64, r: f64) -> Self {
        Self {
            window: Self::DEFAULT_WINDOW,
            q0: DMatrix::identity(n, n) * q0,
            r: DMatrix::identity(n, n) * r,
            p0: DMatrix::identity(n, n) * p0,
            q_bounds: Self::DEFAULT_Q_BOUNDS,
            r_bounds: (r, r),
            estimator: QEstimator::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.window < 2 {
            return bad(format!("window must be at least 2, got {}", self.window));
        }
        let (lo, hi) = self.q_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad(format!("q bounds must satisfy 0 < q- <= q+, got {:?}", self.q_bounds));
        }
        let (rlo, rhi) = self.r_bounds;
        if !(rlo.is_finite() && rhi.is_finite() && rlo > 0.0 && rlo <= rhi) {
            return bad(format!("r bounds must satisfy 0 < r- <= r+, got {:?}", self.r_bounds));
        }
        let n = self.p0.nrows();
        if !self.p0.is_square() || self.q0.shape() != (n, n) {
            return Err(Error::Dimension("P0 and Q0 must be square and equal-sized".into()));
        }
        if !self.r.is_square() {
            return Err(Error::Dimension("R must be square".into()));
        }
        if self.p0 != self.p0.transpose() || self.p0.clone().cholesky().is_none() {
            return bad("P0 must be symmetric positive definite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AkfState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    /// Covariance carried into the most recent prediction, `P_{k−1}`.
    pub p_prev: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// Prediction `x̂⁺` of the most recent step.
    pub x_prior: DVector<f64>,
    pub residuals: VecDeque<DVector<f64>>,
    pub increments: VecDeque<DVector<f64>>,
    /// Kalman gain of the most recent update.
    pub gain: DMatrix<f64>,
    pub window: usize,
}

impl AkfState {
    pub fn new(x0: DVector<f64>, cfg: &AkfConfig) -> Result<Self> {
        cfg.validate()?;
        let n = x0.len();
        if cfg.p0.nrows() != n {
            return Err(Error::Dimension(format!("x0 has {n} states, P0 is {}x{}", cfg.p0.nrows(), cfg.p0.ncols())));
        }
        Ok(Self {
            x_prior: x0.clone(),
            x: x0,
            p: cfg.p0.clone(),
            p_prev: cfg.p0.clone(),
            q: cfg.q0.clone(),
            residuals: VecDeque::with_capacity(cfg.window),
            increments: VecDeque::with_capacity(cfg.window),
            gain: DMatrix::zeros(n, cfg.r.nrows()),
            window: cfg.window,
        })
    }

    pub fn windows_full(&self) -> bool {
        self.residuals.len() >= self.window && self.increments.len() >= self.window
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn push_window(buf: &mut VecDeque<DVector<f64>>, v: DVector<f64>, cap: usize) {
    while buf.len() >= cap {
        buf.pop_front();
    }
    buf.push_back(v);
}

fn windowed_outer_mean(buf: &VecDeque<DVector<f64>>) -> Result<DMatrix<f64>> {
    let first = buf.front().ok_or(Error::EmptyWindow)?;
    let n = first.len();
    let mut acc = DMatrix::zeros(n, n);
    for v in buf {
        acc += v * v.transpose();
    }
    Ok(acc / buf.len() as f64)
}

/// `∂f_e/∂x` for `f_e(x, u) = A_d x + B_d u`, which is just `A_d`.
pub fn transition_jacobian(dm: &DiscreteModel, _x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
    dm.a_d.clone()
}

/// Time update: `x̂⁺ = A_d x̂ + B_d u`, `P⁺ = F P Fᵀ + Q̂`.
pub fn predict(st: &AkfState, dm: &DiscreteModel, u: &DVector<f64>) -> AkfState {
    let f = transition_jacobian(dm, &st.x, u);
    let x = &dm.a_d * &st.x + &dm.b_d * u;
    let p = symmetrize(&(&f * &st.p * f.transpose() + &st.q));
    AkfState { x_prior: x.clone(), x, p, p_prev: st.p.clone(), ..st.clone() }
}

/// Measurement update on the predicted state held in `st`.
///
/// The residual pushed into the window is the post-fit `y − H x̂`, not the
/// innovation `y − H x̂⁺`.
pub fn update(st: &AkfState, y: &DVector<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<AkfState> {
    let n = st.x.len();
    let s = h * &st.p * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularInnovation);
    }
    let gain = &st.p * h.transpose() * s_inv;
    let x_prior = st.x.clone();
    let x = &x_prior + &gain * (y - h * &x_prior);
    let p = symmetrize(&((DMatrix::identity(n, n) - &gain * h) * &st.p));

    let mut next = AkfState { x, p, gain, x_prior, ..st.clone() };
    let v = y - h * &next.x;
    let dx = &next.x - &next.x_prior;
    push_window(&mut next.residuals, v, next.window);
    push_window(&mut next.increments, dx, next.window);
    Ok(next)
}

/// `Ĉ_v`, the mean of `v vᵀ` over the residual window.
pub fn residual_covariance(st: &AkfState) -> Result<DMatrix<f64>> {
    windowed_outer_mean(&st.residuals)
}

/// Project a symmetric matrix onto the eigenvalue band `[lo, hi]`.
pub fn clamp_eigenvalues(m: &DMatrix<f64>, lo: f64, hi: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|l| if l.is_finite() { l.clamp(lo, hi) } else { hi });
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

/// Re-estimate `Q̂` from the windows; a no-op until both hold `Ψ` samples.
pub fn adapt_q(st: &AkfState, cfg: &AkfConfig, f: &DMatrix<f64>) -> Result<AkfState> {
    if cfg.estimator == QEstimator::Fixed || !st.windows_full() {
        return Ok(st.clone());
    }
    let candidate = match cfg.estimator {
        QEstimator::IncrementWindow => {
            let q_alpha = windowed_outer_mean(&st.increments)?;
            q_alpha + &st.p - f * &st.p_prev * f.transpose()
        }
        QEstimator::ResidualGain => {
            let cv = residual_covariance(st)?;
            &st.gain * cv * st.gain.transpose()
        }
        QEstimator::Fixed => unreachable!(),
    };
    let (lo, hi) = cfg.q_bounds;
    Ok(AkfState { q: clamp_eigenvalues(&candidate, lo, hi), ..st.clone() })
}

/// One full filter cycle: predict, update, then adapt `Q̂` when the windows are full.
pub fn akf_step(
    st: &AkfState,
    dm: &DiscreteModel,
    u: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &AkfConfig,
) -> Result<AkfState> {
    let f = transition_jacobian(dm, &st.x, u);
    let predicted = predict(st, dm, u);
    let updated = update(&predicted, y, &dm.c, &cfg.r)?;
    adapt_q(&updated, cfg, &f)
}
