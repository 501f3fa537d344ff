//! Integral-action tracking control for the linearized plant.
//!
//! The first `p` outputs (`p` = number of inputs) are tracked. Their integrated
//! error `z` is appended to the state and a static gain `K = [K1 K2]` is placed
//! on the augmented pair so that `u = -K1 x - K2 z`.

use log::warn;
use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linmodel::DiscreteModel;

pub type Complex64 = Complex<f64>;

/// Integrator-augmented discrete model.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub b_r: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    pub t_s: f64,
    /// Plant states `n`; the augmented state has `n + p` entries.
    pub n_states: usize,
    /// Tracked outputs `p`.
    pub n_tracked: usize,
}

/// Augment `dm` with one integrator per tracked output.
pub fn augment(dm: &DiscreteModel) -> Result<AugmentedModel> {
    let n = dm.n_states();
    let m = dm.n_inputs();
    let q = dm.c.nrows();
    let p = m;
    if q < p {
        return Err(Error::Dimension(format!("{q} outputs cannot track {p} references")));
    }
    let c1 = dm.c.rows(0, p);
    let t_s = dm.t_s;

    let mut a_bar = DMatrix::zeros(n + p, n + p);
    a_bar.view_mut((0, 0), (n, n)).copy_from(&dm.a_d);
    a_bar.view_mut((n, 0), (p, n)).copy_from(&(c1 * -t_s));
    a_bar.view_mut((n, n), (p, p)).fill_with_identity();

    let mut b_bar = DMatrix::zeros(n + p, m);
    b_bar.view_mut((0, 0), (n, m)).copy_from(&dm.b_d);

    let mut b_r = DMatrix::zeros(n + p, p);
    b_r.view_mut((n, 0), (p, p)).copy_from(&(DMatrix::<f64>::identity(p, p) * t_s));

    let mut c_bar = DMatrix::zeros(q, n + p);
    c_bar.view_mut((0, 0), (q, n)).copy_from(&dm.c);

    let rank = controllability_rank(&a_bar, &b_bar);
    if rank < n + p {
        return Err(Error::Uncontrollable { rank, n: n + p });
    }
    Ok(AugmentedModel { a_bar, b_bar, b_r, c_bar, t_s, n_states: n, n_tracked: p })
}

/// `[B, AB, ..., A^(n-1) B]`
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Numerical rank of the controllability matrix, each block column normalised.
pub fn controllability_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> usize {
    let mut ctrb = controllability_matrix(a, b);
    for mut col in ctrb.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let sv = ctrb.singular_values();
    let tol = sv.max() * 1e-12 * ctrb.nrows().max(ctrb.ncols()) as f64;
    sv.iter().filter(|&&s| s > tol).count()
}

/// State-feedback gain on the augmented model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingGain {
    pub k: DMatrix<f64>,
    pub n_states: usize,
}

impl TrackingGain {
    pub fn new(k: DMatrix<f64>, n_states: usize) -> Result<Self> {
        if k.ncols() <= n_states {
            return Err(Error::Dimension(format!("gain has {} columns for {n_states} states", k.ncols())));
        }
        Ok(Self { k, n_states })
    }

    /// Feedback on the plant states.
    pub fn k1(&self) -> DMatrix<f64> {
        self.k.columns(0, self.n_states).into_owned()
    }

    /// Feedback on the integrator states.
    pub fn k2(&self) -> DMatrix<f64> {
        self.k.columns(self.n_states, self.k.ncols() - self.n_states).into_owned()
    }
}

/// Gain used by the reference replication runs, placed for
/// `λ = {0.92, 0.97, 0.90, 0.95, 0.94}` at `t_s = 1 s`.
pub fn replication_gain() -> TrackingGain {
    #[rustfmt::skip]
    let k = DMatrix::from_row_slice(2, 5, &[
        21.6, 3.0,  -5.0, -0.95, -0.32,
        2.9,  19.0, -4.0, -0.30, -0.91,
    ]) * 1e-4;
    TrackingGain { k, n_states: 3 }
}

/// Closed-loop eigenvalues requested in the reference design.
pub fn replication_poles() -> Vec<Complex64> {
    [0.92, 0.97, 0.90, 0.95, 0.94].iter().map(|&re| Complex64::new(re, 0.0)).collect()
}

/// Integrated tracking error.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingState {
    pub z: DVector<f64>,
}

impl TrackingState {
    pub fn zeros(p: usize) -> Self {
        Self { z: DVector::zeros(p) }
    }
}

/// `z ← z + t_s (y_r − y1)`
pub fn integrator_step(ts: &TrackingState, y_r: &DVector<f64>, y1: &DVector<f64>, t_s: f64) -> TrackingState {
    TrackingState { z: &ts.z + (y_r - y1) * t_s }
}

/// `u = −K1 x − K2 z` in deviation variables.
pub fn control(gain: &TrackingGain, x: &DVector<f64>, ts: &TrackingState) -> DVector<f64> {
    -(gain.k1() * x) - gain.k2() * &ts.z
}

/// `Ā − B̄ K`
pub fn closed_loop_matrix(am: &AugmentedModel, gain: &TrackingGain) -> DMatrix<f64> {
    &am.a_bar - &am.b_bar * &gain.k
}

/// Eigenvalues of `Ā − B̄ K`.
pub fn closed_loop_poles(am: &AugmentedModel, gain: &TrackingGain) -> Vec<Complex64> {
    eigenvalues(&closed_loop_matrix(am, gain))
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest pairwise distance under the best one-to-one matching of two
/// multisets of complex numbers. Exhaustive over permutations, so keep `n` small.
pub fn spectrum_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    fn search(a: &[Complex64], b: &[Complex64], used: &mut Vec<bool>, i: usize, worst: f64, best: &mut f64) {
        if worst >= *best {
            return;
        }
        if i == a.len() {
            *best = worst;
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                search(a, b, used, i + 1, worst.max((a[i] - b[j]).norm()), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    search(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best
}

/// Place the eigenvalues of `A − B K` at `poles` (eigenstructure assignment).
///
/// For each requested `λ` a column `x` of `X` solves `(A − λI) x = B g` for a
/// chosen parameter column `g`; then `A X − X Λ = B G` and `K = G X⁻¹`.
/// Complex poles must come in conjugate pairs and are handled as real 2×2
/// blocks. A pole that coincides with an open-loop eigenvalue takes the
/// corresponding eigenvector with `g = 0`.
pub fn place(a: &DMatrix<f64>, b: &DMatrix<f64>, poles: &[Complex64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n {
        return Err(Error::Dimension(format!("A is {}x{}, B is {}x{}", a.nrows(), a.ncols(), b.nrows(), m)));
    }
    if poles.len() != n {
        return Err(Error::PolePlacement(format!("need {n} poles, got {}", poles.len())));
    }
    let rank = controllability_rank(a, b);
    if rank < n {
        return Err(Error::Uncontrollable { rank, n });
    }
    let ordered = pair_conjugates(poles)?;
    for p in &ordered {
        if p.norm() >= 1.0 {
            warn!("requested pole {p} is outside the open unit disk");
        }
    }

    let mut last_err = Error::PolePlacement("no attempt made".into());
    for attempt in 0..12 {
        let g = parameter_matrix(m, n, attempt);
        let mut best: Option<DMatrix<f64>> = None;
        for order in pole_orders(&ordered) {
            match assign(a, b, &order, &g) {
                Ok(k) if best.as_ref().is_none_or(|bk| k.norm() < bk.norm()) => best = Some(k),
                Ok(_) => {}
                Err(e) => last_err = e,
            }
        }
        if let Some(k) = best {
            return Ok(k);
        }
    }
    Err(last_err)
}

const MAX_PERMUTED_ENTRIES: usize = 7;

/// Distinct orderings of the pole groups (conjugate pairs stay together).
/// Each ordering pairs the poles differently with the columns of `G`; the
/// smallest resulting gain is kept. Large requests use the given order only.
fn pole_orders(ordered: &[Complex64]) -> Vec<Vec<Complex64>> {
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    let mut i = 0;
    while i < ordered.len() {
        let w = if ordered[i].im == 0.0 { 1 } else { 2 };
        groups.push(ordered[i..i + w].to_vec());
        i += w;
    }
    if groups.len() > MAX_PERMUTED_ENTRIES {
        return vec![ordered.to_vec()];
    }
    let mut out: Vec<Vec<Complex64>> = Vec::new();
    let mut idx: Vec<usize> = (0..groups.len()).collect();
    permute(&mut idx, 0, &mut |perm| {
        let order: Vec<Complex64> = perm.iter().flat_map(|&g| groups[g].iter().copied()).collect();
        if !out.contains(&order) {
            out.push(order);
        }
    });
    out
}

fn permute(idx: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == idx.len() {
        visit(idx);
        return;
    }
    for i in k..idx.len() {
        idx.swap(k, i);
        permute(idx, k + 1, visit);
        idx.swap(k, i);
    }
}

/// [`place`] on the augmented model.
pub fn place_poles(am: &AugmentedModel, poles: &[Complex64]) -> Result<TrackingGain> {
    let k = place(&am.a_bar, &am.b_bar, poles)?;
    Ok(TrackingGain { k, n_states: am.n_states })
}

enum PoleEntry {
    Real(f64),
    /// Upper-half-plane member of a conjugate pair.
    Pair(Complex64),
}

const CONJ_TOL: f64 = 1e-10;

fn pair_conjugates(poles: &[Complex64]) -> Result<Vec<Complex64>> {
    // Output: reals, then each pair as (upper, lower).
    let mut out = Vec::with_capacity(poles.len());
    let mut pending: Vec<Complex64> = Vec::new();
    for &p in poles {
        if !(p.re.is_finite() && p.im.is_finite()) {
            return Err(Error::PolePlacement(format!("non-finite pole {p}")));
        }
        if p.im.abs() <= CONJ_TOL {
            out.push(Complex64::new(p.re, 0.0));
        } else if let Some(pos) = pending.iter().position(|q| (q.conj() - p).norm() <= CONJ_TOL) {
            let q = pending.swap_remove(pos);
            let upper = if q.im > 0.0 { q } else { p };
            out.push(upper);
            out.push(upper.conj());
        } else {
            pending.push(p);
        }
    }
    if !pending.is_empty() {
        return Err(Error::PolePlacement("complex poles must come in conjugate pairs".into()));
    }
    Ok(out)
}

fn entries(ordered: &[Complex64]) -> Vec<PoleEntry> {
    let mut v = Vec::new();
    let mut i = 0;
    while i < ordered.len() {
        if ordered[i].im == 0.0 {
            v.push(PoleEntry::Real(ordered[i].re));
            i += 1;
        } else {
            v.push(PoleEntry::Pair(ordered[i]));
            i += 2;
        }
    }
    v
}

/// Columns cycled from the identity, nudged by a deterministic pattern on retries.
fn parameter_matrix(m: usize, n: usize, attempt: usize) -> DMatrix<f64> {
    let mut g = DMatrix::from_fn(m, n, |r, c| if c % m == r { 1.0 } else { 0.0 });
    if attempt > 0 {
        let scale = 0.25 * attempt as f64;
        for (idx, v) in g.iter_mut().enumerate() {
            *v += scale * ((idx as f64 + 1.0) * 1.618_033_988_75 * attempt as f64).sin();
        }
    }
    g
}

fn null_space(mat: &DMatrix<Complex64>, scale: f64) -> Vec<DVector<Complex64>> {
    let n = mat.ncols();
    let svd = mat.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let tol = 1e-9 * scale.max(1.0);
    (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).transpose().map(|c| c.conj()))
        .collect()
}

fn assign(a: &DMatrix<f64>, b: &DMatrix<f64>, ordered: &[Complex64], g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let bc: DMatrix<Complex64> = b.map(|v| Complex64::new(v, 0.0));
    let scale = a.amax();

    let mut x = DMatrix::<f64>::zeros(n, n);
    let mut gg = g.clone();
    let mut col = 0;
    // Eigenvectors already spent for each coincident pole value.
    let mut spent: Vec<(Complex64, usize)> = Vec::new();

    for entry in entries(ordered) {
        let lambda = match entry {
            PoleEntry::Real(re) => Complex64::new(re, 0.0),
            PoleEntry::Pair(c) => c,
        };
        let width = if matches!(entry, PoleEntry::Real(_)) { 1 } else { 2 };
        let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * lambda;
        let null = null_space(&shifted, scale);

        let v: DVector<Complex64> = if !null.is_empty() {
            let used = spent.iter().filter(|(l, _)| (*l - lambda).norm() <= CONJ_TOL).count();
            let Some(vec) = null.get(used) else {
                return Err(Error::PolePlacement(format!(
                    "pole {lambda} repeats an open-loop eigenvalue more often than its geometric multiplicity"
                )));
            };
            spent.push((lambda, used));
            for k in 0..width {
                gg.column_mut(col + k).fill(0.0);
            }
            vec.clone()
        } else {
            let gcol: DVector<Complex64> = if width == 1 {
                g.column(col).map(|v| Complex64::new(v, 0.0))
            } else {
                DVector::from_fn(m, |r, _| Complex64::new(g[(r, col)], g[(r, col + 1)]))
            };
            let rhs = &bc * gcol;
            shifted
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::PolePlacement(format!("A − λI singular at {lambda}")))?
        };

        if width == 1 {
            let re = v.map(|c| c.re);
            x.column_mut(col).copy_from(&re);
        } else {
            x.column_mut(col).copy_from(&v.map(|c| c.re));
            x.column_mut(col + 1).copy_from(&v.map(|c| c.im));
        }
        col += width;
    }

    let sv = x.singular_values();
    if sv.min() <= 1e-10 * sv.max() {
        return Err(Error::PolePlacement("eigenvector matrix is singular".into()));
    }
    let x_inv = x.try_inverse().ok_or_else(|| Error::PolePlacement("eigenvector matrix is singular".into()))?;
    Ok(gg * x_inv)
}
