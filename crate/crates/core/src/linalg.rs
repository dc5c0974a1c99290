//! Small dense linear-algebra helpers shared by the policy and verification code.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used by every pseudoinverse in the crate.
pub const SVD_CUTOFF: f64 = 1e-8;

/// Moore-Penrose solve `M† f` with singular values below `cutoff * σ_max` dropped.
///
/// Returns the solution together with the smallest retained singular value
/// and the largest singular value.
pub fn pinv_solve(m: &DMatrix<f64>, f: &DVector<f64>, cutoff: f64) -> (DVector<f64>, f64, f64) {
    let n = m.ncols();
    if n == 0 {
        return (DVector::zeros(0), 0.0, 0.0);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let sigma_max = svd.singular_values.max();
    if sigma_max <= 0.0 || !sigma_max.is_finite() {
        return (DVector::zeros(n), 0.0, sigma_max);
    }
    let threshold = cutoff * sigma_max;
    let ut_f = u.transpose() * f;
    let mut scaled = DVector::zeros(svd.singular_values.len());
    let mut min_kept = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > threshold {
            scaled[i] = ut_f[i] / s;
            min_kept = min_kept.min(s);
        }
    }
    (v_t.transpose() * scaled, min_kept, sigma_max)
}

/// Numerical rank and smallest singular value of `m` under the relative cutoff.
pub fn rank_and_min_singular(m: &DMatrix<f64>, cutoff: f64) -> (usize, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0, 0.0);
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let rank = sv.iter().filter(|&&s| s > cutoff * max).count();
    // Rank deficiency in a tall matrix shows up as missing singular values.
    let min = if sv.len() < m.ncols() { 0.0 } else { sv.min() };
    (rank, min)
}

/// Solve `m x = b` for a symmetric positive-definite `m`, falling back to the
/// pseudoinverse when Cholesky fails.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    match m.clone().cholesky() {
        Some(chol) => chol.solve(b),
        None => pinv_solve(m, b, SVD_CUTOFF).0,
    }
}

pub fn is_finite_matrix(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn is_finite_vector(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Relative Frobenius asymmetry ‖M − Mᵀ‖ / max(‖M‖, 1e-300).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
