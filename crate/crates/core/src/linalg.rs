//! Complex dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Matrix of i.i.d. circular complex Gaussian entries, drawn column by column.
pub fn complex_normal_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_normal(rng, variance);
        }
    }
    m
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted descending.
pub fn hermitian_eig_desc(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitian_part(a).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// The `m` dominant eigenpairs of a Hermitian matrix.
pub fn dominant_eigvecs(a: &CMat, m: usize) -> (Vec<f64>, CMat) {
    let (values, vectors) = hermitian_eig_desc(a);
    let m = m.min(values.len());
    (values[..m].to_vec(), vectors.columns(0, m).into_owned())
}

/// Thin SVD `a = U diag(s) Vᴴ` with singular values sorted descending.
///
/// nalgebra's complex SVD occasionally returns a factorization that does not
/// reproduce `a` (seen on low-rank clustered channels). Such results are
/// replaced by one built from the Hermitian eigendecomposition of
/// `[0 a; aᴴ 0]`.
pub fn svd_sorted(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = CMat::from_fn(u.nrows(), r, |i, c| u[(i, order[c])]);
    let v_sorted = CMat::from_fn(v_t.ncols(), r, |i, c| v_t[(order[c], i)].conj());
    if svd_residual(a, &u_sorted, &s, &v_sorted) <= 1e-10 * a.norm().max(f64::MIN_POSITIVE) {
        (u_sorted, s, v_sorted)
    } else {
        svd_via_eig(a)
    }
}

fn svd_residual(a: &CMat, u: &CMat, s: &[f64], v: &CMat) -> f64 {
    let mut us = u.clone();
    for (mut col, &sigma) in us.column_iter_mut().zip(s) {
        col.scale_mut(sigma);
    }
    (us * v.adjoint() - a).norm()
}

fn svd_via_eig(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (m, n) = a.shape();
    let r = m.min(n);
    let mut aug = CMat::zeros(m + n, m + n);
    aug.view_mut((0, m), (m, n)).copy_from(a);
    aug.view_mut((m, 0), (n, m)).copy_from(&a.adjoint());
    let (values, vectors) = hermitian_eig_desc(&aug);
    let scale = Complex64::new(std::f64::consts::SQRT_2, 0.0);
    let floor = 1e-12 * values[0].max(0.0);
    let k = values[..r].iter().take_while(|&&x| x > floor).count();
    let s: Vec<f64> = (0..r)
        .map(|i| if i < k { values[i] } else { 0.0 })
        .collect();
    let u = vectors.view((0, 0), (m, k)) * scale;
    let v = vectors.view((m, 0), (n, k)) * scale;
    (complete_columns(&u, r), s, complete_columns(&v, r))
}

/// Extend `k` orthonormal columns to `r` with an orthonormal complement.
fn complete_columns(q: &CMat, r: usize) -> CMat {
    let (rows, k) = q.shape();
    if k >= r {
        return q.columns(0, r).into_owned();
    }
    let mut stacked = CMat::zeros(rows, k + rows);
    stacked.columns_mut(0, k).copy_from(q);
    stacked.columns_mut(k, rows).fill_with_identity();
    let basis = stacked.qr().q();
    let mut out = CMat::zeros(rows, r);
    out.columns_mut(0, k).copy_from(q);
    out.columns_mut(k, r - k)
        .copy_from(&basis.columns(k, r - k));
    out
}

/// Natural log-determinant of a Hermitian positive-definite matrix, `None` if not PD.
pub fn hpd_logdet(a: &CMat) -> Option<f64> {
    let chol = hermitian_part(a).cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += 2.0 * d.ln();
    }
    Some(acc)
}

pub fn rel_frobenius_error(a: &CMat, b: &CMat) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

/// Normalize each column to unit Euclidean norm; zero columns are left untouched.
pub fn normalize_columns(a: &mut CMat) {
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col.unscale_mut(n);
        }
    }
}

/// Largest principal angle (radians) between the column spans of two orthonormal bases.
pub fn max_principal_angle(a: &CMat, b: &CMat) -> f64 {
    let s = (a.adjoint() * b).singular_values();
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    smin.clamp(-1.0, 1.0).acos()
}
