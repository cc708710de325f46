//! Full singular value decomposition of small dense matrices.
//!
//! One-sided (Hestenes) Jacobi on the taller orientation of the input, followed
//! by completion of the left basis to a square orthogonal matrix. The matrices
//! handled here are desk scale, so the quadratic sweep cost is irrelevant and
//! Jacobi's high relative accuracy on small singular values is worth having.

use nalgebra::{DMatrix, DVector};

use crate::error::{DmfError, Result};

const MAX_SWEEPS: usize = 80;

/// `a = u * diag(values) * v^T` with `u` (m x m) and `v` (n x n) orthogonal and
/// `values` of length `min(m, n)`, sorted nonincreasing.
#[derive(Clone, Debug)]
pub struct FullSvd {
    pub u: DMatrix<f64>,
    pub values: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn full_svd(a: &DMatrix<f64>) -> Result<FullSvd> {
    if !a.iter().all(|x| x.is_finite()) {
        return Err(DmfError::NumericFailure(
            "matrix contains non-finite entries".into(),
        ));
    }
    let (m, n) = a.shape();
    let mut out = if m >= n {
        tall_svd(a)?
    } else {
        let t = tall_svd(&a.transpose())?;
        FullSvd {
            u: t.v,
            values: t.values,
            v: t.u,
        }
    };
    fix_signs(&mut out);
    Ok(out)
}

/// Jacobi for m >= n. Returns full u (m x m), v (n x n).
fn tall_svd(a: &DMatrix<f64>) -> Result<FullSvd> {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;
    // columns below this squared norm are numerically zero and left alone
    let floor = (eps * a.norm()).powi(2);

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || alpha <= floor || beta <= floor || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(DmfError::NumericFailure(format!(
            "Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let top = values.first().copied().unwrap_or(0.0);
    let cutoff = top * (m.max(n) as f64) * eps;

    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    let mut left: Vec<DVector<f64>> = Vec::with_capacity(m);
    for (k, &j) in order.iter().enumerate() {
        v_sorted.set_column(k, &v.column(j));
        if values[k] > cutoff && values[k] > 0.0 {
            left.push(w.column(j) / values[k]);
        }
    }
    let u = complete_basis(m, left);
    Ok(FullSvd {
        u,
        values,
        v: v_sorted,
    })
}

fn rotate_columns(mat: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..mat.nrows() {
        let a = mat[(i, p)];
        let b = mat[(i, q)];
        mat[(i, p)] = c * a - s * b;
        mat[(i, q)] = s * a + c * b;
    }
}

/// Extends a set of orthonormal vectors to an orthonormal basis of R^m. New
/// directions come from the coordinate axis with the largest residual, so the
/// result is deterministic.
pub fn complete_basis(m: usize, mut cols: Vec<DVector<f64>>) -> DMatrix<f64> {
    while cols.len() < m {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for k in 0..m {
            let mut e = DVector::<f64>::zeros(m);
            e[k] = 1.0;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for c in &cols {
                    let proj = c.dot(&e);
                    e.axpy(-proj, c, 1.0);
                }
            }
            let nrm = e.norm();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b + 1e-12) {
                best = Some((nrm, e));
            }
        }
        let (nrm, e) = best.expect("m > 0 when basis is incomplete");
        cols.push(e / nrm);
    }
    let mut out = DMatrix::<f64>::zeros(m, m);
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

fn largest_entry_negative(col: nalgebra::DVectorView<'_, f64>) -> bool {
    let mut best = 0.0_f64;
    let mut sign_neg = false;
    for &x in col.iter() {
        if x.abs() > best {
            best = x.abs();
            sign_neg = x < 0.0;
        }
    }
    sign_neg
}

// Pairs (u_i, v_i) for i < min(m, n) are flipped together so that the
// largest-magnitude entry of u_i is positive. Trailing basis columns are
// normalized the same way on their own.
fn fix_signs(svd: &mut FullSvd) {
    let k = svd.values.len();
    for i in 0..svd.u.ncols() {
        if largest_entry_negative(svd.u.column(i).as_view()) {
            svd.u.column_mut(i).neg_mut();
            if i < k {
                svd.v.column_mut(i).neg_mut();
            }
        }
    }
    for i in k..svd.v.ncols() {
        if largest_entry_negative(svd.v.column(i).as_view()) {
            svd.v.column_mut(i).neg_mut();
        }
    }
}

/// Orthogonality residual `||Q^T Q - I||_F`.
pub fn orthogonality_residual(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    (q.transpose() * q - DMatrix::<f64>::identity(n, n)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(s: &FullSvd, m: usize, n: usize) -> DMatrix<f64> {
        let mut sig = DMatrix::<f64>::zeros(m, n);
        for (i, &x) in s.values.iter().enumerate() {
            sig[(i, i)] = x;
        }
        &s.u * sig * s.v.transpose()
    }

    #[test]
    fn zero_matrix() {
        let a = DMatrix::<f64>::zeros(3, 3);
        let s = full_svd(&a).unwrap();
        assert_eq!(s.values, vec![0.0; 3]);
        assert!(orthogonality_residual(&s.u) < 1e-15);
        assert!(orthogonality_residual(&s.v) < 1e-15);
    }

    #[test]
    fn wide_and_tall_reconstruct() {
        for &(m, n) in &[(4, 3), (3, 4), (1, 5), (5, 1), (6, 6)] {
            let a = DMatrix::<f64>::from_fn(m, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
            let s = full_svd(&a).unwrap();
            let err = (reconstruct(&s, m, n) - &a).norm();
            assert!(err < 1e-12 * (1.0 + a.norm()), "{m}x{n}: {err}");
            assert!(orthogonality_residual(&s.u) < 1e-13);
            assert!(orthogonality_residual(&s.v) < 1e-13);
            assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn agrees_with_nalgebra_singular_values() {
        let a = DMatrix::<f64>::from_fn(5, 4, |i, j| ((i + 1) as f64).sin() * ((j + 2) as f64).cos() + (i == j) as u8 as f64);
        let ours = full_svd(&a).unwrap();
        let mut theirs: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sign_convention_largest_left_entry_positive() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, -1.0]);
        let s = full_svd(&a).unwrap();
        for i in 0..2 {
            let col = s.u.column(i);
            let idx = col.iamax();
            assert!(col[idx] > 0.0);
        }
        assert!((reconstruct(&s, 2, 2) - a).norm() < 1e-14);
    }

    #[test]
    fn nearly_dependent_columns_converge() {
        let base = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let a = &base * base.transpose() * 1e-3;
        let s = full_svd(&a).unwrap();
        assert!(orthogonality_residual(&s.u) < 1e-13);
    }

    #[test]
    fn rank_deficient() {
        let u = DVector::from_vec(vec![1.0, 2.0, 2.0]) / 3.0;
        let v = DVector::from_vec(vec![0.6, 0.8]);
        let a = &u * v.transpose() * 5.0;
        let s = full_svd(&a).unwrap();
        assert!((s.values[0] - 5.0).abs() < 1e-14);
        assert!(s.values[1].abs() < 1e-14);
        assert!(orthogonality_residual(&s.u) < 1e-14);
    }
}
