//! Reference decompositions used as test oracles. Deliberately simple and
//! independent of the library's Gram-matrix kernels.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Returns `(s, u, vt)` with `s` descending, `u` `p×k`, `vt` `k×n`, and
/// `k = min(p, n)`. Columns of `u` (rows of `vt`) belonging to zero singular
/// values are zero.
pub fn jacobi_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let wide = m.nrows() < m.ncols();
    // work on a tall matrix: rotate its columns until they are orthogonal
    let mut a = if wide { m.transpose() } else { m.clone() };
    let k = a.ncols();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let (x, y) = (mat[(r, i)], mat[(r, j)]);
                        mat[(r, i)] = c * x - s * y;
                        mat[(r, j)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..k).map(|c| a.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s: Vec<f64> = order.iter().map(|&c| norms[c]).collect();
    let tiny = s.first().copied().unwrap_or(0.0) * 1e-13;
    let mut left = DMatrix::zeros(a.nrows(), k);
    let mut right = DMatrix::zeros(k, k);
    for (dst, &c) in order.iter().enumerate() {
        if norms[c] > tiny {
            left.set_column(dst, &(a.column(c) / norms[c]));
        }
        right.set_column(dst, &v.column(c));
    }
    // tall input: m = left diag(s) rightᵀ; wide input: mᵀ = left diag(s) rightᵀ
    if wide {
        (s, right, left.transpose())
    } else {
        (s, left, right.transpose())
    }
}

/// Best rank-`k` approximation from [`jacobi_svd`].
pub fn best_rank(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (s, u, vt) = jacobi_svd(m);
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..k.min(s.len()) {
        out += u.column(j) * vt.row(j) * s[j];
    }
    out
}

/// Top-`k` right singular vectors (rows) from [`jacobi_svd`].
pub fn top_right(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (_, _, vt) = jacobi_svd(m);
    vt.rows(0, k).into_owned()
}

/// Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix
/// by cyclic two-sided Jacobi rotations.
pub fn jacobi_eigen(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.nrows();
    let mut a = g.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= 1e-30 * a.norm_squared().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)] == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &v.column(src));
    }
    (values, vectors)
}
