//! Dense kernels for wide matrices (`p` features by `n` words, `p ≪ n`).
//!
//! Singular value decompositions go through the eigendecomposition of the
//! small Gram matrix `M Mᵀ`, which costs `O(p²n + p³)` instead of
//! `O(p n min(p, n))`. Right singular vectors are recovered as
//! `Σ⁻¹ Uᵀ M` and re-orthonormalized, since the Gram route squares the
//! condition number.
//!
//! Ties between equal singular values are resolved by the eigensolver's
//! order; callers must not rely on a particular basis inside a degenerate
//! singular subspace.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{JiveError, Result};

/// Rank-`k` factorization `M ≈ U diag(S) Vt`.
///
/// `u` is `p×k` with orthonormal columns, `vt` is `k×n` with orthonormal
/// rows, and `s` is non-negative and sorted in descending order. The largest
/// entry (by magnitude) of each left singular vector is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub vt: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (mut col, &s) in us.column_iter_mut().zip(self.s.iter()) {
            col *= s;
        }
        us * &self.vt
    }

    /// `diag(S) Vt`: the coordinates of the columns of `M` in the basis `U`.
    pub fn scores(&self) -> DMatrix<f64> {
        let mut scores = self.vt.clone();
        for (mut row, &s) in scores.row_iter_mut().zip(self.s.iter()) {
            row *= s;
        }
        scores
    }

    /// Empty factorization of a `p×n` matrix.
    pub fn empty(p: usize, n: usize) -> Self {
        TruncatedSvd {
            u: DMatrix::zeros(p, 0),
            s: DVector::zeros(0),
            vt: DMatrix::zeros(0, n),
        }
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(JiveError::Numeric {
            iteration: 0,
            message: "matrix contains non-finite entries".into(),
        })
    }
}

fn check_rank(m: &DMatrix<f64>, k: usize, allow_zero: bool) -> Result<()> {
    let max = m.nrows().min(m.ncols());
    if (k == 0 && !allow_zero) || k > max {
        return Err(JiveError::arg(format!(
            "rank {k} out of range for a {}x{} matrix (1..={max})",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `M Mᵀ`.
pub fn gram_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    let mut g = m * mt;
    g.fill_upper_triangle_with_lower_triangle();
    g
}

/// Eigenpairs of a symmetric matrix with eigenvalues in descending order.
pub(crate) fn sym_eigen_desc(g: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Top-`k` eigenvectors of `M Mᵀ` (left singular vectors of `M`), sign-fixed.
fn top_left_vectors(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (_, vectors) = sym_eigen_desc(gram_rows(m));
    let mut u = vectors.columns(0, k).into_owned();
    for mut col in u.column_iter_mut() {
        if col[col.iamax()] < 0.0 {
            col.neg_mut();
        }
    }
    u
}

/// Orthonormalizes the rows of `vt` in place with two Cholesky-QR sweeps.
/// Rows flagged in `null` are first replaced by unit vectors orthogonal to
/// everything else.
fn orthonormalize_rows(vt: &mut DMatrix<f64>, null: &[bool]) {
    let k = vt.nrows();
    if k == 0 {
        return;
    }
    let good: Vec<usize> = (0..k).filter(|&j| !null[j]).collect();
    let mut clean = vt.select_rows(&good);
    for _ in 0..2 {
        if clean.nrows() == 0 {
            break;
        }
        let g = gram_rows(&clean);
        match g.cholesky() {
            Some(ch) => {
                let l = ch.l();
                if let Some(sol) = l.solve_lower_triangular(&clean) {
                    clean = sol;
                }
            }
            None => break,
        }
    }
    for (row, &j) in good.iter().enumerate() {
        vt.set_row(j, &clean.row(row));
    }
    if good.len() == k {
        return;
    }
    complete_rows(vt, null);
}

/// Fills the flagged rows with canonical basis vectors projected off all
/// other rows (modified Gram-Schmidt, two passes).
fn complete_rows(vt: &mut DMatrix<f64>, null: &[bool]) {
    let n = vt.ncols();
    let mut filled: Vec<usize> = (0..vt.nrows()).filter(|&j| !null[j]).collect();
    let mut candidate = 0usize;
    for j in (0..vt.nrows()).filter(|&j| null[j]) {
        loop {
            assert!(candidate < n, "cannot complete an orthonormal basis");
            let mut v = DVector::<f64>::zeros(n);
            v[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for &f in &filled {
                    let row = vt.row(f).transpose();
                    let d = row.dot(&v);
                    v.axpy(-d, &row, 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-6 {
                vt.set_row(j, &(v / norm).transpose());
                filled.push(j);
                break;
            }
        }
    }
}

fn svd_wide(m: &DMatrix<f64>, k: usize) -> TruncatedSvd {
    let u = top_left_vectors(m, k);
    let mut vt = u.transpose() * m;
    let s = DVector::from_iterator(k, vt.row_iter().map(|r| r.norm()));
    let s_max = s.max();
    let mut null = vec![false; k];
    for (j, mut row) in vt.row_iter_mut().enumerate() {
        if s[j] <= 1e-12 * s_max || s[j] == 0.0 {
            null[j] = true;
        } else {
            row /= s[j];
        }
    }
    orthonormalize_rows(&mut vt, &null);
    let s = s.map(|v| if v <= 1e-12 * s_max { 0.0 } else { v });
    TruncatedSvd { u, s, vt }
}

/// Best rank-`k` approximation of `m` in factored form.
pub fn truncated_svd(m: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    check_rank(m, k, false)?;
    check_finite(m)?;
    if m.nrows() <= m.ncols() {
        return Ok(svd_wide(m, k));
    }
    let t = svd_wide(&m.transpose(), k);
    let mut out = TruncatedSvd {
        u: t.vt.transpose(),
        s: t.s,
        vt: t.u.transpose(),
    };
    for j in 0..k {
        let col = out.u.column(j);
        if col[col.iamax()] < 0.0 {
            out.u.column_mut(j).neg_mut();
            out.vt.row_mut(j).neg_mut();
        }
    }
    Ok(out)
}

/// Like [`truncated_svd`] but `k = 0` yields an empty factorization.
pub(crate) fn truncated_svd_or_empty(m: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    if k == 0 {
        Ok(TruncatedSvd::empty(m.nrows(), m.ncols()))
    } else {
        truncated_svd(m, k)
    }
}

/// Best rank-`k` Frobenius approximation; `k = 0` gives the zero matrix.
pub fn low_rank_approx(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    check_rank(m, k, true)?;
    check_finite(m)?;
    if k == 0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    if m.nrows() <= m.ncols() {
        let u = top_left_vectors(m, k);
        let coords = u.transpose() * m;
        Ok(u * coords)
    } else {
        let mt = m.transpose();
        let v = top_left_vectors(&mt, k);
        let coords = m * &v;
        Ok(coords * v.transpose())
    }
}

/// All singular values of `m`, descending.
///
/// Taken as `‖u_jᵀ M‖` for the eigenvectors `u_j` of the Gram matrix rather
/// than `√λ_j`: small eigenvalues of the Gram matrix carry an absolute error
/// of about `ε·s_max²`, which would put a floor of `√ε·s_max` under the
/// smallest singular values.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    let (g, wide) = if m.nrows() <= m.ncols() {
        (gram_rows(m), true)
    } else {
        (m.tr_mul(m), false)
    };
    let (_, vectors) = sym_eigen_desc(g);
    let mut s: Vec<f64> = if wide {
        (vectors.transpose() * m)
            .row_iter()
            .map(|r| r.norm())
            .collect()
    } else {
        (m * vectors).column_iter().map(|c| c.norm()).collect()
    };
    s.sort_by(|a, b| b.total_cmp(a));
    DVector::from_vec(s)
}

/// Maximum deviation of `vt vtᵀ` from the identity.
pub fn row_orthonormality_error(vt: &DMatrix<f64>) -> f64 {
    let g = gram_rows(vt);
    let k = g.nrows();
    (g - DMatrix::identity(k, k)).amax()
}

/// `M (I − Vtᵀ Vt)` without the `n×n` projector. No input validation.
pub(crate) fn project_off_unchecked(m: &DMatrix<f64>, vt: &DMatrix<f64>) -> DMatrix<f64> {
    if vt.nrows() == 0 {
        return m.clone();
    }
    let coords = m * vt.transpose();
    let mut out = m.clone();
    out.gemm(-1.0, &coords, vt, 1.0);
    out
}

/// Removes from every row of `m` its component in the row space of `vt`.
/// `vt` must have orthonormal rows.
pub fn project_rows_off(m: &DMatrix<f64>, vt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() != vt.ncols() {
        return Err(JiveError::arg(format!(
            "cannot project a {}x{} matrix off a {}x{} basis",
            m.nrows(),
            m.ncols(),
            vt.nrows(),
            vt.ncols()
        )));
    }
    if vt.nrows() > 0 && row_orthonormality_error(vt) > 1e-8 {
        return Err(JiveError::arg("basis rows are not orthonormal"));
    }
    Ok(project_off_unchecked(m, vt))
}

/// Cosines of the principal angles between the row spaces of two
/// row-orthonormal bases, descending.
pub fn principal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return DVector::zeros(0);
    }
    let c = a * b.transpose();
    let small = if c.nrows() <= c.ncols() {
        gram_rows(&c)
    } else {
        c.tr_mul(&c)
    };
    sym_eigen_desc(small).0.map(|v| v.max(0.0).sqrt().min(1.0))
}

/// Sine of the largest principal angle between the row spaces of two
/// row-orthonormal bases. When the dimensions differ this measures how far
/// the smaller space is from lying inside the larger one.
///
/// Computed from the projection residual rather than `sqrt(1 − cos²)`, which
/// loses half the digits for nearly aligned spaces.
pub fn max_principal_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let (small, large) = if a.nrows() <= b.nrows() {
        (a, b)
    } else {
        (b, a)
    };
    if small.nrows() == 0 {
        return 0.0;
    }
    let resid = project_off_unchecked(small, large);
    let (values, _) = sym_eigen_desc(gram_rows(&resid));
    values[0].max(0.0).sqrt().min(1.0)
}

/// Orthonormal basis (as rows) of the row space of `m`, of the given rank.
pub fn row_basis(m: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    Ok(truncated_svd_or_empty(m, rank)?.vt)
}
