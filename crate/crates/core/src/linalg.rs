//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Everything here works on matrices no larger than a block's landmark count
//! or on tall `n x c` panels; nothing forms an `n x n` product.

use nalgebra::{DMatrix, DVector};

/// Symmetric eigendecomposition with eigenvalues sorted descending.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry
/// (lowest index on ties) is positive. Equal eigenvalues keep the solver's
/// original order.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    // symmetrize so roundoff asymmetry does not leak into the solver
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut col);
        vecs.set_column(k, &col);
    }
    (vals, vecs)
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Economized QR with a nonnegative diagonal in `R`.
pub fn thin_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..r.nrows().min(r.ncols()) {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Pseudo-inverse of a symmetric matrix. Eigenvalues whose magnitude falls
/// below `rel_tol` times the largest magnitude are treated as zero.
pub fn pinv_sym(w: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(w);
    let max = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let n = w.nrows();
    let mut out = DMatrix::zeros(n, n);
    if max == 0.0 {
        return out;
    }
    for k in 0..n {
        let lam = vals[k];
        if lam.abs() >= rel_tol * max {
            let v = vecs.column(k);
            out += (v * v.transpose()) / lam;
        }
    }
    out
}

/// Thin SVD with singular values sorted descending.
pub fn svd_desc(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let s = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
    let mut u_s = DMatrix::zeros(u.nrows(), k);
    let mut v_s = DMatrix::zeros(vt.ncols(), k);
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        v_s.set_column(dst, &vt.row(src).transpose());
    }
    (u_s, s, v_s)
}

/// Orthonormal polar factor `U V^T` of a tall matrix `k`.
///
/// Left singular vectors belonging to numerically zero singular values are
/// replaced by a Gram-Schmidt completion built from the standard basis in
/// column order. Returns the factor and the number of completed columns.
pub fn polar(k: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (n, c) = k.shape();
    assert!(n >= c, "polar factor needs a tall matrix");
    let (mut u, s, v) = svd_desc(k);
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = smax * 1e-12;
    let keep = s.iter().take_while(|&&x| x > cutoff && x > 0.0).count();
    let deficient = c - keep;
    if deficient > 0 {
        let mut basis: Vec<DVector<f64>> = (0..keep).map(|j| u.column(j).into_owned()).collect();
        let mut e = 0;
        while basis.len() < c && e < n {
            let mut cand = DVector::zeros(n);
            cand[e] = 1.0;
            e += 1;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dot(&cand);
                    cand.axpy(-proj, b, 1.0);
                }
            }
            let norm = cand.norm();
            if norm > 1e-8 {
                basis.push(cand / norm);
            }
        }
        for (j, b) in basis.iter().enumerate().skip(keep) {
            u.set_column(j, b);
        }
        log::debug!("polar factor completed {deficient} rank-deficient column(s)");
    }
    (&u * v.transpose(), deficient)
}

/// Spectral norm of a symmetric matrix (largest eigenvalue magnitude).
pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Spectral norm of a general matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
}

/// `max |M^T M - I|`.
pub fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut err = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((g[(i, j)] - target).abs());
        }
    }
    err
}

/// First `c` columns of the `n x n` identity.
pub fn identity_columns(n: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, c, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Copies a matrix into a row-major buffer.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, c) = m.shape();
    let mut out = Vec::with_capacity(n * c);
    for i in 0..n {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
