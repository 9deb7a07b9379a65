//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthonormal basis of the zero-sum subspace of R^p (Helmert construction).
///
/// Column k (0-based) is `(1, ..., 1, -(k+1), 0, ..., 0) / sqrt((k+1)(k+2))`
/// with `k+1` leading ones.
pub fn helmert(p: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(p, p.saturating_sub(1));
    for k in 0..p.saturating_sub(1) {
        let j = (k + 1) as f64;
        let scale = 1.0 / (j * (j + 1.0)).sqrt();
        for i in 0..=k {
            h[(i, k)] = scale;
        }
        h[(k + 1, k)] = -j * scale;
    }
    h
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Orthonormal basis (columns) of the null space of `a`.
///
/// Singular values below `rel_tol * sigma_max` count as zero. The matrix is
/// padded with zero rows so the thin SVD returns a complete right basis.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (rows, cols) = a.shape();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = rel_tol * sigma_max.max(f64::MIN_POSITIVE);
    let kernel: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| sigma_max == 0.0 || svd.singular_values[i] < threshold)
        .collect();
    let mut basis = DMatrix::zeros(cols, kernel.len());
    for (j, &i) in kernel.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    basis
}

/// Numerical rank with the same relative threshold convention as [`null_space`].
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    sv.iter().filter(|&&s| s > rel_tol * sigma_max && s > 0.0).count()
}

/// 2-norm condition number.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest real part over the spectrum of a general square matrix.
pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted ascending.
pub fn symmetric_eigen_sorted(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Inverse through LU with an explicit singularity error.
pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular matrix in inversion".into()))
}

/// Orthonormal completion: columns spanning the orthogonal complement of
/// the (orthonormal) columns of `basis` in R^n.
pub fn orthogonal_complement(basis: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    null_space(&basis.transpose(), 1e-10)
}
