//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used when checking matrix symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Symmetric to [`SYMMETRY_TOL`] and admits a Cholesky factorization.
pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, SYMMETRY_TOL) && Cholesky::new(symmetrize(m)).is_some()
}

pub fn require_positive_definite(m: &DMatrix<f64>, what: impl Into<String>) -> Result<()> {
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::NotSymmetric { what: what.into() });
    }
    if Cholesky::new(symmetrize(m)).is_none() {
        return Err(Error::NotPositiveDefinite { what: what.into() });
    }
    Ok(())
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn inv_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    Cholesky::new(symmetrize(m)).map(|c| symmetrize(&c.inverse()))
}

/// Inverse of a general square matrix via LU.
pub fn inv(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(m.clone());
    }
    m.clone().try_inverse()
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Smallest eigenvalue of the symmetric part of `m`; `+∞` for empty matrices.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eigen(m).eigenvalues.min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    sym_eigen(m).eigenvalues.max()
}

/// Symmetric square root of an SPD matrix.
pub fn sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, f64::sqrt)
}

/// Symmetric inverse square root of an SPD matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |x| 1.0 / x.sqrt())
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let e = sym_eigen(m);
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f));
    symmetrize(&(&e.eigenvectors * d * e.eigenvectors.transpose()))
}

/// Largest singular value. Zero for matrices with an empty dimension.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Lower factor `S` with `S Sᵀ = M` for a symmetric PSD matrix.
///
/// Cholesky when possible; otherwise the eigen square root with negative
/// eigenvalues clipped to zero.
pub fn psd_sqrt_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return chol.l();
    }
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Factor a PSD matrix as `M = Fᵀ F`, keeping eigenpairs with
/// `λ > rel_threshold · λ_max`. Rows of `F` are `√λ uᵀ`, largest first.
pub fn gram_factor(m: &DMatrix<f64>, rel_threshold: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = sym_eigen(m);
    let lmax = eig.eigenvalues.max();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let kept: Vec<usize> = if lmax > 0.0 {
        order
            .into_iter()
            .filter(|&k| eig.eigenvalues[k] > rel_threshold * lmax)
            .collect()
    } else {
        Vec::new()
    };
    let mut f = DMatrix::zeros(kept.len(), n);
    for (row, &k) in kept.iter().enumerate() {
        let s = eig.eigenvalues[k].sqrt();
        for j in 0..n {
            f[(row, j)] = s * eig.eigenvectors[(j, k)];
        }
    }
    f
}

/// Block-diagonal matrix from square or rectangular blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// `‖A − B‖_F / max(‖B‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn spectral_norm_of_row_of_ones() {
        let d = DMatrix::from_element(1, 4, 1.0);
        assert!((spectral_norm(&d) - 2.0).abs() < 1e-14);
        assert_eq!(spectral_norm(&DMatrix::zeros(0, 3)), 0.0);
    }

    #[test]
    fn gram_factor_reconstructs() {
        let m = dmatrix![4.0, 2.0, 0.0; 2.0, 2.0, 0.0; 0.0, 0.0, 0.0];
        let f = gram_factor(&m, 1e-12);
        assert_eq!(f.nrows(), 2);
        assert!(rel_frobenius(&(f.transpose() * &f), &m) < 1e-14);
    }

    #[test]
    fn pd_checks() {
        assert!(is_positive_definite(&dmatrix![2.0, 1.0; 1.0, 2.0]));
        assert!(!is_positive_definite(&dmatrix![1.0, 2.0; 2.0, 1.0]));
        assert!(matches!(
            require_positive_definite(&dmatrix![1.0, 0.5; 0.0, 1.0], "X"),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn sqrt_factor_of_singular_psd() {
        let m = dmatrix![1.0, 1.0; 1.0, 1.0];
        let s = psd_sqrt_factor(&m);
        assert!(rel_frobenius(&(&s * s.transpose()), &m) < 1e-14);
    }
}
