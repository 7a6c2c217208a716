//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Schur, SymmetricEigen};

use crate::error::{Error, Result};

/// `(X + Xᵀ) / 2`.
pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Largest absolute entry of `X − Xᵀ`.
pub fn asymmetry(x: &DMatrix<f64>) -> f64 {
    (x - x.transpose()).amax()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(x: &DMatrix<f64>) -> DVector<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(symmetrize(x)).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    DVector::from_vec(vals)
}

pub fn min_sym_eigenvalue(x: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(x)[0]
}

pub fn max_sym_eigenvalue(x: &DMatrix<f64>) -> f64 {
    let vals = sym_eigenvalues(x);
    vals[vals.len() - 1]
}

/// Complex eigenvalues of a general square matrix as `(re, im)` pairs.
pub fn eigenvalues(x: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    if x.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(x.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect())
}

pub fn spectral_radius(x: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(x)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// Spectral norm `‖X‖₂`.
pub fn spectral_norm(x: &DMatrix<f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.singular_values().max()
}

/// Number of singular values above `tol · max(1, σ_max)`.
pub fn numerical_rank(x: &DMatrix<f64>, tol: f64) -> usize {
    if x.is_empty() {
        return 0;
    }
    let sv = x.singular_values();
    let cutoff = tol * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(x: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(x.clone()).ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// A factor `F` with `F Fᵀ = X` for symmetric positive semidefinite `X`.
///
/// Uses Cholesky when it succeeds and falls back to a clipped eigen
/// square root, so zero and rank-deficient covariances are accepted.
pub fn psd_factor(x: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(x);
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return ch.l();
    }
    let eig = SymmetricEigen::new(sym);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// `log det X` from a Cholesky factor.
pub fn chol_logdet(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Frobenius norm of `X − I`.
pub fn identity_defect(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    (x - DMatrix::<f64>::identity(n, n)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radius_of_rotation_is_one() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&r).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_of_nilpotent_powers() {
        let n = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(numerical_rank(&n, 1e-9), 2);
        assert_eq!(numerical_rank(&(&n * &n), 1e-9), 1);
        assert_eq!(numerical_rank(&(&n * &n * &n), 1e-9), 0);
    }

    #[test]
    fn psd_factor_handles_zero_and_rank_deficient() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(psd_factor(&z).norm(), 0.0);
        let v = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let x = &v * v.transpose();
        let f = psd_factor(&x);
        assert_relative_eq!(&f * f.transpose(), x, epsilon = 1e-12);
    }

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let x = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let ch = cholesky(&x, "x").unwrap();
        assert_relative_eq!(chol_logdet(&ch), 11.0f64.ln(), epsilon = 1e-12);
    }
}
