use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

use super::scaling::{regressor, ScalingMatrix};

/// Generalized ridge estimate on unscaled regressors,
/// `G = (Σ y_t Z_tᵀ)(λ D⁻² + Σ Z_t Z_tᵀ)⁻¹` over `t = p..=k`.
///
/// Relates to the balanced estimate by `G = G̃ D`.
pub fn ridge_solution(observations: &[DVector<f64>], scaling: &ScalingMatrix, lambda: f64) -> Result<DMatrix<f64>> {
    let p = scaling.p;
    if observations.len() < p {
        return Err(Error::Parameter(format!("need at least p = {p} observations, got {}", observations.len())));
    }
    let m = scaling.m;
    let dim = m * p;
    let mut gram = DMatrix::from_diagonal(&(scaling.inverse_squared() * lambda));
    let mut cross = DMatrix::zeros(m, dim);
    for t in p..observations.len() {
        let z = regressor(observations, t, p);
        gram.ger(1.0, &z, &z, 1.0);
        cross.ger(1.0, &observations[t], &z, 1.0);
    }
    let ch = linalg::cholesky(&gram, "ridge normal matrix")?;
    Ok(ch.solve(&cross.transpose()).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_scalar_sample() {
        let obs = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)];
        let d = ScalingMatrix::new(1, 1.0, 1).unwrap();
        let g = ridge_solution(&obs, &d, 1.0).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_scaling_is_standard_ridge() {
        let obs: Vec<_> = (0..20).map(|i| DVector::from_element(1, ((i * 5) % 7) as f64)).collect();
        let d = ScalingMatrix::new(2, 1.0, 1).unwrap();
        let g = ridge_solution(&obs, &d, 3.0).unwrap();
        let mut v = DMatrix::identity(2, 2) * 3.0;
        let mut s = DMatrix::zeros(1, 2);
        for t in 2..20 {
            let z = regressor(&obs, t, 2);
            v += &z * z.transpose();
            s += &obs[t] * z.transpose();
        }
        let expected = s * v.try_inverse().unwrap();
        assert!((g - expected).norm() < 1e-12);
    }
}
