use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

use super::scaling::regressor;

/// Exponentially weighted least squares with an undecayed ridge term:
/// `G = (Σ α^{k−t} y_t Z_tᵀ)(λI + Σ α^{k−t} Z_t Z_tᵀ)⁻¹`.
///
/// The Gram recursion `V ← αV + (1−α)λI + ZZᵀ` is not rank-one, so each
/// update solves against a fresh Cholesky factor. Unit `α` is handled by
/// the balanced estimator with `γ = 1` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformRls {
    pub alpha: f64,
    pub lambda: f64,
    pub g: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub samples: usize,
}

impl UniformRls {
    pub fn new(m: usize, dim: usize, alpha: f64, lambda: f64) -> Self {
        Self {
            alpha,
            lambda,
            g: DMatrix::zeros(m, dim),
            v: DMatrix::identity(dim, dim) * lambda,
            samples: 0,
        }
    }

    pub fn predict(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.g * z
    }

    /// `G ← G + [(y − Gz)zᵀ − (1−α)λG] V⁻¹` with the updated `V`.
    pub fn update(&mut self, y: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        if y.len() != self.g.nrows() || z.len() != self.g.ncols() {
            return Err(Error::Dimension(format!(
                "update with y of length {} and regressor of length {}, state is {}x{}",
                y.len(),
                z.len(),
                self.g.nrows(),
                self.g.ncols()
            )));
        }
        let leak = (1.0 - self.alpha) * self.lambda;
        let residual = y - &self.g * z;
        self.v *= self.alpha;
        for i in 0..self.v.nrows() {
            self.v[(i, i)] += leak;
        }
        self.v.ger(1.0, z, z, 1.0);
        let mut rhs = &self.g * (-leak);
        rhs.ger(1.0, &residual, z, 1.0);
        let ch = linalg::cholesky(&self.v, "weighted Gram matrix")?;
        // V symmetric: rhs V⁻¹ = (V⁻¹ rhsᵀ)ᵀ
        self.g += ch.solve(&rhs.transpose()).transpose();
        self.samples += 1;
        Ok(())
    }

    /// Replays the recursion over `t = p..observations.len()`.
    pub fn fit(observations: &[DVector<f64>], p: usize, alpha: f64, lambda: f64) -> Result<Self> {
        let m = observations.first().map(|y| y.len()).unwrap_or(0);
        let mut state = Self::new(m, m * p, alpha, lambda);
        for t in p..observations.len() {
            state.update(&observations[t], &regressor(observations, t, p))?;
        }
        Ok(state)
    }

    /// Closed-form counterpart of [`UniformRls::fit`] with a single LU inverse.
    pub fn fit_direct(observations: &[DVector<f64>], p: usize, alpha: f64, lambda: f64) -> Result<Self> {
        let m = observations.first().map(|y| y.len()).unwrap_or(0);
        let mut state = Self::new(m, m * p, alpha, lambda);
        let k = observations.len();
        let mut weighted = DMatrix::zeros(m * p, m * p);
        let mut cross = DMatrix::zeros(m, m * p);
        for t in p..k {
            let w = alpha.powi((k - 1 - t) as i32);
            let z = regressor(observations, t, p);
            weighted.ger(w, &z, &z, 1.0);
            cross.ger(w, &observations[t], &z, 1.0);
            state.samples += 1;
        }
        state.v += weighted;
        let inv = state
            .v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("weighted Gram matrix is singular".into()))?;
        state.g = cross * inv;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stream(n: usize) -> Vec<DVector<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                DVector::from_vec(vec![(0.3 * t).sin() + 0.1 * t.cos(), (0.17 * t).cos()])
            })
            .collect()
    }

    #[test]
    fn recursion_matches_weighted_closed_form() {
        let obs = stream(60);
        let a = UniformRls::fit(&obs, 3, 0.95, 1.0).unwrap();
        let b = UniformRls::fit_direct(&obs, 3, 0.95, 1.0).unwrap();
        assert_relative_eq!(a.g, b.g, epsilon = 1e-9, max_relative = 1e-9);
        // λ stays undecayed: V − λI is the weighted sum
        assert_relative_eq!(a.v, b.v, epsilon = 1e-9, max_relative = 1e-9);
    }

    #[test]
    fn unit_alpha_is_plain_ridge() {
        let obs = stream(40);
        let a = UniformRls::fit(&obs, 2, 1.0, 0.5).unwrap();
        let mut v = DMatrix::identity(4, 4) * 0.5;
        let mut s = DMatrix::zeros(2, 4);
        for t in 2..40 {
            let z = regressor(&obs, t, 2);
            v += &z * z.transpose();
            s += &obs[t] * z.transpose();
        }
        let g = s * v.try_inverse().unwrap();
        assert_relative_eq!(a.g, g, epsilon = 1e-9, max_relative = 1e-9);
    }
}
