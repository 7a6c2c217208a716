use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

use super::scaling::{regressor, ScalingMatrix};

/// Largest tolerated `‖Ṽ Ṽ⁻¹ − I‖_F / (‖Ṽ‖_F ‖Ṽ⁻¹‖_F)` at a refactorization.
pub const INVERSE_CONSISTENCY_TOL: f64 = 1e-6;

/// Regularized least-squares state over rescaled regressors.
///
/// `vtilde = λI + Σ Z̃ Z̃ᵀ`, `gtilde = (Σ y Z̃ᵀ) vtilde⁻¹`. The inverse is
/// carried along by rank-one updates and recomputed from a Cholesky
/// factorization every `refactor_period` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    pub gtilde: DMatrix<f64>,
    pub vtilde: DMatrix<f64>,
    pub vtilde_inv: DMatrix<f64>,
    pub steps_since_refactor: usize,
    pub refactor_period: usize,
    pub samples: usize,
    /// Worst relative inverse defect seen at a refactorization.
    pub max_inverse_defect: f64,
}

impl RlsState {
    /// Empty state: `G̃ = 0`, `Ṽ = λI`.
    pub fn new(m: usize, dim: usize, lambda: f64, refactor_period: usize) -> Self {
        Self {
            gtilde: DMatrix::zeros(m, dim),
            vtilde: DMatrix::identity(dim, dim) * lambda,
            vtilde_inv: DMatrix::identity(dim, dim) / lambda,
            steps_since_refactor: 0,
            refactor_period: refactor_period.max(1),
            samples: 0,
            max_inverse_defect: 0.0,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.gtilde.nrows()
    }

    pub fn regressor_dim(&self) -> usize {
        self.gtilde.ncols()
    }

    /// `G̃ Z̃`.
    pub fn predict(&self, ztilde: &DVector<f64>) -> DVector<f64> {
        &self.gtilde * ztilde
    }

    fn check_dims(&self, y: &DVector<f64>, ztilde: &DVector<f64>) -> Result<()> {
        if y.len() != self.output_dim() || ztilde.len() != self.regressor_dim() {
            return Err(Error::Dimension(format!(
                "update with y of length {} and regressor of length {}, state is {}x{}",
                y.len(),
                ztilde.len(),
                self.output_dim(),
                self.regressor_dim()
            )));
        }
        Ok(())
    }

    /// Absorbs one sample `(y, Z̃)`.
    pub fn update(&mut self, y: &DVector<f64>, ztilde: &DVector<f64>) -> Result<()> {
        self.check_dims(y, ztilde)?;
        let residual = y - &self.gtilde * ztilde;
        self.vtilde.ger(1.0, ztilde, ztilde, 1.0);
        let u = &self.vtilde_inv * ztilde;
        let denom = 1.0 + ztilde.dot(&u);
        self.vtilde_inv.ger(-1.0 / denom, &u, &u, 1.0);
        // Ṽ_new⁻¹ Z̃ = u / (1 + Z̃ᵀ Ṽ_old⁻¹ Z̃)
        self.gtilde.ger(1.0 / denom, &residual, &u, 1.0);
        self.samples += 1;
        self.steps_since_refactor += 1;
        if self.steps_since_refactor >= self.refactor_period {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes `Ṽ⁻¹` from a Cholesky factorization of `Ṽ`, after
    /// checking the carried inverse against `Ṽ`.
    pub fn refactor(&mut self) -> Result<f64> {
        let defect = linalg::identity_defect(&(&self.vtilde * &self.vtilde_inv))
            / (self.vtilde.norm() * self.vtilde_inv.norm());
        self.max_inverse_defect = self.max_inverse_defect.max(defect);
        if !(defect <= INVERSE_CONSISTENCY_TOL) {
            return Err(Error::Numerical(format!(
                "Gram inverse drifted: relative defect {defect:.3e} after {} samples (dim {}, trace {:.6e}, inverse trace {:.6e})",
                self.samples,
                self.regressor_dim(),
                self.vtilde.trace(),
                self.vtilde_inv.trace()
            )));
        }
        let ch = linalg::cholesky(&self.vtilde, "Gram matrix")?;
        self.vtilde_inv = linalg::symmetrize(&ch.inverse());
        self.steps_since_refactor = 0;
        Ok(defect)
    }
}

/// Functional form of [`RlsState::update`].
pub fn rls_update(mut state: RlsState, y: &DVector<f64>, ztilde: &DVector<f64>) -> Result<RlsState> {
    state.update(y, ztilde)?;
    Ok(state)
}

pub fn predict(state: &RlsState, ztilde: &DVector<f64>) -> DVector<f64> {
    state.predict(ztilde)
}

/// Least-squares state over samples `t = p..=k`, where `observations`
/// holds `y_0..=y_k`. Built by replaying rank-one updates.
pub fn batch_fit(
    observations: &[DVector<f64>],
    scaling: &ScalingMatrix,
    lambda: f64,
    refactor_period: usize,
) -> Result<RlsState> {
    let p = scaling.p;
    if observations.len() < p {
        return Err(Error::Parameter(format!("need at least p = {p} observations, got {}", observations.len())));
    }
    let m = scaling.m;
    let mut state = RlsState::new(m, m * p, lambda, refactor_period);
    for t in p..observations.len() {
        let zt = scaling.apply(&regressor(observations, t, p));
        state.update(&observations[t], &zt)?;
    }
    Ok(state)
}

/// Closed-form state over the same samples as [`batch_fit`]: accumulate
/// `Ṽ` and `Σ y Z̃ᵀ`, invert `Ṽ` once by LU and multiply.
pub fn direct_fit(
    observations: &[DVector<f64>],
    scaling: &ScalingMatrix,
    lambda: f64,
    refactor_period: usize,
) -> Result<RlsState> {
    let p = scaling.p;
    if observations.len() < p {
        return Err(Error::Parameter(format!("need at least p = {p} observations, got {}", observations.len())));
    }
    let m = scaling.m;
    let mut state = RlsState::new(m, m * p, lambda, refactor_period);
    let mut cross = DMatrix::zeros(m, m * p);
    for t in p..observations.len() {
        let zt = scaling.apply(&regressor(observations, t, p));
        state.vtilde.ger(1.0, &zt, &zt, 1.0);
        cross.ger(1.0, &observations[t], &zt, 1.0);
        state.samples += 1;
    }
    state.vtilde_inv = state
        .vtilde
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Gram matrix is singular".into()))?;
    state.gtilde = cross * &state.vtilde_inv;
    state.steps_since_refactor = state.samples % state.refactor_period;
    Ok(state)
}
