use nalgebra::DVector;

use crate::error::{Error, Result};

use super::check_factor;

/// Diagonal of `diag(γ^{p−1}, …, γ, 1) ⊗ I_m`, stored as a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    pub p: usize,
    pub gamma: f64,
    pub m: usize,
    pub diag: DVector<f64>,
}

impl ScalingMatrix {
    pub fn new(p: usize, gamma: f64, m: usize) -> Result<Self> {
        if p == 0 || m == 0 {
            return Err(Error::Parameter("scaling needs p >= 1 and m >= 1".into()));
        }
        check_factor("gamma", gamma)?;
        let diag = DVector::from_fn(p * m, |i, _| gamma.powi((p - 1 - i / m) as i32));
        Ok(Self { p, gamma, m, diag })
    }

    /// `D Z`.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        self.diag.component_mul(z)
    }

    /// Diagonal of `D⁻²`.
    pub fn inverse_squared(&self) -> DVector<f64> {
        self.diag.map(|d| 1.0 / (d * d))
    }

    /// `log det D`.
    pub fn logdet(&self) -> f64 {
        self.diag.iter().map(|d| d.ln()).sum()
    }
}

/// `Z_{k,p} = [y_{k−p}; …; y_{k−1}]`, oldest observation first.
pub fn regressor(observations: &[DVector<f64>], k: usize, p: usize) -> DVector<f64> {
    assert!(k >= p && k <= observations.len(), "regressor window {k}-{p}..{k} out of range");
    let m = observations[0].len();
    let mut z = DVector::zeros(m * p);
    for (i, y) in observations[k - p..k].iter().enumerate() {
        z.rows_mut(i * m, m).copy_from(y);
    }
    z
}

/// Raw and rescaled regressor at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWindow {
    pub z: DVector<f64>,
    pub ztilde: DVector<f64>,
}

impl RegressorWindow {
    pub fn at(observations: &[DVector<f64>], k: usize, scaling: &ScalingMatrix) -> Self {
        let z = regressor(observations, k, scaling.p);
        let ztilde = scaling.apply(&z);
        Self { z, ztilde }
    }
}
