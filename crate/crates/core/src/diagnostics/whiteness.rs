use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const WHITENESS_LAGS: usize = 5;

/// Normalized sample autocovariances `‖Γ_τ‖_F / ‖Γ_0‖_F` for `τ = 1..=lags`.
///
/// `Γ_τ = (N−τ)⁻¹ Σ e_{k+τ} e_kᵀ`, not demeaned. The pass threshold `4/√N`
/// is a rough four-sigma bound for a white sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenessReport {
    pub samples: usize,
    pub ratios: Vec<f64>,
    pub threshold: f64,
}

impl WhitenessReport {
    pub fn passed(&self) -> bool {
        self.ratios.iter().all(|&r| r < self.threshold)
    }

    pub fn worst(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

pub fn whiteness_check(innovations: &[DVector<f64>], lags: usize) -> Result<WhitenessReport> {
    let n = innovations.len();
    if n <= lags {
        return Err(Error::Parameter(format!("need more than {lags} samples, got {n}")));
    }
    let m = innovations[0].len();
    let cov = |tau: usize| {
        let mut g = DMatrix::zeros(m, m);
        for k in 0..n - tau {
            g.ger(1.0, &innovations[k + tau], &innovations[k], 1.0);
        }
        g / (n - tau) as f64
    };
    let base = cov(0).norm();
    let ratios = (1..=lags)
        .map(|tau| if base > 0.0 { cov(tau).norm() / base } else { 0.0 })
        .collect();
    Ok(WhitenessReport { samples: n, ratios, threshold: 4.0 / (n as f64).sqrt() })
}
