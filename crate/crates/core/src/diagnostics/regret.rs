use nalgebra::DVector;

use crate::error::{Error, Result};

/// Relative tolerance for `R_k = L_k + 2 M_k`.
pub const REGRET_IDENTITY_TOL: f64 = 1e-8;

/// Per-step losses and cumulative regret from the first prediction step on.
///
/// Entry `i` refers to time step `first_step + i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretRecord {
    pub first_step: usize,
    /// `‖y_k − ỹ_k‖²`
    pub online_loss: Vec<f64>,
    /// `‖y_k − ŷ_k‖²`
    pub kalman_loss: Vec<f64>,
    /// `R_k`
    pub cum_regret: Vec<f64>,
    /// `L_k = Σ ‖ŷ − ỹ‖²`
    pub cum_gap: Vec<f64>,
    /// `Σ eᵀ(ŷ − ỹ)` with `e = y − ŷ`
    pub martingale: Vec<f64>,
}

impl RegretRecord {
    pub fn len(&self) -> usize {
        self.cum_regret.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cum_regret.is_empty()
    }

    pub fn last_step(&self) -> Option<usize> {
        (!self.is_empty()).then(|| self.first_step + self.len() - 1)
    }

    /// `R_k` for absolute step `k`.
    pub fn regret_at(&self, k: usize) -> Option<f64> {
        k.checked_sub(self.first_step).and_then(|i| self.cum_regret.get(i).copied())
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.cum_regret.last().copied()
    }

    /// Worst relative violation of `R_k = L_k + 2 M_k` over the record.
    pub fn identity_error(&self) -> f64 {
        self.cum_regret
            .iter()
            .zip(&self.cum_gap)
            .zip(&self.martingale)
            .map(|((r, l), mt)| {
                let scale = r.abs().max(*l).max(2.0 * mt.abs()).max(1.0);
                (r - l - 2.0 * mt).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    pub fn check_identity(&self, tol: f64) -> Result<()> {
        let err = self.identity_error();
        if err > tol {
            return Err(Error::Numerical(format!("regret identity violated: relative error {err:.3e} > {tol:.1e}")));
        }
        Ok(())
    }
}

/// Builds the regret record for aligned sequences that start at `first_step`.
pub fn regret_series(
    observations: &[DVector<f64>],
    online: &[DVector<f64>],
    kalman: &[DVector<f64>],
    first_step: usize,
) -> Result<RegretRecord> {
    if observations.len() != online.len() || observations.len() != kalman.len() {
        return Err(Error::Dimension(format!(
            "length mismatch: {} observations, {} online, {} Kalman predictions",
            observations.len(),
            online.len(),
            kalman.len()
        )));
    }
    let n = observations.len();
    let mut rec = RegretRecord {
        first_step,
        online_loss: Vec::with_capacity(n),
        kalman_loss: Vec::with_capacity(n),
        cum_regret: Vec::with_capacity(n),
        cum_gap: Vec::with_capacity(n),
        martingale: Vec::with_capacity(n),
    };
    let (mut r, mut l, mut mt) = (0.0, 0.0, 0.0);
    for ((y, on), kf) in observations.iter().zip(online).zip(kalman) {
        if y.len() != on.len() || y.len() != kf.len() {
            return Err(Error::Dimension("prediction and observation lengths differ".into()));
        }
        let e = y - kf;
        let gap = kf - on;
        let online_loss = (y - on).norm_squared();
        let kalman_loss = e.norm_squared();
        r += online_loss - kalman_loss;
        l += gap.norm_squared();
        mt += e.dot(&gap);
        rec.online_loss.push(online_loss);
        rec.kalman_loss.push(kalman_loss);
        rec.cum_regret.push(r);
        rec.cum_gap.push(l);
        rec.martingale.push(mt);
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn scalar_toy() {
        let y = [s(1.0), s(2.0), s(3.0)];
        let rec = regret_series(&y, &[s(0.0), s(0.0), s(0.0)], &[s(1.0), s(1.0), s(1.0)], 0).unwrap();
        assert_eq!(rec.cum_regret, vec![1.0, 4.0, 9.0]);
        assert!(rec.identity_error() < 1e-15);
    }

    #[test]
    fn identical_predictors_have_zero_regret() {
        let y = [s(1.0), s(-2.0)];
        let p = [s(0.5), s(0.1)];
        let rec = regret_series(&y, &p, &p, 5).unwrap();
        assert_eq!(rec.final_regret(), Some(0.0));
        assert_eq!(rec.regret_at(6), Some(0.0));
        assert_eq!(rec.regret_at(4), None);
    }

    #[test]
    fn hindsight_predictor_has_negative_regret() {
        let y = [s(1.0), s(-2.0)];
        let rec = regret_series(&y, &y, &[s(0.0), s(0.0)], 0).unwrap();
        assert_eq!(rec.final_regret(), Some(-5.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(regret_series(&[s(1.0)], &[], &[s(0.0)], 0).is_err());
    }
}
