//! Online prediction with balanced forgetting.
//!
//! Past observations are stacked into a regressor whose lag blocks are
//! rescaled geometrically by `γ` (oldest lag smallest), and the coefficient
//! matrix is learned by regularized recursive least squares. The horizon is
//! split into doubling epochs; the past horizon `p` grows with the
//! logarithm of the epoch start and the estimator is rebuilt at every
//! epoch boundary.

mod ridge;
mod rls;
mod scaling;
mod schedule;
mod session;
mod uniform;

pub use ridge::ridge_solution;
pub use rls::{batch_fit, direct_fit, predict, rls_update, RlsState};
pub use scaling::{regressor, RegressorWindow, ScalingMatrix};
pub use schedule::{epoch_schedule, Epoch, EpochSchedule};
pub use session::{run_opf, run_opf_with, run_uniform_forgetting, EpochSnapshot, Forgetting, OnlineSession, OpfRun, StepView};
pub use uniform::UniformRls;

use crate::error::{Error, Result};
use crate::sysmodel::SpectralInfo;

pub const DEFAULT_REFACTOR_PERIOD: usize = 512;

/// How the estimator is rebuilt at the start of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpochInit {
    /// Replay the recursive update over the epoch's history.
    #[default]
    Iterative,
    /// Form the Gram matrix and cross term, invert the Gram matrix once.
    /// Numerically fragile; kept to reproduce boundary spikes.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpfParams {
    /// Past-horizon coefficient: `p_l = ⌈β ln T_l⌉`.
    pub beta: f64,
    /// Ridge regularization `λ > 0`.
    pub lambda: f64,
    /// Balanced forgetting factor in `(0, 1]`.
    pub gamma: f64,
    /// Warm-up length; `y_0..=y_{T_init}` are observed before the first prediction.
    pub t_init: usize,
    /// Number of doubling epochs.
    pub epochs: usize,
    /// Rank-one inverse updates between full refactorizations of the Gram matrix.
    pub refactor_period: usize,
    pub init: EpochInit,
}

impl Default for OpfParams {
    fn default() -> Self {
        Self {
            beta: 2.5,
            lambda: 1.0,
            gamma: 1.0,
            t_init: 60,
            epochs: 7,
            refactor_period: DEFAULT_REFACTOR_PERIOD,
            init: EpochInit::Iterative,
        }
    }
}

impl OpfParams {
    /// Checks ranges and first-epoch feasibility.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Parameter(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        check_factor("gamma", self.gamma)?;
        if self.t_init == 0 || self.epochs == 0 || self.refactor_period == 0 {
            return Err(Error::Parameter("t_init, epochs and refactor_period must be at least 1".into()));
        }
        let p1 = horizon_for(self.beta, self.t_init + 1);
        if self.t_init < p1 {
            return Err(Error::Parameter(format!(
                "t_init = {} is shorter than the first past horizon p1 = {p1}",
                self.t_init
            )));
        }
        Ok(())
    }

    /// Index of the last prediction step, `2 T_{N_E} − 2`.
    pub fn final_step(&self) -> usize {
        2 * schedule::epoch_start(self.t_init, self.epochs) - 2
    }
}

pub(crate) fn check_factor(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must lie in (0, 1], got {value}")))
    }
}

/// `⌈β ln T⌉`, at least 1.
pub(crate) fn horizon_for(beta: f64, start: usize) -> usize {
    ((beta * (start as f64).ln()).ceil() as usize).max(1)
}

/// Past-horizon coefficient `(2κ + 1) / ln(1/ρ(A − LC))` from ground-truth
/// spectral information.
pub fn compute_beta(spec: &SpectralInfo) -> Result<f64> {
    let rho = spec.rho_closed;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Parameter(format!("rho(A - LC) must lie in [0, 1), got {rho}")));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    Ok((2 * spec.kappa + 1) as f64 / (1.0 / rho).ln())
}
