use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::rls::{batch_fit, direct_fit, RlsState};
use super::scaling::{regressor, ScalingMatrix};
use super::schedule::{epoch_schedule, Epoch, EpochSchedule};
use super::uniform::UniformRls;
use super::{check_factor, EpochInit, OpfParams};

/// Which forgetting strategy the online estimator uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forgetting {
    /// Per-lag rescaling of the regressor by `γ`.
    Balanced { gamma: f64 },
    /// Per-sample exponential down-weighting by `α`.
    Uniform { alpha: f64 },
}

impl Forgetting {
    pub fn factor(&self) -> f64 {
        match *self {
            Forgetting::Balanced { gamma } => gamma,
            Forgetting::Uniform { alpha } => alpha,
        }
    }
}

#[derive(Debug, Clone)]
enum Estimator {
    Balanced { scaling: ScalingMatrix, rls: RlsState },
    Uniform { rls: UniformRls },
}

impl Estimator {
    fn build(history: &[DVector<f64>], p: usize, forgetting: Forgetting, params: &OpfParams) -> Result<Self> {
        let m = history[0].len();
        let gamma = match forgetting {
            Forgetting::Balanced { gamma } => gamma,
            // unit α coincides with the unscaled balanced estimator
            Forgetting::Uniform { alpha } if alpha == 1.0 => 1.0,
            Forgetting::Uniform { alpha } => {
                let rls = match params.init {
                    EpochInit::Iterative => UniformRls::fit(history, p, alpha, params.lambda)?,
                    EpochInit::Direct => UniformRls::fit_direct(history, p, alpha, params.lambda)?,
                };
                return Ok(Estimator::Uniform { rls });
            }
        };
        let scaling = ScalingMatrix::new(p, gamma, m)?;
        let rls = match params.init {
            EpochInit::Iterative => batch_fit(history, &scaling, params.lambda, params.refactor_period)?,
            EpochInit::Direct => direct_fit(history, &scaling, params.lambda, params.refactor_period)?,
        };
        Ok(Estimator::Balanced { scaling, rls })
    }

    fn prepare(&self, z: DVector<f64>) -> DVector<f64> {
        match self {
            Estimator::Balanced { scaling, .. } => scaling.apply(&z),
            Estimator::Uniform { .. } => z,
        }
    }

    fn predict(&self, z: &DVector<f64>) -> DVector<f64> {
        match self {
            Estimator::Balanced { rls, .. } => rls.predict(z),
            Estimator::Uniform { rls } => rls.predict(z),
        }
    }

    fn update(&mut self, y: &DVector<f64>, z: &DVector<f64>) -> Result<()> {
        match self {
            Estimator::Balanced { rls, .. } => rls.update(y, z),
            Estimator::Uniform { rls } => rls.update(y, z),
        }
    }

    fn coefficients(&self) -> &DMatrix<f64> {
        match self {
            Estimator::Balanced { rls, .. } => &rls.gtilde,
            Estimator::Uniform { rls } => &rls.g,
        }
    }

    fn inverse_defect(&self) -> f64 {
        match self {
            Estimator::Balanced { rls, .. } => rls.max_inverse_defect,
            Estimator::Uniform { .. } => 0.0,
        }
    }
}

/// State at the end of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub epoch: Epoch,
    /// `G̃` (balanced) or `G` (uniform) after the epoch's last update.
    pub coefficients: DMatrix<f64>,
    pub max_inverse_defect: f64,
}

/// What the estimator saw and emitted at one prediction step.
#[derive(Debug)]
pub struct StepView<'a> {
    pub k: usize,
    pub epoch: Epoch,
    /// Regressor as fed to the estimator (rescaled for balanced forgetting).
    pub regressor: &'a DVector<f64>,
    pub prediction: &'a DVector<f64>,
    /// Coefficients used for this prediction (fitted on data up to `k − 1`).
    pub coefficients: &'a DMatrix<f64>,
}

/// Streaming driver enforcing the predict-then-observe protocol.
///
/// `y_0..=y_{T_init}` are observed without predictions. From `k = T_1` on,
/// each step must call [`OnlineSession::predict`] and then
/// [`OnlineSession::observe`]. The session ends after step `2 T_{N_E} − 2`.
#[derive(Debug, Clone)]
pub struct OnlineSession {
    params: OpfParams,
    forgetting: Forgetting,
    schedule: EpochSchedule,
    history: Vec<DVector<f64>>,
    epoch: Option<usize>,
    estimator: Option<Estimator>,
    pending: Option<(DVector<f64>, DVector<f64>)>,
    snapshots: Vec<EpochSnapshot>,
}

impl OnlineSession {
    /// Balanced-forgetting session using `params.gamma`.
    pub fn new(params: OpfParams) -> Result<Self> {
        Self::with_forgetting(params, Forgetting::Balanced { gamma: params.gamma })
    }

    pub fn with_forgetting(params: OpfParams, forgetting: Forgetting) -> Result<Self> {
        let schedule = epoch_schedule(&params)?;
        match forgetting {
            Forgetting::Balanced { gamma } => check_factor("gamma", gamma)?,
            Forgetting::Uniform { alpha } => check_factor("alpha", alpha)?,
        }
        Ok(Self {
            params,
            forgetting,
            schedule,
            history: Vec::new(),
            epoch: None,
            estimator: None,
            pending: None,
            snapshots: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &EpochSchedule {
        &self.schedule
    }

    /// Index of the next observation to arrive.
    pub fn next_step(&self) -> usize {
        self.history.len()
    }

    /// True when the next step requires a prediction before its observation.
    pub fn expects_prediction(&self) -> bool {
        let k = self.next_step();
        k >= self.schedule.first_step() && k <= self.schedule.final_step()
    }

    pub fn finished(&self) -> bool {
        self.next_step() > self.schedule.final_step()
    }

    pub fn snapshots(&self) -> &[EpochSnapshot] {
        &self.snapshots
    }

    pub fn current_epoch(&self) -> Option<&Epoch> {
        self.epoch.map(|i| &self.schedule.epochs[i])
    }

    /// Balanced least-squares state of the active epoch, if any.
    pub fn state(&self) -> Option<&RlsState> {
        match &self.estimator {
            Some(Estimator::Balanced { rls, .. }) => Some(rls),
            _ => None,
        }
    }

    /// Predicts `y_k` for the next step `k`.
    pub fn predict(&mut self) -> Result<DVector<f64>> {
        let k = self.next_step();
        if self.finished() {
            return Err(Error::Usage(format!("schedule exhausted after step {}", self.schedule.final_step())));
        }
        if !self.expects_prediction() {
            return Err(Error::Usage(format!(
                "warm-up in progress: observe up to y_{} before predicting",
                self.params.t_init
            )));
        }
        if self.pending.is_some() {
            return Err(Error::Usage(format!("prediction for step {k} already issued; observe y_{k} next")));
        }
        let idx = self.schedule.epochs.iter().position(|e| e.steps().contains(&k)).expect("k inside schedule");
        if self.epoch != Some(idx) {
            let p = self.schedule.epochs[idx].p;
            self.estimator = Some(Estimator::build(&self.history, p, self.forgetting, &self.params)?);
            self.epoch = Some(idx);
        }
        let est = self.estimator.as_ref().expect("estimator initialised");
        let p = self.schedule.epochs[idx].p;
        let z = est.prepare(regressor(&self.history, k, p));
        let prediction = est.predict(&z);
        self.pending = Some((z, prediction.clone()));
        Ok(prediction)
    }

    /// Records `y_k`; during the online phase this also updates the estimator.
    pub fn observe(&mut self, y: DVector<f64>) -> Result<()> {
        let k = self.next_step();
        if self.finished() {
            return Err(Error::Usage(format!("schedule exhausted after step {}", self.schedule.final_step())));
        }
        if let Some(first) = self.history.first() {
            if first.len() != y.len() {
                return Err(Error::Dimension(format!("observation of length {}, expected {}", y.len(), first.len())));
            }
        } else if y.is_empty() {
            return Err(Error::Dimension("observations must be non-empty".into()));
        }
        if self.expects_prediction() {
            let (z, _) = self
                .pending
                .take()
                .ok_or_else(|| Error::Usage(format!("observe called for step {k} before predict")))?;
            let est = self.estimator.as_mut().expect("estimator initialised");
            est.update(&y, &z)?;
            let epoch = self.schedule.epochs[self.epoch.expect("active epoch")];
            if k == epoch.end() {
                self.snapshots.push(EpochSnapshot {
                    epoch,
                    coefficients: est.coefficients().clone(),
                    max_inverse_defect: est.inverse_defect(),
                });
            }
        }
        self.history.push(y);
        Ok(())
    }

    fn pending_view(&self, k: usize) -> Option<StepView<'_>> {
        let (z, prediction) = self.pending.as_ref()?;
        Some(StepView {
            k,
            epoch: *self.current_epoch()?,
            regressor: z,
            prediction,
            coefficients: self.estimator.as_ref()?.coefficients(),
        })
    }
}

/// Output of a complete online run.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfRun {
    pub schedule: EpochSchedule,
    /// Predictions for steps `first_step ..= final_step`.
    pub predictions: Vec<DVector<f64>>,
    pub snapshots: Vec<EpochSnapshot>,
}

impl OpfRun {
    pub fn first_step(&self) -> usize {
        self.schedule.first_step()
    }

    pub fn prediction_at(&self, k: usize) -> Option<&DVector<f64>> {
        k.checked_sub(self.first_step()).and_then(|i| self.predictions.get(i))
    }
}

fn drive<F>(observations: &[DVector<f64>], params: &OpfParams, forgetting: Forgetting, mut visit: F) -> Result<OpfRun>
where
    F: FnMut(&StepView<'_>),
{
    let mut session = OnlineSession::with_forgetting(*params, forgetting)?;
    let needed = session.schedule().final_step() + 1;
    if observations.len() < needed {
        return Err(Error::Parameter(format!(
            "stream of length {} is too short; the schedule needs {needed} observations",
            observations.len()
        )));
    }
    let mut predictions = Vec::with_capacity(needed - session.schedule().first_step());
    for (k, y) in observations[..needed].iter().enumerate() {
        if session.expects_prediction() {
            predictions.push(session.predict()?);
            if let Some(view) = session.pending_view(k) {
                visit(&view);
            }
        }
        session.observe(y.clone())?;
    }
    Ok(OpfRun { schedule: session.schedule.clone(), predictions, snapshots: session.snapshots })
}

/// Runs balanced forgetting (`γ = params.gamma`) over a stream.
pub fn run_opf(observations: &[DVector<f64>], params: &OpfParams) -> Result<OpfRun> {
    drive(observations, params, Forgetting::Balanced { gamma: params.gamma }, |_| {})
}

/// Like [`run_opf`], calling `visit` after every prediction.
pub fn run_opf_with<F>(observations: &[DVector<f64>], params: &OpfParams, forgetting: Forgetting, visit: F) -> Result<OpfRun>
where
    F: FnMut(&StepView<'_>),
{
    drive(observations, params, forgetting, visit)
}

/// Uniform exponential forgetting baseline on the same epoch structure.
pub fn run_uniform_forgetting(observations: &[DVector<f64>], params: &OpfParams, alpha: f64) -> Result<OpfRun> {
    drive(observations, params, Forgetting::Uniform { alpha }, |_| {})
}
