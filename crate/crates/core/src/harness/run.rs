use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::diagnostics::{
    regret_series, truncation_bias, whiteness_check, DecompositionTracker, ExcitationTracker, FactorReport,
    RegretRecord, TruncationBias, WhitenessReport, REGRET_IDENTITY_TOL, WHITENESS_LAGS,
};
use crate::error::{Error, Result};
use crate::kalman::{markov_params, run_steady_predictor, solve_dare, FilterOutput, MarkovParams, SteadyFilter};
use crate::kalman::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::linalg;
use crate::opf::{
    epoch_schedule, run_opf_with, run_uniform_forgetting, EpochSchedule, Forgetting, OpfParams, ScalingMatrix, StepView,
};
use crate::sysmodel::{replicate_seed, simulate, spectral_info, validate_model, SpectralInfo};

use super::config::{ExperimentConfig, Factor, GridEntry, Method};

/// A boundary loss above this multiple of the trailing median is a spike.
pub const SPIKE_FACTOR: f64 = 10.0;
/// Steps before an epoch boundary used for the trailing median.
pub const SPIKE_WINDOW: usize = 100;
/// Innovations before this step are excluded from the whiteness check.
pub const WHITENESS_START: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

/// Regret at the last step of an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochEnd {
    pub epoch: usize,
    pub k: usize,
    pub p: usize,
    pub regret: f64,
}

/// Decomposition factors at the end of an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionRow {
    pub k: usize,
    pub p: usize,
    pub factors: FactorReport,
    /// Accumulation increments summed over all epochs so far.
    pub accum_sum: f64,
    /// `M p` with `M = λ max_t ‖C(A−LC)^t L‖² / γ^{2t}`, an upper bound on
    /// the regularization factor.
    pub reg_bound: f64,
}

/// Extra model-known statistics of an opf run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecompositionSummary {
    pub rows: Vec<DecompositionRow>,
    /// Mean `‖b_k‖` over the last epoch.
    pub bias_mean: f64,
    /// Mean `‖B Z̄ᵀ V̄⁻¹ Z_k − b_k‖` over the last epoch.
    pub canceled_bias_mean: f64,
    /// Worst `‖reconstructed gap − (ỹ − ŷ)‖ / max(‖ỹ‖, ‖ŷ‖, ‖ỹ − ŷ‖)` over the run.
    pub gap_error: f64,
    /// The constant `M` behind `reg_bound`.
    pub reg_constant: f64,
}

/// Loss jumps at epoch boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpikeReport {
    /// Largest boundary loss over its trailing median.
    pub max_ratio: f64,
    /// Boundaries whose ratio exceeds [`SPIKE_FACTOR`].
    pub count: usize,
}

/// Outcome of one grid entry on one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config_hash: String,
    pub seed: u64,
    pub grid_index: usize,
    pub method: String,
    pub kind: Method,
    /// Resolved `γ` or `α`; `None` for the Kalman baseline.
    pub factor: Option<f64>,
    pub beta: f64,
    pub lambda: f64,
    pub error: Option<String>,
    pub record: RegretRecord,
    pub epoch_ends: Vec<EpochEnd>,
    pub decomposition: Option<DecompositionSummary>,
    pub spikes: SpikeReport,
    pub pe_ratio: f64,
    pub whiteness: Option<WhitenessReport>,
    pub identity_error: f64,
    pub max_inverse_defect: f64,
    pub wall_clock: Duration,
}

impl RunResult {
    fn failed(cfg_hash: &str, seed: u64, grid_index: usize, entry: &GridEntry, factor: Option<f64>, beta: f64, lambda: f64, err: &Error) -> Self {
        Self {
            config_hash: cfg_hash.to_string(),
            seed,
            grid_index,
            method: entry.label(),
            kind: entry.method,
            factor,
            beta,
            lambda,
            error: Some(format!("{}: {err}", err.kind())),
            record: RegretRecord::default(),
            epoch_ends: Vec::new(),
            decomposition: None,
            spikes: SpikeReport::default(),
            pe_ratio: f64::NAN,
            whiteness: None,
            identity_error: f64::NAN,
            max_inverse_defect: f64::NAN,
            wall_clock: Duration::ZERO,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn final_regret(&self) -> Option<f64> {
        self.record.final_regret()
    }
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub filter: SteadyFilter,
    pub spectral: SpectralInfo,
    /// Epoch schedule for the experiment-wide `β`.
    pub schedule: EpochSchedule,
    /// Sorted by `(seed, grid index)`.
    pub runs: Vec<RunResult>,
    pub workers: usize,
    pub wall_clock: Duration,
}

impl ExperimentResult {
    /// Successful runs of one grid label, in seed order.
    pub fn runs_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a RunResult> + 'a {
        self.runs.iter().filter(move |r| r.method == label && r.ok())
    }

    /// Final regrets of one grid label, in seed order.
    pub fn final_regrets(&self, label: &str) -> Vec<f64> {
        self.runs_for(label).filter_map(RunResult::final_regret).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(|r| !r.ok())
    }

    /// Median and quartiles of the final regret per grid entry.
    pub fn method_summaries(&self) -> Vec<MethodSummary> {
        self.config
            .grid
            .iter()
            .map(|entry| {
                let label = entry.label();
                let regrets = self.final_regrets(&label);
                let failed = self.runs.iter().filter(|r| r.method == label && !r.ok()).count();
                let q = |f| quantile(&regrets, f);
                MethodSummary { method: label, runs: regrets.len(), failed, q1: q(0.25), median: q(0.5), q3: q(0.75) }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub failed: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linearly interpolated sample quantile; NaN for empty input.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    hash: &'a str,
    filter: &'a SteadyFilter,
    spectral: &'a SpectralInfo,
}

/// Runs every grid entry on every seed; seeds share one trajectory across
/// entries. Failed runs are recorded and do not stop the others.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentResult> {
    let started = Instant::now();
    config.validate()?;
    validate_model(&config.model)?.into_result()?;
    let filter = solve_dare(&config.model, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let spectral = spectral_info(&config.model, &filter)?;
    let schedule = epoch_schedule(&config.params_for(&config.grid[0], 1.0))?;
    let hash = config.hash();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    let shared = Shared { cfg: config, hash: &hash, filter: &filter, spectral: &spectral };
    let seeds: Vec<u64> = (0..config.seeds).map(|i| replicate_seed(config.base_seed, i)).collect();
    let mut runs: Vec<RunResult> =
        pool.install(|| seeds.par_iter().flat_map_iter(|&seed| run_seed(&shared, seed)).collect());
    runs.sort_by_key(|r| (r.seed, r.grid_index));
    Ok(ExperimentResult {
        config: config.clone(),
        config_hash: hash,
        filter,
        spectral,
        schedule,
        runs,
        workers: pool.current_num_threads(),
        wall_clock: started.elapsed(),
    })
}

fn resolve_factor(entry: &GridEntry, spectral: &SpectralInfo) -> Option<f64> {
    match (entry.method, entry.factor) {
        (Method::Kalman, _) => None,
        (_, Factor::Auto) => Some(spectral.rho_closed),
        (_, Factor::Value(v)) => Some(v),
    }
}

/// Per-seed data shared by all grid entries.
struct SeedData {
    observations: Vec<DVector<f64>>,
    kalman: FilterOutput,
    whiteness: Option<WhitenessReport>,
    pe: HashMap<usize, f64>,
    bias: HashMap<usize, TruncationBias>,
}

fn run_seed(shared: &Shared<'_>, seed: u64) -> Vec<RunResult> {
    let cfg = shared.cfg;
    let final_step = cfg.final_step();
    let prepared = simulate(&cfg.model, final_step, seed, None).and_then(|traj| {
        let kalman = run_steady_predictor(shared.filter, &cfg.model, &traj)?;
        let start = WHITENESS_START.min(final_step / 2);
        let whiteness = whiteness_check(&kalman.innovations[start..=final_step], WHITENESS_LAGS).ok();
        Ok(SeedData { observations: traj.observations, kalman, whiteness, pe: HashMap::new(), bias: HashMap::new() })
    });
    let mut data = match prepared {
        Ok(d) => d,
        Err(e) => {
            return cfg
                .grid
                .iter()
                .enumerate()
                .map(|(i, entry)| {
                    let p = cfg.params_for(entry, 1.0);
                    RunResult::failed(shared.hash, seed, i, entry, resolve_factor(entry, shared.spectral), p.beta, p.lambda, &e)
                })
                .collect()
        }
    };
    cfg.grid
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let factor = resolve_factor(entry, shared.spectral);
            let params = cfg.params_for(entry, factor.unwrap_or(1.0));
            run_method(shared, &mut data, seed, i, entry, factor, &params).unwrap_or_else(|e| {
                RunResult::failed(shared.hash, seed, i, entry, factor, params.beta, params.lambda, &e)
            })
        })
        .collect()
}

fn spike_report(losses: &[f64], first_step: usize, schedule: &EpochSchedule) -> SpikeReport {
    let mut report = SpikeReport::default();
    for epoch in schedule.epochs.iter().skip(1) {
        let i = epoch.start - first_step;
        let window = &losses[i.saturating_sub(SPIKE_WINDOW)..i];
        let trailing = median(window);
        let ratio = if trailing > 0.0 { losses[i] / trailing } else { f64::INFINITY };
        report.max_ratio = report.max_ratio.max(ratio);
        report.count += (ratio > SPIKE_FACTOR) as usize;
    }
    report
}

fn run_method(
    shared: &Shared<'_>,
    data: &mut SeedData,
    seed: u64,
    grid_index: usize,
    entry: &GridEntry,
    factor: Option<f64>,
    params: &OpfParams,
) -> Result<RunResult> {
    let cfg = shared.cfg;
    let started = Instant::now();
    let schedule = epoch_schedule(params)?;
    let (first, last) = (schedule.first_step(), schedule.final_step());
    if entry.method == Method::Opf && cfg.decomposition {
        for e in &schedule.epochs {
            if !data.bias.contains_key(&e.p) {
                let b = truncation_bias(&cfg.model, shared.filter, &data.kalman.states, e.p)?;
                data.bias.insert(e.p, b);
            }
        }
    }
    let obs = &data.observations;

    let mut decomposition = None;
    let mut max_inverse_defect = 0.0;
    let predictions = match entry.method {
        Method::Kalman => data.kalman.predictions[first..=last].to_vec(),
        Method::Uniform => {
            let run = run_uniform_forgetting(obs, params, factor.expect("uniform has alpha"))?;
            run.predictions
        }
        Method::Opf => {
            let gamma = factor.expect("opf has gamma");
            let forgetting = Forgetting::Balanced { gamma };
            let run = if cfg.decomposition {
                let mut tracker = Decomposer::new(shared, obs, &data.kalman, &data.bias, params, &schedule)?;
                let run = run_opf_with(obs, params, forgetting, |v| tracker.visit(v))?;
                decomposition = Some(tracker.finish()?);
                run
            } else {
                run_opf_with(obs, params, forgetting, |_| {})?
            };
            max_inverse_defect = run.snapshots.iter().map(|s| s.max_inverse_defect).fold(0.0, f64::max);
            run.predictions
        }
    };

    let record = regret_series(&obs[first..=last], &predictions, &data.kalman.predictions[first..=last], first)?;
    record.check_identity(REGRET_IDENTITY_TOL)?;
    let epoch_ends = schedule
        .epochs
        .iter()
        .map(|e| EpochEnd { epoch: e.index, k: e.end(), p: e.p, regret: record.regret_at(e.end()).expect("in range") })
        .collect();
    let p_final = schedule.epochs.last().expect("non-empty schedule").p;
    let sigma_r = shared.spectral.sigma_r;
    let pe_ratio = *data
        .pe
        .entry(p_final)
        .or_insert_with(|| ExcitationTracker::new(cfg.model.output_dim(), p_final).ratio(obs, last, sigma_r));

    Ok(RunResult {
        config_hash: shared.hash.to_string(),
        seed,
        grid_index,
        method: entry.label(),
        kind: entry.method,
        factor,
        beta: params.beta,
        lambda: params.lambda,
        error: None,
        spikes: spike_report(&record.online_loss, first, &schedule),
        identity_error: record.identity_error(),
        record,
        epoch_ends,
        decomposition,
        pe_ratio,
        whiteness: data.whiteness.clone(),
        max_inverse_defect,
        wall_clock: started.elapsed(),
    })
}

/// Feeds each opf prediction through the streaming decomposition.
struct Decomposer<'a> {
    shared: &'a Shared<'a>,
    observations: &'a [DVector<f64>],
    kalman: &'a FilterOutput,
    bias: &'a HashMap<usize, TruncationBias>,
    markov: MarkovParams,
    params: OpfParams,
    last_epoch: usize,
    active: Option<(usize, DecompositionTracker)>,
    accum_done: f64,
    summary: DecompositionSummary,
    bias_sum: f64,
    canceled_sum: f64,
    last_epoch_steps: usize,
    error: Option<Error>,
}

impl<'a> Decomposer<'a> {
    fn new(
        shared: &'a Shared<'a>,
        observations: &'a [DVector<f64>],
        kalman: &'a FilterOutput,
        bias: &'a HashMap<usize, TruncationBias>,
        params: &OpfParams,
        schedule: &EpochSchedule,
    ) -> Result<Self> {
        let max_p = schedule.max_p();
        let markov = markov_params(&shared.cfg.model, shared.filter, max_p)?;
        let gamma = params.gamma;
        let reg_constant = params.lambda
            * (0..max_p)
                .map(|t| linalg::spectral_norm(markov.block_at_power(t)).powi(2) / gamma.powi(2 * t as i32))
                .fold(0.0, f64::max);
        Ok(Self {
            shared,
            observations,
            kalman,
            bias,
            markov,
            params: *params,
            last_epoch: schedule.epochs.len() - 1,
            active: None,
            accum_done: 0.0,
            summary: DecompositionSummary { reg_constant, ..Default::default() },
            bias_sum: 0.0,
            canceled_sum: 0.0,
            last_epoch_steps: 0,
            error: None,
        })
    }

    fn visit(&mut self, view: &StepView<'_>) {
        if self.error.is_none() {
            if let Err(e) = self.try_visit(view) {
                self.error = Some(e);
            }
        }
    }

    fn try_visit(&mut self, view: &StepView<'_>) -> Result<()> {
        let epoch = view.epoch;
        let p = epoch.p;
        let bias = &self.bias[&p];
        if self.active.as_ref().map(|(i, _)| *i) != Some(epoch.index) {
            let scaling = ScalingMatrix::new(p, self.params.gamma, self.shared.cfg.model.output_dim())?;
            let markov = MarkovParams { p, blocks: self.markov.blocks[self.markov.p - p..].to_vec() };
            let tracker = DecompositionTracker::start(
                self.observations,
                &self.kalman.innovations,
                bias,
                &scaling,
                &markov,
                self.params.lambda,
                epoch.start,
            )?;
            self.active = Some((epoch.index, tracker));
        }
        let (_, tracker) = self.active.as_mut().expect("tracker active");
        let terms = tracker.step(self.observations, &self.kalman.innovations, bias)?;
        debug_assert_eq!(terms.k, view.k);
        let direct = view.prediction - &self.kalman.predictions[view.k];
        // ỹ − ŷ is a small difference of large vectors; measure against the operands
        let scale = view.prediction.norm().max(self.kalman.predictions[view.k].norm()).max(direct.norm());
        let mismatch = (terms.gap() - &direct).norm() / scale.max(f64::MIN_POSITIVE);
        self.summary.gap_error = self.summary.gap_error.max(mismatch);
        if epoch.index == self.last_epoch {
            self.bias_sum += terms.bias.norm();
            self.canceled_sum += terms.bias_term.norm();
            self.last_epoch_steps += 1;
        }
        if view.k == epoch.end() {
            let accum_sum = self.accum_done + tracker.accumulation();
            self.accum_done = accum_sum;
            self.summary.rows.push(DecompositionRow {
                k: view.k,
                p,
                factors: tracker.report(),
                accum_sum,
                reg_bound: self.summary.reg_constant * p as f64,
            });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<DecompositionSummary> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let n = self.last_epoch_steps.max(1) as f64;
        self.summary.bias_mean = self.bias_sum / n;
        self.summary.canceled_bias_mean = self.canceled_sum / n;
        Ok(self.summary)
    }
}
