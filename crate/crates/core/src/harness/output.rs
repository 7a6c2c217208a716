use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::diagnostics::regret_order_ratio;
use crate::error::Result;

use super::run::ExperimentResult;

pub const REGRET_CSV: &str = "regret.csv";
pub const DECOMPOSITION_CSV: &str = "decomposition.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const METADATA_JSON: &str = "run_metadata.json";

#[derive(Serialize)]
struct RegretRow<'a> {
    k: usize,
    seed: u64,
    method: &'a str,
    gamma_or_alpha: Option<f64>,
    online_loss: f64,
    kalman_loss: f64,
    cum_regret: f64,
}

#[derive(Serialize)]
struct DecompositionCsvRow<'a> {
    k: usize,
    seed: u64,
    method: &'a str,
    reg_factor: f64,
    regress_factor: f64,
    bias_factor: f64,
    accum_sum: f64,
    #[serde(rename = "logdet_V")]
    logdet_v: f64,
    trace_term: f64,
    p: usize,
    gamma_or_alpha: Option<f64>,
    reg_bound: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    config_hash: &'a str,
    seed: u64,
    method: &'a str,
    gamma_or_alpha: Option<f64>,
    beta: f64,
    lambda: f64,
    status: String,
    final_k: Option<usize>,
    final_regret: Option<f64>,
    epoch_ends: String,
    epoch_regrets: String,
    ratio_ln1: String,
    ratio_ln2: String,
    ratio_ln3: String,
    bias_mean: Option<f64>,
    canceled_bias_mean: Option<f64>,
    gap_error: Option<f64>,
    pe_ratio: f64,
    whiteness_max: Option<f64>,
    whiteness_threshold: Option<f64>,
    identity_error: f64,
    max_inverse_defect: f64,
    max_boundary_spike: f64,
    boundary_spikes: usize,
}

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Writes `regret.csv`, `decomposition.csv`, `summary.csv` and
/// `run_metadata.json` into `dir`. Only the metadata file carries timings.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut regret = csv::Writer::from_path(dir.join(REGRET_CSV))?;
    let mut decomposition = csv::Writer::from_path(dir.join(DECOMPOSITION_CSV))?;
    let mut summary = csv::Writer::from_path(dir.join(SUMMARY_CSV))?;
    if result.runs.iter().all(|r| r.decomposition.is_none()) {
        // keep the header even when no run produced decomposition rows
        decomposition.write_record([
            "k", "seed", "method", "reg_factor", "regress_factor", "bias_factor", "accum_sum", "logdet_V", "trace_term",
            "p", "gamma_or_alpha", "reg_bound",
        ])?;
    }
    if result.runs.iter().all(|r| !r.ok()) {
        regret.write_record(["k", "seed", "method", "gamma_or_alpha", "online_loss", "kalman_loss", "cum_regret"])?;
    }

    for run in &result.runs {
        let rec = &run.record;
        for i in 0..rec.len() {
            regret.serialize(RegretRow {
                k: rec.first_step + i,
                seed: run.seed,
                method: &run.method,
                gamma_or_alpha: run.factor,
                online_loss: rec.online_loss[i],
                kalman_loss: rec.kalman_loss[i],
                cum_regret: rec.cum_regret[i],
            })?;
        }
        if let Some(d) = &run.decomposition {
            for row in &d.rows {
                decomposition.serialize(DecompositionCsvRow {
                    k: row.k,
                    seed: run.seed,
                    method: &run.method,
                    reg_factor: row.factors.reg_factor,
                    regress_factor: row.factors.regress_factor,
                    bias_factor: row.factors.bias_factor,
                    accum_sum: row.accum_sum,
                    logdet_v: row.factors.logdet_vtilde,
                    trace_term: row.factors.trace_term,
                    p: row.p,
                    gamma_or_alpha: run.factor,
                    reg_bound: row.reg_bound,
                })?;
            }
        }
        let ends: Vec<usize> = run.epoch_ends.iter().map(|e| e.k).collect();
        let ratios = if run.ok() { regret_order_ratio(rec, &ends, &[1, 2, 3])? } else { Vec::new() };
        let ratio_col = |i: usize| join(ratios.iter().map(|r| r.ratios[i]));
        summary.serialize(SummaryRow {
            config_hash: &run.config_hash,
            seed: run.seed,
            method: &run.method,
            gamma_or_alpha: run.factor,
            beta: run.beta,
            lambda: run.lambda,
            status: run.error.clone().unwrap_or_else(|| "ok".into()),
            final_k: rec.last_step(),
            final_regret: rec.final_regret(),
            epoch_ends: join(&ends),
            epoch_regrets: join(run.epoch_ends.iter().map(|e| e.regret)),
            ratio_ln1: ratio_col(0),
            ratio_ln2: ratio_col(1),
            ratio_ln3: ratio_col(2),
            bias_mean: run.decomposition.as_ref().map(|d| d.bias_mean),
            canceled_bias_mean: run.decomposition.as_ref().map(|d| d.canceled_bias_mean),
            gap_error: run.decomposition.as_ref().map(|d| d.gap_error),
            pe_ratio: run.pe_ratio,
            whiteness_max: run.whiteness.as_ref().map(|w| w.worst()),
            whiteness_threshold: run.whiteness.as_ref().map(|w| w.threshold),
            identity_error: run.identity_error,
            max_inverse_defect: run.max_inverse_defect,
            max_boundary_spike: run.spikes.max_ratio,
            boundary_spikes: run.spikes.count,
        })?;
    }
    regret.flush()?;
    decomposition.flush()?;
    summary.flush()?;

    let spec = &result.spectral;
    let meta = json!({
        "name": result.config.name,
        "config_hash": result.config_hash,
        "config": result.config.canonical(),
        "seeds": result.config.seeds,
        "base_seed": result.config.base_seed,
        "workers": result.workers,
        "wall_clock_seconds": result.wall_clock.as_secs_f64(),
        "filter": {
            "dare_iterations": result.filter.iterations,
            "dare_residual": result.filter.residual,
            "rho_a": spec.rho_a,
            "rho_closed_loop": spec.rho_closed,
            "kappa": spec.kappa,
            "sigma_r": spec.sigma_r,
            "sigma_rbar": spec.sigma_rbar,
            "gamma_auto": spec.rho_closed,
            "beta_from_model": crate::opf::compute_beta(spec).ok(),
        },
        "epochs": result.schedule.epochs.iter().map(|e| json!({"index": e.index, "start": e.start, "end": e.end(), "p": e.p})).collect::<Vec<_>>(),
        "methods": result.method_summaries().iter().map(|m| json!({
            "method": m.method, "runs": m.runs, "failed": m.failed,
            "final_regret_q1": m.q1, "final_regret_median": m.median, "final_regret_q3": m.q3,
        })).collect::<Vec<_>>(),
        "runs": result.runs.iter().map(|r| json!({
            "seed": r.seed, "method": r.method, "status": r.error.as_deref().unwrap_or("ok"),
            "wall_clock_seconds": r.wall_clock.as_secs_f64(),
        })).collect::<Vec<_>>(),
    });
    fs::write(dir.join(METADATA_JSON), serde_json::to_string_pretty(&meta).expect("serializable") + "\n")?;
    Ok(())
}
