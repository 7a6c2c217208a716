use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kalman::SteadyFilter;
use crate::sysmodel::SystemModel;

/// Truncation bias `b_{k,p} = C(A−LC)^p x̂_{k−p}` for `k ≥ p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationBias {
    pub p: usize,
    /// Entry `i` is `b_{p+i}`.
    pub values: Vec<DVector<f64>>,
}

impl TruncationBias {
    pub fn get(&self, k: usize) -> Option<&DVector<f64>> {
        k.checked_sub(self.p).and_then(|i| self.values.get(i))
    }
}

/// Bias sequence from the Kalman states `x̂_0, x̂_1, …`.
pub fn truncation_bias(
    model: &SystemModel,
    filter: &SteadyFilter,
    states: &[DVector<f64>],
    p: usize,
) -> Result<TruncationBias> {
    let n = model.state_dim();
    if let Some(bad) = states.iter().find(|x| x.len() != n) {
        return Err(Error::Dimension(format!("state of length {}, expected {n}", bad.len())));
    }
    let closed = filter.closed_loop(model);
    let mut power = nalgebra::DMatrix::identity(n, n);
    for _ in 0..p {
        power = &closed * power;
    }
    let map = &model.c * power;
    let values = states.iter().take(states.len().saturating_sub(p)).map(|x| &map * x).collect();
    Ok(TruncationBias { p, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{run_steady_predictor, solve_dare};
    use crate::presets;
    use crate::sysmodel::simulate;

    #[test]
    fn noiseless_zero_start_has_no_bias() {
        let model = presets::tracking_model();
        let f = solve_dare(&model, 1e-12, 100_000).unwrap();
        let zero = vec![DVector::zeros(3); 50];
        let out = crate::kalman::run_steady_predictor_on(&f, &model, &zero).unwrap();
        let b = truncation_bias(&model, &f, &out.states, 4).unwrap();
        assert!(b.values.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn bias_decays_with_horizon() {
        let model = presets::tracking_model();
        let f = solve_dare(&model, 1e-12, 100_000).unwrap();
        let traj = simulate(&model, 400, 11, None).unwrap();
        let out = run_steady_predictor(&f, &model, &traj).unwrap();
        let short = truncation_bias(&model, &f, &out.states, 5).unwrap();
        let long = truncation_bias(&model, &f, &out.states, 60).unwrap();
        assert_eq!(long.values.len(), 341);
        assert!(long.get(399).unwrap().norm() < 1e-6 * short.get(399).unwrap().norm().max(1.0));
        assert!(long.get(59).is_none());
    }

    #[test]
    fn matches_explicit_power() {
        let model = presets::illconditioned_model();
        let f = solve_dare(&model, 1e-12, 100_000).unwrap();
        let traj = simulate(&model, 30, 2, None).unwrap();
        let out = run_steady_predictor(&f, &model, &traj).unwrap();
        let b = truncation_bias(&model, &f, &out.states, 3).unwrap();
        let cl = f.closed_loop(&model);
        let expected = &model.c * &cl * &cl * &cl * &out.states[10];
        assert!((b.get(13).unwrap() - expected).norm() < 1e-12);
    }
}
