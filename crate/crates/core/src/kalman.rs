//! Steady-state Kalman predictor: Riccati iteration, innovations and the
//! closed-loop Markov parameters `C (A − LC)^t L`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sysmodel::{SystemModel, Trajectory};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Converged Riccati solution together with the gain it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyFilter {
    pub p: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// Innovation covariance `C P Cᵀ + R`.
    pub rbar: DMatrix<f64>,
    pub iterations: usize,
    /// `‖P − Φ(P)‖_F` for the Riccati map `Φ`.
    pub residual: f64,
}

impl SteadyFilter {
    /// `A − L C`.
    pub fn closed_loop(&self, model: &SystemModel) -> DMatrix<f64> {
        &model.a - &self.l * &model.c
    }

    pub fn closed_loop_radius(&self, model: &SystemModel) -> Result<f64> {
        linalg::spectral_radius(&self.closed_loop(model))
    }
}

/// Gain `A P Cᵀ (C P Cᵀ + R)⁻¹` and innovation covariance for a given `P`.
fn gain(model: &SystemModel, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = linalg::symmetrize(&(&model.c * p * model.c.transpose() + &model.r));
    let ch = linalg::cholesky(&s, "innovation covariance")?;
    // S symmetric: L = (S⁻¹ C P Aᵀ)ᵀ
    let l = ch.solve(&(&model.c * p * model.a.transpose())).transpose();
    Ok((l, s))
}

/// One step of the Riccati recursion, symmetrized.
pub fn riccati_step(model: &SystemModel, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    model.check_dimensions()?;
    if p.shape() != model.a.shape() {
        return Err(Error::Dimension(format!("P is {:?}, expected {:?}", p.shape(), model.a.shape())));
    }
    let (l, _) = gain(model, p)?;
    // A P Cᵀ S⁻¹ C P Aᵀ = L (C P Aᵀ)
    let next = &model.a * p * model.a.transpose() + &model.q - &l * (&model.c * p * model.a.transpose());
    Ok(linalg::symmetrize(&next))
}

/// Fixed-point iteration of the Riccati recursion starting from `P₀ = Q`.
///
/// Stops once `‖P_{k+1} − P_k‖_F < tol · max(1, ‖P_{k+1}‖_F)`.
pub fn solve_dare(model: &SystemModel, tol: f64, max_iter: usize) -> Result<SteadyFilter> {
    model.check_dimensions()?;
    if !(tol > 0.0) {
        return Err(Error::Parameter("tol must be positive".into()));
    }
    let mut p = linalg::symmetrize(&model.q);
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = riccati_step(model, &p)?;
        change = (&next - &p).norm();
        p = next;
        iterations += 1;
        if change < tol * p.norm().max(1.0) {
            break;
        }
    }
    if !(change < tol * p.norm().max(1.0)) {
        return Err(Error::NotConverged { iterations, last_change: change });
    }
    let residual = (&p - riccati_step(model, &p)?).norm();
    let (l, rbar) = gain(model, &p)?;
    let filter = SteadyFilter { p, l, rbar, iterations, residual };
    let rho = filter.closed_loop_radius(model)?;
    if rho >= 1.0 {
        return Err(Error::Numerical(format!("closed loop is not stable: rho(A - LC) = {rho:.6}")));
    }
    Ok(filter)
}

/// Steady-state predictor run over a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// `ŷ_k = C x̂_k`.
    pub predictions: Vec<DVector<f64>>,
    /// `e_k = y_k − ŷ_k`.
    pub innovations: Vec<DVector<f64>>,
    /// `x̂_k`, starting from `x̂_0 = 0`.
    pub states: Vec<DVector<f64>>,
}

pub fn run_steady_predictor(filter: &SteadyFilter, model: &SystemModel, traj: &Trajectory) -> Result<FilterOutput> {
    run_steady_predictor_on(filter, model, &traj.observations)
}

/// Same as [`run_steady_predictor`] but on a bare observation sequence.
pub fn run_steady_predictor_on(
    filter: &SteadyFilter,
    model: &SystemModel,
    observations: &[DVector<f64>],
) -> Result<FilterOutput> {
    let m = model.output_dim();
    if let Some(bad) = observations.iter().find(|y| y.len() != m) {
        return Err(Error::Dimension(format!("observation of length {}, expected {m}", bad.len())));
    }
    let len = observations.len();
    let mut predictions = Vec::with_capacity(len);
    let mut innovations = Vec::with_capacity(len);
    let mut states = Vec::with_capacity(len);
    let mut x = DVector::zeros(model.state_dim());
    for y in observations {
        let y_hat = &model.c * &x;
        let e = y - &y_hat;
        let next = &model.a * &x + &filter.l * &e;
        states.push(std::mem::replace(&mut x, next));
        predictions.push(y_hat);
        innovations.push(e);
    }
    Ok(FilterOutput { predictions, innovations, states })
}

/// Closed-loop Markov parameters, most-delayed block first:
/// `[C(A−LC)^{p−1}L, …, C(A−LC)L, CL]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovParams {
    pub p: usize,
    pub blocks: Vec<DMatrix<f64>>,
}

impl MarkovParams {
    /// Blocks stacked horizontally into an `m × mp` matrix `G_p`.
    pub fn as_matrix(&self) -> DMatrix<f64> {
        let m = self.blocks[0].nrows();
        let mut g = DMatrix::zeros(m, m * self.p);
        for (i, b) in self.blocks.iter().enumerate() {
            g.view_mut((0, i * m), (m, m)).copy_from(b);
        }
        g
    }

    /// `C (A − LC)^t L` for `t = 0..p`.
    pub fn block_at_power(&self, t: usize) -> &DMatrix<f64> {
        &self.blocks[self.p - 1 - t]
    }

    /// Spectral norms of the blocks, ordered by power `t = 0..p`.
    pub fn norms_by_power(&self) -> Vec<f64> {
        (0..self.p).map(|t| linalg::spectral_norm(self.block_at_power(t))).collect()
    }

    /// Smallest `M` with `‖C(A−LC)^t L‖₂ ≤ M ρ^t` for every available `t`.
    pub fn decay_constant(&self, rho: f64) -> f64 {
        self.norms_by_power()
            .iter()
            .enumerate()
            .map(|(t, n)| n / rho.powi(t as i32))
            .fold(0.0, f64::max)
    }
}

pub fn markov_params(model: &SystemModel, filter: &SteadyFilter, p: usize) -> Result<MarkovParams> {
    if p == 0 {
        return Err(Error::Parameter("Markov horizon p must be at least 1".into()));
    }
    let closed = filter.closed_loop(model);
    let mut blocks = Vec::with_capacity(p);
    let mut power_l = filter.l.clone();
    for _ in 0..p {
        blocks.push(&model.c * &power_l);
        power_l = &closed * power_l;
    }
    blocks.reverse();
    Ok(MarkovParams { p, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::sysmodel::simulate;
    use approx::assert_relative_eq;

    fn scalar_fixed_point() -> f64 {
        // positive root of P² − 0.25 P − 1 = 0
        (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0
    }

    #[test]
    fn step_with_zero_dynamics_returns_q() {
        let m = SystemModel::scalar(0.0, 1.0, 1.0, 1.0);
        for pk in [0.0, 0.3, 7.0] {
            let next = riccati_step(&m, &DMatrix::from_element(1, 1, pk)).unwrap();
            assert_eq!(next[(0, 0)], 1.0);
        }
    }

    #[test]
    fn step_from_zero_leaves_q() {
        let m = SystemModel::scalar(0.5, 1.0, 1.0, 1.0);
        let next = riccati_step(&m, &DMatrix::zeros(1, 1)).unwrap();
        assert_relative_eq!(next[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn step_at_fixed_point_is_stationary() {
        let m = SystemModel::scalar(0.5, 1.0, 1.0, 1.0);
        let p = scalar_fixed_point();
        assert_relative_eq!(p, 1.1327822, epsilon = 1e-7);
        let next = riccati_step(&m, &DMatrix::from_element(1, 1, p)).unwrap();
        assert_relative_eq!(next[(0, 0)], p, epsilon = 1e-12);
    }

    #[test]
    fn scalar_dare() {
        let m = SystemModel::scalar(0.5, 1.0, 1.0, 1.0);
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let p = scalar_fixed_point();
        assert_relative_eq!(f.p[(0, 0)], p, epsilon = 1e-10);
        assert_relative_eq!(f.l[(0, 0)], 0.5 * p / (p + 1.0), epsilon = 1e-10);
        assert_relative_eq!(f.l[(0, 0)], 0.265564, epsilon = 1e-6);
        assert_relative_eq!(f.rbar[(0, 0)], p + 1.0, epsilon = 1e-10);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn zero_dynamics_dare_is_exact() {
        let m = SystemModel::scalar(0.0, 1.0, 3.0, 2.0);
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_eq!(f.p[(0, 0)], 3.0);
        assert_eq!(f.l[(0, 0)], 0.0);
        assert_eq!(f.rbar[(0, 0)], 5.0);
    }

    #[test]
    fn undetectable_system_does_not_converge() {
        // unobserved unit-root mode with process noise: P grows without bound
        let m = SystemModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(matches!(solve_dare(&m, 1e-12, 2000), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn tracking_filter_invariants() {
        let m = presets::tracking_model();
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(linalg::asymmetry(&f.p) < 1e-10);
        assert!(linalg::min_sym_eigenvalue(&f.p) >= 0.0);
        assert!(f.residual < 1e-9 * f.p.norm().max(1.0));
        assert!(f.closed_loop_radius(&m).unwrap() < 1.0);
    }

    #[test]
    fn zero_noise_predictor_is_silent() {
        let mut m = SystemModel::scalar(0.5, 1.0, 1.0, 1.0);
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        m.q[(0, 0)] = 0.0;
        m.r[(0, 0)] = 0.0;
        let t = simulate(&m, 20, 1, None).unwrap();
        let out = run_steady_predictor(&f, &m, &t).unwrap();
        assert!(out.predictions.iter().chain(&out.innovations).all(|v| v[0] == 0.0));
    }

    #[test]
    fn zero_gain_innovation_is_observation() {
        let m = SystemModel::scalar(0.0, 1.0, 3.0, 2.0);
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let t = simulate(&m, 50, 9, None).unwrap();
        let out = run_steady_predictor(&f, &m, &t).unwrap();
        for (k, y) in t.observations.iter().enumerate() {
            assert_eq!(out.predictions[k][0], 0.0);
            assert_eq!(out.innovations[k], *y);
        }
    }

    #[test]
    fn output_identities_hold_exactly() {
        let m = presets::tracking_model();
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let t = simulate(&m, 100, 5, None).unwrap();
        let out = run_steady_predictor(&f, &m, &t).unwrap();
        for k in 0..=100 {
            assert_eq!(out.innovations[k], &t.observations[k] - &out.predictions[k]);
            assert_eq!(out.predictions[k], &m.c * &out.states[k]);
        }
    }

    #[test]
    fn markov_single_block_is_cl() {
        let m = presets::tracking_model();
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let g = markov_params(&m, &f, 1).unwrap();
        assert_eq!(g.blocks.len(), 1);
        assert_eq!(g.blocks[0], &m.c * &f.l);
    }

    #[test]
    fn markov_scalar_two_blocks() {
        let m = SystemModel::scalar(0.5, 1.0, 1.0, 1.0);
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let g = markov_params(&m, &f, 2).unwrap();
        let l = f.l[(0, 0)];
        assert_relative_eq!(g.blocks[0][(0, 0)], (0.5 - l) * l, epsilon = 1e-14);
        assert_relative_eq!(g.blocks[0][(0, 0)], 0.062258, epsilon = 1e-6);
        assert_relative_eq!(g.blocks[1][(0, 0)], 0.265564, epsilon = 1e-6);
        assert_eq!(g.as_matrix().shape(), (1, 2));
    }

    #[test]
    fn markov_rejects_zero_horizon() {
        let m = SystemModel::scalar(0.5, 1.0, 1.0, 1.0);
        let f = solve_dare(&m, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(markov_params(&m, &f, 0).is_err());
    }
}
