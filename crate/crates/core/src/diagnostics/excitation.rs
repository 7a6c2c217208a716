use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::opf::regressor;

/// `Σ_{t=p}^{k} Z_t Z_tᵀ`.
pub fn regressor_gram(observations: &[DVector<f64>], p: usize, k: usize) -> DMatrix<f64> {
    let mut tracker = ExcitationTracker::new(observations[0].len(), p);
    tracker.extend(observations, k);
    tracker.gram
}

/// `λ_min(Z̄_k Z̄_kᵀ) / (σ_R k / 4)`; values at or above one mean the
/// excitation lower bound holds at step `k`.
pub fn persistent_excitation_ratio(gram: &DMatrix<f64>, k: usize, sigma_r: f64) -> f64 {
    linalg::min_sym_eigenvalue(gram) / (sigma_r * k as f64 / 4.0)
}

/// Incrementally built regressor Gram matrix for one horizon `p`.
#[derive(Debug, Clone)]
pub struct ExcitationTracker {
    pub p: usize,
    pub gram: DMatrix<f64>,
    next: usize,
}

impl ExcitationTracker {
    pub fn new(m: usize, p: usize) -> Self {
        Self { p, gram: DMatrix::zeros(m * p, m * p), next: p }
    }

    /// Absorbs columns up to and including `k`.
    pub fn extend(&mut self, observations: &[DVector<f64>], k: usize) {
        while self.next <= k {
            let z = regressor(observations, self.next, self.p);
            self.gram.ger(1.0, &z, &z, 1.0);
            self.next += 1;
        }
    }

    /// Ratio at step `k` (absorbing any missing columns first).
    pub fn ratio(&mut self, observations: &[DVector<f64>], k: usize, sigma_r: f64) -> f64 {
        self.extend(observations, k);
        persistent_excitation_ratio(&self.gram, k, sigma_r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn iid_noise_is_exciting() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let obs: Vec<DVector<f64>> =
            (0..4000).map(|_| DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng))).collect();
        let mut tr = ExcitationTracker::new(2, 3);
        assert!(tr.ratio(&obs, 3999, 1.0) > 2.0);
    }

    #[test]
    fn repeated_vector_is_not() {
        let obs = vec![DVector::from_vec(vec![1.0, -1.0]); 500];
        let gram = regressor_gram(&obs, 2, 499);
        assert!(persistent_excitation_ratio(&gram, 499, 1.0).abs() < 1e-10);
    }
}
