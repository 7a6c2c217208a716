//! Partially observed linear Gaussian systems.
//!
//! ```text
//! x_{k+1} = A x_k + w_k,   w_k ~ N(0, Q)
//! y_k     = C x_k + v_k,   v_k ~ N(0, R)
//! ```
//!
//! Noise is drawn from ChaCha8 keyed by the trajectory seed. Process and
//! measurement noise use separate ChaCha streams (0 and 1) of that key, so a
//! trajectory is a pure function of `(model, horizon, seed, x0)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kalman::SteadyFilter;
use crate::linalg;

/// Symmetry tolerance for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Slack allowed on `ρ(A) ≤ 1`.
pub const RADIUS_SLACK: f64 = 1e-9;
/// Eigenvalues with `|λ − 1|` below this are treated as sitting at one.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-6;

const PROCESS_STREAM: u64 = 0;
const MEASUREMENT_STREAM: u64 = 1;

/// Ground-truth system matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl SystemModel {
    /// Builds a model after checking that the shapes agree.
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let model = Self { a, c, q, r };
        model.check_dimensions()?;
        Ok(model)
    }

    /// Scalar system `x' = a x + w, y = c x + v`.
    pub fn scalar(a: f64, c: f64, q: f64, r: f64) -> Self {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self { a: m(a), c: m(c), q: m(q), r: m(r) }
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Observation dimension `m`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.a.nrows();
        let m = self.c.nrows();
        let shape = |x: &DMatrix<f64>| (x.nrows(), x.ncols());
        if n == 0 || m == 0 {
            return Err(Error::Dimension("A and C must be non-empty".into()));
        }
        if shape(&self.a) != (n, n) {
            return Err(Error::Dimension(format!("A is {:?}, expected square", shape(&self.a))));
        }
        if self.c.ncols() != n {
            return Err(Error::Dimension(format!("C is {:?}, expected {m}x{n}", shape(&self.c))));
        }
        if shape(&self.q) != (n, n) {
            return Err(Error::Dimension(format!("Q is {:?}, expected {n}x{n}", shape(&self.q))));
        }
        if shape(&self.r) != (m, m) {
            return Err(Error::Dimension(format!("R is {:?}, expected {m}x{m}", shape(&self.r))));
        }
        Ok(())
    }
}

/// One named condition of a [`ValidationReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Converts a failing report into a parameter error naming every violation.
    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let msg: Vec<String> = self.failures().map(|c| c.detail.clone()).collect();
        Err(Error::Parameter(msg.join("; ")))
    }
}

/// Checks the structural and statistical requirements on a model.
///
/// Shape problems are returned as an error; everything else is reported
/// per condition.
pub fn validate_model(model: &SystemModel) -> Result<ValidationReport> {
    model.check_dimensions()?;
    let mut checks = Vec::new();
    for (name, label, x) in [("q_spd", "Q", &model.q), ("r_spd", "R", &model.r)] {
        let asym = linalg::asymmetry(x);
        let min_eig = linalg::min_sym_eigenvalue(x);
        let (passed, detail) = if asym > SYMMETRY_TOL {
            (false, format!("{label} not symmetric (max asymmetry {asym:.3e})"))
        } else if min_eig <= 0.0 {
            (false, format!("{label} not positive definite (min eigenvalue {min_eig:.3e})"))
        } else {
            (true, format!("{label} symmetric positive definite"))
        };
        checks.push(Check { name, passed, detail });
    }
    let rho = linalg::spectral_radius(&model.a)?;
    checks.push(Check {
        name: "non_explosive",
        passed: rho <= 1.0 + RADIUS_SLACK,
        detail: if rho <= 1.0 + RADIUS_SLACK {
            format!("rho(A) = {rho:.6}")
        } else {
            format!("A is explosive: rho(A) = {rho:.6} > 1")
        },
    });
    Ok(ValidationReport { checks })
}

/// A simulated realisation of the system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    /// `x_0 ..= x_N`.
    pub states: Vec<DVector<f64>>,
    /// `y_0 ..= y_N`.
    pub observations: Vec<DVector<f64>>,
}

impl Trajectory {
    /// The horizon `N` (index of the last sample).
    pub fn horizon(&self) -> usize {
        self.observations.len() - 1
    }
}

/// Seed of replicate `index` in an experiment keyed by `base_seed`.
pub fn replicate_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, factor: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| StandardNormal.sample(rng));
    factor * z
}

/// Simulates `x_0..x_N`, `y_0..y_N`.
///
/// Covariances only need to be positive semidefinite here, so noiseless
/// models (`Q = R = 0`) can be simulated for testing. `x0` defaults to zero.
pub fn simulate(model: &SystemModel, horizon: usize, seed: u64, x0: Option<&DVector<f64>>) -> Result<Trajectory> {
    model.check_dimensions()?;
    if horizon < 1 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    let n = model.state_dim();
    let mut x = match x0 {
        Some(v) if v.len() != n => {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", v.len())));
        }
        Some(v) => v.clone(),
        None => DVector::zeros(n),
    };
    let fq = linalg::psd_factor(&model.q);
    let fr = linalg::psd_factor(&model.r);
    let mut process = stream(seed, PROCESS_STREAM);
    let mut measurement = stream(seed, MEASUREMENT_STREAM);

    let mut states = Vec::with_capacity(horizon + 1);
    let mut observations = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let v = gaussian(&mut measurement, &fr);
        observations.push(&model.c * &x + v);
        if k < horizon {
            let w = gaussian(&mut process, &fq);
            let next = &model.a * &x + w;
            states.push(std::mem::replace(&mut x, next));
        } else {
            states.push(x.clone());
        }
    }
    Ok(Trajectory { seed, states, observations })
}

/// Spectral quantities that govern the regret analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralInfo {
    pub rho_a: f64,
    /// `ρ(A − LC)`.
    pub rho_closed: f64,
    /// Size of the largest Jordan block of `A` at eigenvalue 1 (1 if there is none).
    pub kappa: usize,
    /// Smallest eigenvalue of `R`.
    pub sigma_r: f64,
    /// Largest eigenvalue of the innovation covariance.
    pub sigma_rbar: f64,
}

/// Largest Jordan block order of `A` at eigenvalue one.
///
/// Equals the smallest `j` at which `rank((A − I)^j)` stops decreasing.
/// Matrices without an eigenvalue at one report 1.
pub fn unit_jordan_order(a: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    let at_one = linalg::eigenvalues(a)?
        .into_iter()
        .filter(|&(re, im)| (re - 1.0).hypot(im) < UNIT_EIGENVALUE_TOL)
        .count();
    if at_one == 0 {
        return Ok(1);
    }
    let shifted = a - DMatrix::<f64>::identity(n, n);
    let mut power = shifted.clone();
    let mut rank = linalg::numerical_rank(&power, 1e-9);
    for j in 1..=n {
        let next = &power * &shifted;
        let next_rank = linalg::numerical_rank(&next, 1e-9);
        if next_rank == rank {
            return Ok(j);
        }
        power = next;
        rank = next_rank;
    }
    Ok(n)
}

pub fn spectral_info(model: &SystemModel, filter: &SteadyFilter) -> Result<SpectralInfo> {
    Ok(SpectralInfo {
        rho_a: linalg::spectral_radius(&model.a)?,
        rho_closed: filter.closed_loop_radius(model)?,
        kappa: unit_jordan_order(&model.a)?,
        sigma_r: linalg::min_sym_eigenvalue(&model.r),
        sigma_rbar: linalg::max_sym_eigenvalue(&filter.rbar),
    })
}
