use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kalman::MarkovParams;
use crate::linalg;
use crate::opf::{regressor, ScalingMatrix};

use super::bias::TruncationBias;

/// Stacked quantities over columns `t = p..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionInputs {
    /// Truncation biases `b_t`, one per column.
    pub b: DMatrix<f64>,
    /// Innovations `e_t`.
    pub e: DMatrix<f64>,
    /// Unscaled regressors `Z_t`.
    pub zbar: DMatrix<f64>,
    /// `λ D⁻² + Z̄ Z̄ᵀ`.
    pub vbar: DMatrix<f64>,
    /// `Σ y_t Z_tᵀ`.
    pub s: DMatrix<f64>,
}

impl DecompositionInputs {
    /// Collects the inputs for the estimate fitted on `y_p..=y_k`.
    pub fn from_run(
        observations: &[DVector<f64>],
        innovations: &[DVector<f64>],
        bias: &TruncationBias,
        scaling: &ScalingMatrix,
        lambda: f64,
        k: usize,
    ) -> Result<Self> {
        let p = scaling.p;
        if bias.p != p {
            return Err(Error::Dimension(format!("bias horizon {} differs from p = {p}", bias.p)));
        }
        if k < p || k >= observations.len() || k >= innovations.len() || bias.get(k).is_none() {
            return Err(Error::Dimension(format!("step {k} outside the available data")));
        }
        let m = scaling.m;
        let cols = k - p + 1;
        let mut b = DMatrix::zeros(m, cols);
        let mut e = DMatrix::zeros(m, cols);
        let mut zbar = DMatrix::zeros(m * p, cols);
        let mut s = DMatrix::zeros(m, m * p);
        for (j, t) in (p..=k).enumerate() {
            let z = regressor(observations, t, p);
            b.set_column(j, bias.get(t).expect("checked range"));
            e.set_column(j, &innovations[t]);
            s.ger(1.0, &observations[t], &z, 1.0);
            zbar.set_column(j, &z);
        }
        let vbar = DMatrix::from_diagonal(&(scaling.inverse_squared() * lambda)) + &zbar * zbar.transpose();
        Ok(Self { b, e, zbar, vbar, s })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.zbar.ncols();
        if self.b.ncols() != n || self.e.ncols() != n {
            return Err(Error::Dimension(format!(
                "column counts differ: B {}, E {}, Z̄ {n}",
                self.b.ncols(),
                self.e.ncols()
            )));
        }
        let d = self.zbar.nrows();
        if self.vbar.shape() != (d, d) || self.s.shape() != (self.e.nrows(), d) {
            return Err(Error::Dimension("V̄ or S has the wrong shape".into()));
        }
        Ok(())
    }
}

/// Size of each error term at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FactorReport {
    /// `‖λ G_p D⁻² V̄^{−1/2}‖²`
    pub reg_factor: f64,
    /// `‖E Z̄ᵀ V̄^{−1/2}‖²`
    pub regress_factor: f64,
    /// `‖B Z̄ᵀ V̄^{−1/2}‖²`
    pub bias_factor: f64,
    /// `tr(Z̄ᵀ V̄⁻¹ Z̄) = mp − λ tr(V̄⁻¹ D⁻²)`
    pub trace_term: f64,
    pub logdet_vbar: f64,
    /// `log det Ṽ = log det V̄ + 2 log det D`
    pub logdet_vtilde: f64,
}

/// `‖X V̄^{−1/2}‖₂² = λ_max(X V̄⁻¹ Xᵀ)`.
fn weighted_norm_sq(ch: &Cholesky<f64, Dyn>, x: &DMatrix<f64>) -> f64 {
    let w = ch.solve(&x.transpose());
    linalg::max_sym_eigenvalue(&linalg::symmetrize(&(x * w))).max(0.0)
}

fn report(ch: &Cholesky<f64, Dyn>, reg: &DMatrix<f64>, ez: &DMatrix<f64>, bz: &DMatrix<f64>, scaling: &ScalingMatrix, lambda: f64) -> FactorReport {
    let inv = ch.inverse();
    let dim = scaling.diag.len();
    let weighted: f64 = scaling.inverse_squared().iter().enumerate().map(|(i, d)| d * inv[(i, i)]).sum();
    let logdet_vbar = linalg::chol_logdet(ch);
    FactorReport {
        reg_factor: weighted_norm_sq(ch, reg),
        regress_factor: weighted_norm_sq(ch, ez),
        bias_factor: weighted_norm_sq(ch, bz),
        trace_term: dim as f64 - lambda * weighted,
        logdet_vbar,
        logdet_vtilde: logdet_vbar + 2.0 * scaling.logdet(),
    }
}

fn regularization_map(markov: &MarkovParams, scaling: &ScalingMatrix, lambda: f64) -> Result<DMatrix<f64>> {
    if markov.p != scaling.p {
        return Err(Error::Dimension(format!("Markov horizon {} differs from p = {}", markov.p, scaling.p)));
    }
    let mut g = markov.as_matrix() * lambda;
    for (j, d) in scaling.inverse_squared().iter().enumerate() {
        g.column_mut(j).scale_mut(*d);
    }
    Ok(g)
}

/// Factor report for a batch of stacked inputs.
pub fn error_decomposition(
    inputs: &DecompositionInputs,
    markov: &MarkovParams,
    scaling: &ScalingMatrix,
    lambda: f64,
) -> Result<FactorReport> {
    inputs.validate()?;
    let reg = regularization_map(markov, scaling, lambda)?;
    let ch = linalg::cholesky(&linalg::symmetrize(&inputs.vbar), "V̄")?;
    let ez = &inputs.e * inputs.zbar.transpose();
    let bz = &inputs.b * inputs.zbar.transpose();
    Ok(report(&ch, &reg, &ez, &bz, scaling, lambda))
}

/// Split of the prediction gap `ỹ_k − ŷ_k` at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTerms {
    pub k: usize,
    /// `Z_kᵀ V̄_{k−1}⁻¹ Z_k`
    pub accumulation: f64,
    /// `B Z̄ᵀ V̄⁻¹ Z_k − b_k`
    pub bias_term: DVector<f64>,
    /// `E Z̄ᵀ V̄⁻¹ Z_k`
    pub regression_term: DVector<f64>,
    /// `−λ G_p D⁻² V̄⁻¹ Z_k`
    pub regularization_term: DVector<f64>,
    /// `b_k`
    pub bias: DVector<f64>,
}

impl StepTerms {
    /// Reconstructed `ỹ_k − ŷ_k`.
    pub fn gap(&self) -> DVector<f64> {
        &self.bias_term + &self.regression_term + &self.regularization_term
    }
}

/// Streams the decomposition through one epoch, one column at a time.
///
/// Keeps a Cholesky factor of `V̄` under rank-one updates together with the
/// cross terms `E Z̄ᵀ` and `B Z̄ᵀ`.
#[derive(Debug, Clone)]
pub struct DecompositionTracker {
    lambda: f64,
    scaling: ScalingMatrix,
    reg: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    ez: DMatrix<f64>,
    bz: DMatrix<f64>,
    next: usize,
    accumulation: f64,
}

impl DecompositionTracker {
    /// Tracker holding columns `t = p..start`, ready to process step `start`.
    pub fn start(
        observations: &[DVector<f64>],
        innovations: &[DVector<f64>],
        bias: &TruncationBias,
        scaling: &ScalingMatrix,
        markov: &MarkovParams,
        lambda: f64,
        start: usize,
    ) -> Result<Self> {
        let p = scaling.p;
        if start < p || start > observations.len() || start > innovations.len() || bias.p != p {
            return Err(Error::Dimension(format!("cannot start tracking at step {start} with p = {p}")));
        }
        let m = scaling.m;
        let mut vbar = DMatrix::from_diagonal(&(scaling.inverse_squared() * lambda));
        let mut ez = DMatrix::zeros(m, m * p);
        let mut bz = DMatrix::zeros(m, m * p);
        for t in p..start {
            let z = regressor(observations, t, p);
            vbar.ger(1.0, &z, &z, 1.0);
            ez.ger(1.0, &innovations[t], &z, 1.0);
            bz.ger(1.0, bias.get(t).expect("bias covers t >= p"), &z, 1.0);
        }
        Ok(Self {
            lambda,
            scaling: scaling.clone(),
            reg: regularization_map(markov, scaling, lambda)?,
            chol: linalg::cholesky(&vbar, "V̄")?,
            ez,
            bz,
            next: start,
            accumulation: 0.0,
        })
    }

    /// Next step to be processed.
    pub fn next_step(&self) -> usize {
        self.next
    }

    /// Running sum of accumulation increments since [`DecompositionTracker::start`].
    pub fn accumulation(&self) -> f64 {
        self.accumulation
    }

    /// Decomposes step `k = next_step()` and then absorbs column `k`.
    pub fn step(
        &mut self,
        observations: &[DVector<f64>],
        innovations: &[DVector<f64>],
        bias: &TruncationBias,
    ) -> Result<StepTerms> {
        let k = self.next;
        let b = bias.get(k).ok_or_else(|| Error::Dimension(format!("no bias for step {k}")))?;
        if k >= innovations.len() {
            return Err(Error::Dimension(format!("no innovation for step {k}")));
        }
        let z = regressor(observations, k, self.scaling.p);
        let w = self.chol.solve(&z);
        let accumulation = z.dot(&w);
        let terms = StepTerms {
            k,
            accumulation,
            bias_term: &self.bz * &w - b,
            regression_term: &self.ez * &w,
            regularization_term: -(&self.reg * &w),
            bias: b.clone(),
        };
        self.chol.rank_one_update(&z, 1.0);
        self.ez.ger(1.0, &innovations[k], &z, 1.0);
        self.bz.ger(1.0, b, &z, 1.0);
        self.accumulation += accumulation;
        self.next += 1;
        Ok(terms)
    }

    /// Factors for the estimate fitted on all absorbed columns.
    pub fn report(&self) -> FactorReport {
        report(&self.chol, &self.reg, &self.ez, &self.bz, &self.scaling, self.lambda)
    }
}
