//! Model-free online prediction for linear stochastic systems.
//!
//! * [`sysmodel`]: system definition, validation and seeded simulation.
//! * [`kalman`]: steady-state Kalman predictor used as the regret baseline.
//! * [`opf`]: online least squares with balanced forgetting, plus the
//!   uniform-forgetting baseline.
//! * [`diagnostics`]: regret, error decomposition and statistical checks.
//! * [`harness`]: experiment configs, replicate runs and CSV output.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kalman;
pub mod linalg;
pub mod opf;
pub mod presets;
pub mod sysmodel;

pub use error::{Error, Result};
pub use kalman::{markov_params, run_steady_predictor, solve_dare, FilterOutput, MarkovParams, SteadyFilter};
pub use opf::{run_opf, run_uniform_forgetting, OnlineSession, OpfParams, RlsState, ScalingMatrix};
pub use sysmodel::{simulate, spectral_info, validate_model, SpectralInfo, SystemModel, Trajectory};
