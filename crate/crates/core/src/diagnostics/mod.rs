//! Regret bookkeeping and model-known diagnostics.
//!
//! Everything here consumes finished run artifacts (and, for the
//! decomposition, the true model); nothing feeds back into the predictor.

mod bias;
mod decomposition;
mod excitation;
mod order;
mod regret;
mod whiteness;

pub use bias::{truncation_bias, TruncationBias};
pub use decomposition::{error_decomposition, DecompositionInputs, DecompositionTracker, FactorReport, StepTerms};
pub use excitation::{persistent_excitation_ratio, regressor_gram, ExcitationTracker};
pub use order::{regret_order_ratio, OrderRatio};
pub use regret::{regret_series, RegretRecord, REGRET_IDENTITY_TOL};
pub use whiteness::{whiteness_check, WhitenessReport, WHITENESS_LAGS};
