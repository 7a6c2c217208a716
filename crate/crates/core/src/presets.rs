//! Reference systems used by the built-in experiments.

use nalgebra::DMatrix;

use crate::linalg::kron;
use crate::sysmodel::SystemModel;

/// Three decoupled copies of a double integrator with a damped third
/// state, observed through position; process noise correlated across the
/// three axes. `A` has a Jordan block of order two at eigenvalue one.
pub fn tracking_model() -> SystemModel {
    let block_a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.9]);
    let block_c = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    let axes = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.2, 0.2, 1.0, 0.2, 0.2, 0.2, 1.0]);
    let i3 = DMatrix::identity(3, 3);
    SystemModel {
        a: kron(&i3, &block_a),
        c: kron(&i3, &block_c),
        q: kron(&axes, &i3),
        r: i3,
    }
}

/// Stable but slowly mixing system with heavy measurement noise
/// (`ρ(A − LC) ≈ 0.78`).
pub fn illconditioned_model() -> SystemModel {
    SystemModel {
        a: DMatrix::from_row_slice(3, 3, &[0.98, 0.8, 0.0, 0.0, 0.98, 0.8, 0.0, 0.0, 0.9]),
        c: DMatrix::identity(3, 3),
        q: DMatrix::identity(3, 3),
        r: DMatrix::identity(3, 3) * 100.0,
    }
}
