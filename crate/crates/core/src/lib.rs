//! Distributed Nash-equilibrium seeking over networks with partial-decision
//! information: games, mixing matrices, the augmented mapping and the
//! GRANE / Acc-GRANE solvers.

use nalgebra::DMatrix;

pub mod augmented;
pub mod experiment;
pub mod game;
pub mod network;
pub mod solvers;

pub use augmented::{
    AlphaPolicy, AugmentedConfig, AugmentedError, AugmentedOperator, EstimationMatrix, MonotonicityPath,
};
pub use game::{BoxSet, Game, GameConstants, GameError, GradientGame, QuadraticGame, QuadraticSpec};
pub use network::{Graph, MixingMatrix, NetworkError};
pub use solvers::{Algorithm, ConvergenceTrace, SolverConfig, SolverError, StepSize};

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
