//! Failure distributions for correlated (cascading) failures of critical nodes.

mod degree;
mod load;
mod monte_carlo;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use degree::{
    degree_cascade_condition, degree_cascade_probability, degree_worst_case_distribution, rho, DegreeModelParams,
};
pub use load::{load_based_distribution, LoadModelParams};
pub use monte_carlo::{
    configuration_graph, load_trial, monte_carlo_distribution, threshold_cascade, trial_rng, DegreeSampler,
};
pub use tree::{tree_based_distribution, TreeChain, TreeModelParams, TreeSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("computed mass {mass} at x = {x} is negative beyond tolerance")]
    NegativeMass { x: usize, mass: f64 },
    #[error("chain is reducible: stationary distribution is not unique")]
    Singular,
    #[error("state space of {states} states exceeds the limit of {limit}")]
    TooLarge { states: usize, limit: usize },
    #[error("fixed-point iteration did not converge within {0} iterations")]
    NoConvergence(usize),
}

/// One of the three parameterized cascade models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CascadeModel {
    Load(LoadModelParams),
    Tree(TreeModelParams),
    Degree(DegreeModelParams),
}

impl CascadeModel {
    pub fn n(&self) -> usize {
        match self {
            CascadeModel::Load(p) => p.n,
            CascadeModel::Tree(p) => p.n(),
            CascadeModel::Degree(p) => p.n,
        }
    }
}

/// Clamps tiny negative masses left by floating-point cancellation.
pub(crate) fn clamp_mass(x: usize, mass: f64) -> Result<f64, CascadeError> {
    if mass < -1e-9 {
        return Err(CascadeError::NegativeMass { x, mass });
    }
    Ok(mass.clamp(0.0, 1.0))
}
