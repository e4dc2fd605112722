//! Port-Hamiltonian neural networks and their composition.
//!
//! Submodels are trained on one-step predictions of single subsystems, then
//! joined through a skew-symmetric coupling into a composite model whose
//! power balance holds by construction.

pub mod composition;
pub mod data;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod phnn;
pub mod systems;

pub use composition::{
    chain_coupling, compose, error_bound_report, learn_coupling_lsq, learn_coupling_nn,
    BoundReport, CompositeModel, CouplingModel, SamplingDomain, SubsystemLayout,
};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use phnn::{PhnnModel, PortHamiltonian, SolverConfig, TrainConfig, Trainable};
