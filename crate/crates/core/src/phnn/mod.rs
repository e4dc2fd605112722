//! Port-Hamiltonian neural networks.
//!
//! A model evaluates `ẋ = [J(x) − R(x)] ∇H(x) + G(x) u` with output
//! `y = G(x)ᵀ ∇H(x)`, predicts future states with fixed-step RK4, and is
//! trained on one-step transitions by backpropagating through the integrator.

mod model;
pub mod solver;
pub mod terms;
pub mod training;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, Matrix};
use crate::nn::ParameterVector;

pub use model::{PhnnBuilder, PhnnModel};
pub use solver::{
    ode_solve_rk4, ode_solve_rk4_trajectory, predict, predict_trajectory, predict_vjp, rk4_step,
    Scheme, SolverConfig,
};
pub use terms::{
    DissipationSpec, DissipationTerm, HamiltonianFn, HamiltonianTerm, InputSpec, InputTerm,
    MatrixFn,
};
pub use training::{
    loss, loss_and_gradient, loss_gradient, train, train_transitions, transition_loss, transitions,
    TrainConfig, Transition,
};

/// Anything exposing the port-Hamiltonian structure. Implemented by single
/// submodels and by composites.
pub trait PortHamiltonian: Send + Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn hamiltonian(&self, x: &[f64]) -> Result<f64>;
    fn hamiltonian_gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// `J(x)`; constant for single submodels.
    fn interconnection_at(&self, x: &[f64]) -> Result<Matrix>;
    fn dissipation_matrix(&self, x: &[f64]) -> Result<Matrix>;
    fn input_matrix(&self, x: &[f64]) -> Result<Matrix>;

    fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.state_dim(), x.len())?;
        check_len("control", self.control_dim(), u.len())?;
        let grad = self.hamiltonian_gradient(x)?;
        let structure = self
            .interconnection_at(x)?
            .sub(&self.dissipation_matrix(x)?);
        let mut dx = structure.matvec(&grad);
        let gu = self.input_matrix(x)?.matvec(u);
        for (d, g) in dx.iter_mut().zip(&gu) {
            *d += g;
        }
        if let Some(i) = dx.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("right-hand side entry {i}")));
        }
        Ok(dx)
    }

    /// Collocated output `y = Gᵀ ∇H`.
    fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("state", self.state_dim(), x.len())?;
        let grad = self.hamiltonian_gradient(x)?;
        Ok(self.input_matrix(x)?.tr_matvec(&grad))
    }

    /// `(dH/dt, yᵀu)`: stored-energy rate along the flow and supplied power.
    fn power_balance(&self, x: &[f64], u: &[f64]) -> Result<(f64, f64)> {
        let grad = self.hamiltonian_gradient(x)?;
        let dx = self.rhs(x, u)?;
        let y = self.output(x)?;
        Ok((dot(&grad, &dx), dot(&y, u)))
    }
}

/// A model with a trainable parameter vector and an exact reverse-mode
/// derivative of its right-hand side.
pub trait Trainable: PortHamiltonian {
    fn parameters(&self) -> &ParameterVector;
    fn parameters_mut(&mut self) -> &mut ParameterVector;

    /// Adds `cotᵀ ∂rhs/∂θ` into `param_grad` and returns `cotᵀ ∂rhs/∂x`.
    fn rhs_vjp(
        &self,
        x: &[f64],
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>>;
}
