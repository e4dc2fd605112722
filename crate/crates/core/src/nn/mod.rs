//! Differentiable substrate: flat parameter vectors, tanh MLPs with exact
//! reverse-mode derivatives, Adam, and a finite-difference oracle.

pub mod adam;
pub mod fd;
pub mod mlp;
pub mod params;
pub mod rng;

pub use adam::{adam_step, AdamState};
pub use fd::finite_difference_gradient;
pub use mlp::{
    init_params, jvp_vjp_into, mlp_forward, mlp_input_gradient, mlp_vjp, mlp_vjp_into,
    scalar_input_gradient, Activation, MlpSpec,
};
pub use params::{ParameterVector, Slot};
