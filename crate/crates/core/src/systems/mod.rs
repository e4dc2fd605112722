//! Ground-truth systems, forcing signals and dataset generation.

mod forcing;
mod generate;
mod smd;

pub use forcing::{forcing, ChannelForcing, ForcingSpec};
pub(crate) use generate::sample_box;
pub use generate::{generate_dataset, generate_dataset_with, simulate, DatasetSpec};
pub use smd::{
    canonical_interconnection, composite_smd_rhs, smd_hamiltonian, smd_input_matrix,
    smd_oracle_model, smd_rhs, ConstantMatrixFn, OffsetHamiltonian, SmdDissipation, SmdHamiltonian,
    SmdParams,
};
