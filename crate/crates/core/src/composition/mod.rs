//! Composite models built from trained submodels, coupling identification and
//! the composite error bound.

mod bound;
mod composite;
mod coupling;
mod layout;
mod learn;
mod lsq;

pub use bound::{error_bound_report, BoundReport, Interval, SamplingDomain};
pub use composite::{compose, CompositeModel};
pub use coupling::{chain_coupling, CouplingKind, CouplingModel};
pub use layout::SubsystemLayout;
pub use learn::{learn_coupling_from, learn_coupling_nn, DEFAULT_COUPLING_HIDDEN};
pub use lsq::{
    finite_difference_samples, learn_coupling_lsq, learn_coupling_lsq_from_samples,
    DerivativeSample, LsqCoupling, LsqDiagnostics, RANK_TOLERANCE,
};
