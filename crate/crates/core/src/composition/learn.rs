use crate::composition::{CompositeModel, CouplingModel, SubsystemLayout};
use crate::data::Dataset;
use crate::error::Result;
use crate::phnn::{train_transitions, transitions, PhnnModel, SolverConfig, TrainConfig};

/// Default hidden widths of the state-dependent coupling net.
pub const DEFAULT_COUPLING_HIDDEN: [usize; 2] = [32, 32];

/// Trains a state-dependent coupling on the composite one-step loss with the
/// submodels frozen. Returns the coupling and the per-step minibatch loss.
pub fn learn_coupling_nn(
    submodels: &[PhnnModel],
    layout: &SubsystemLayout,
    composite_dataset: &Dataset,
    hidden: &[usize],
    train_cfg: &TrainConfig,
    solver_cfg: &SolverConfig,
) -> Result<(CouplingModel, Vec<f64>)> {
    composite_dataset.validate()?;
    let init = CouplingModel::state_dependent(layout.clone(), hidden.to_vec(), train_cfg.seed)?;
    learn_coupling_from(submodels, init, composite_dataset, train_cfg, solver_cfg)
}

/// Like [`learn_coupling_nn`] starting from an arbitrary coupling.
pub fn learn_coupling_from(
    submodels: &[PhnnModel],
    init: CouplingModel,
    composite_dataset: &Dataset,
    train_cfg: &TrainConfig,
    solver_cfg: &SolverConfig,
) -> Result<(CouplingModel, Vec<f64>)> {
    let layout = init.layout().clone();
    let composite = CompositeModel::new(submodels.to_vec(), init, layout)?;
    let data = transitions(composite_dataset);
    let (trained, history) =
        train_transitions(&composite, &data, train_cfg, solver_cfg, |_, _, _| {})?;
    Ok((trained.into_coupling(), history))
}
