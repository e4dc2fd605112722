use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetMetadata, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::nn::rng::{derive_seed, seeded_rng};
use crate::phnn::solver::guard;
use crate::phnn::{rk4_step, PortHamiltonian};
use crate::systems::{forcing, ForcingSpec};

/// How to simulate a training or test set. Trajectory `i` draws its initial
/// state uniformly from `[initial_low, initial_high]` with the RNG seeded by
/// `derive_seed(seed, i)`, then takes `steps` RK4 steps of size `dt` with the
/// control sampled at the start of each step and held across it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub trajectories: usize,
    pub steps: usize,
    pub dt: f64,
    pub initial_low: Vec<f64>,
    pub initial_high: Vec<f64>,
    pub forcing: ForcingSpec,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument(
                "need at least one trajectory of at least one step".into(),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        check_len(
            "initial-state upper bound",
            self.initial_low.len(),
            self.initial_high.len(),
        )?;
        for (i, (lo, hi)) in self.initial_low.iter().zip(&self.initial_high).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "initial-state box coordinate {i}: need finite low <= high, got [{lo}, {hi}]"
                )));
            }
        }
        self.forcing.validate()
    }
}

pub(crate) fn sample_box<R: Rng>(rng: &mut R, low: &[f64], high: &[f64]) -> Vec<f64> {
    low.iter()
        .zip(high)
        .map(|(&lo, &hi)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        })
        .collect()
}

/// Rolls out `rhs` from `x0` for `steps` RK4 steps of size `dt`, sampling the
/// control at the start of each step and holding it across the step.
pub fn simulate<F>(
    rhs: F,
    x0: &[f64],
    forcing_spec: &ForcingSpec,
    steps: usize,
    dt: f64,
) -> Result<Trajectory>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    guard(x0, 0)?;
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let t = step as f64 * dt;
        let u = forcing(forcing_spec, t);
        times.push(t);
        states.push(x.clone());
        if step < steps {
            x = rk4_step(&|s: &[f64]| rhs(s, &u), &x, dt)?;
            guard(&x, step + 1)?;
        }
        controls.push(u);
    }
    Trajectory::new(times, states, controls)
}

/// Simulates `spec` with an arbitrary right-hand side `rhs(x, u)`.
pub fn generate_dataset_with<F>(rhs: F, spec: &DatasetSpec, system: &str) -> Result<Dataset>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let trajectories = (0..spec.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(derive_seed(spec.seed, i as u64));
            let x0 = sample_box(&mut rng, &spec.initial_low, &spec.initial_high);
            simulate(&rhs, &x0, &spec.forcing, spec.steps, spec.dt)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        metadata: DatasetMetadata {
            dt: spec.dt,
            system: system.to_string(),
            seed: spec.seed,
            forcing: spec.forcing.clone(),
        },
        trajectories,
    })
}

/// Simulates `spec` with the flow of a port-Hamiltonian model.
pub fn generate_dataset<M: PortHamiltonian + ?Sized>(
    model: &M,
    spec: &DatasetSpec,
    system: &str,
) -> Result<Dataset> {
    check_len(
        "initial-state box",
        model.state_dim(),
        spec.initial_low.len(),
    )?;
    check_len(
        "forcing channels",
        model.control_dim(),
        spec.forcing.channels(),
    )?;
    generate_dataset_with(|x, u| model.rhs(x, u), spec, system)
}
