//! One-step prediction loss and Adam training.
//!
//! The loss is the mean over transition pairs of `‖x̂ᵢ₊₁ − xᵢ₊₁‖²`, where
//! `x̂ᵢ₊₁` is the model's RK4 prediction from `(xᵢ, uᵢ, tᵢ)` to `tᵢ₊₁`.
//! Per-transition work runs in parallel; reductions are sequential in
//! transition order so results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::sub;
use crate::nn::rng::seeded_rng;
use crate::nn::{AdamState, ParameterVector};
use crate::phnn::solver::{predict, predict_vjp, SolverConfig};
use crate::phnn::{PortHamiltonian, Trainable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 5000,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, transitions: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if transitions == 0 {
            return Err(Error::EmptyDataset);
        }
        if self.batch_size > transitions {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} exceeds the {transitions} available transitions",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// A single `(xᵢ, uᵢ, tᵢ) → xᵢ₊₁` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t0: f64,
    pub t1: f64,
    pub x_next: Vec<f64>,
}

/// All consecutive pairs, trajectory by trajectory.
pub fn transitions(dataset: &Dataset) -> Vec<Transition> {
    dataset
        .trajectories
        .iter()
        .flat_map(|traj| {
            (0..traj.len().saturating_sub(1)).map(move |i| Transition {
                x: traj.states[i].clone(),
                u: traj.controls[i].clone(),
                t0: traj.times[i],
                t1: traj.times[i + 1],
                x_next: traj.states[i + 1].clone(),
            })
        })
        .collect()
}

fn squared_error<M: PortHamiltonian + ?Sized>(
    model: &M,
    tr: &Transition,
    cfg: &SolverConfig,
) -> Result<f64> {
    let pred = predict(model, &tr.x, &tr.u, tr.t0, tr.t1, cfg)?;
    Ok(sub(&pred, &tr.x_next).iter().map(|e| e * e).sum())
}

/// Mean one-step loss over a set of transitions.
pub fn transition_loss<M: PortHamiltonian + ?Sized>(
    model: &M,
    transitions: &[Transition],
    cfg: &SolverConfig,
) -> Result<f64> {
    if transitions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let terms: Vec<f64> = transitions
        .par_iter()
        .map(|tr| squared_error(model, tr, cfg))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / transitions.len() as f64)
}

pub fn loss<M: PortHamiltonian + ?Sized>(
    model: &M,
    dataset: &Dataset,
    cfg: &SolverConfig,
) -> Result<f64> {
    transition_loss(model, &transitions(dataset), cfg)
}

/// Mean loss over `batch` and its exact gradient with respect to the model's
/// trainable parameters.
pub fn loss_and_gradient<M: Trainable + ?Sized>(
    model: &M,
    batch: &[&Transition],
    cfg: &SolverConfig,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scale = 1.0 / batch.len() as f64;
    let n_params = model.parameters().len();
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|tr| {
            let mut grad = vec![0.0; n_params];
            let mut sq = 0.0;
            predict_vjp(
                model,
                &tr.x,
                &tr.u,
                tr.t0,
                tr.t1,
                cfg,
                |pred| {
                    let err = sub(pred, &tr.x_next);
                    sq = err.iter().map(|e| e * e).sum();
                    err.iter().map(|e| 2.0 * scale * e).collect()
                },
                &mut grad,
            )?;
            Ok((sq, grad))
        })
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grad = vec![0.0; n_params];
    for (sq, g) in parts {
        total += sq;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((total * scale, grad))
}

/// Gradient of the mean one-step loss over `batch`, laid out like the model's
/// parameters.
pub fn loss_gradient<M: Trainable + ?Sized>(
    model: &M,
    batch: &[Transition],
    cfg: &SolverConfig,
) -> Result<ParameterVector> {
    let refs: Vec<&Transition> = batch.iter().collect();
    let (_, g) = loss_and_gradient(model, &refs, cfg)?;
    model.parameters().with_values(g)
}

/// Adam on minibatches drawn uniformly with replacement. Returns the trained
/// model and the per-step minibatch loss.
pub fn train<M: Trainable + Clone>(
    model: &M,
    dataset: &Dataset,
    train_cfg: &TrainConfig,
    solver_cfg: &SolverConfig,
) -> Result<(M, Vec<f64>)> {
    train_transitions(
        model,
        &transitions(dataset),
        train_cfg,
        solver_cfg,
        |_, _, _| {},
    )
}

/// Like [`train`] over an explicit transition set. `on_step(step, model, loss)`
/// runs after every update.
pub fn train_transitions<M, F>(
    model: &M,
    data: &[Transition],
    train_cfg: &TrainConfig,
    solver_cfg: &SolverConfig,
    mut on_step: F,
) -> Result<(M, Vec<f64>)>
where
    M: Trainable + Clone,
    F: FnMut(usize, &M, f64),
{
    train_cfg.validate(data.len())?;
    solver_cfg.validate()?;
    let mut model = model.clone();
    let mut adam = AdamState::new(model.parameters().len(), train_cfg.learning_rate);
    let mut rng = seeded_rng(train_cfg.seed);
    let mut history = Vec::with_capacity(train_cfg.steps);
    for step in 0..train_cfg.steps {
        let batch: Vec<&Transition> = (0..train_cfg.batch_size)
            .map(|_| &data[rng.random_range(0..data.len())])
            .collect();
        let (loss, grad) = loss_and_gradient(&model, &batch, solver_cfg)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at step {step}")));
        }
        adam.step_in_place(model.parameters_mut().values_mut(), &grad)
            .map_err(|e| match e {
                Error::NonFinite(what) => {
                    Error::NonFinite(format!("{what} at training step {step}"))
                }
                other => other,
            })?;
        history.push(loss);
        on_step(step, &model, loss);
    }
    Ok((model, history))
}
