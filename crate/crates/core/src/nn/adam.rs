use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::nn::params::ParameterVector;

/// Bias-corrected Adam. Moments live next to the hyperparameters so a training
/// run can be checkpointed and resumed bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Updates `params` in place.
    pub fn step_in_place(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("Adam parameters", self.first_moment.len(), params.len())?;
        check_len("Adam gradient", params.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i}")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

pub fn adam_step(
    state: &AdamState,
    params: &ParameterVector,
    grads: &ParameterVector,
) -> Result<(ParameterVector, AdamState)> {
    let mut next = state.clone();
    let mut out = params.clone();
    next.step_in_place(out.values_mut(), grads.values())?;
    Ok((out, next))
}
