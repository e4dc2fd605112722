//! Classical fixed-step RK4 and its reverse-mode derivative.
//!
//! Spans must be an integral number of steps (within 1e-9); partial final
//! steps are never taken, so predicting over `k·dt` is bit-identical to `k`
//! chained single-step predictions.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::axpy;
use crate::phnn::{PortHamiltonian, Trainable};

/// States beyond this magnitude abort integration.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Result<Self> {
        let cfg = SolverConfig {
            dt,
            scheme: Scheme::Rk4Fixed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    /// Number of steps covering `[t0, t1]`.
    pub fn step_count(&self, t0: f64, t1: f64) -> Result<usize> {
        self.validate()?;
        let span = t1 - t0;
        if span.is_nan() || span < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "end time {t1} precedes start time {t0}"
            )));
        }
        let ratio = span / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > STEP_TOLERANCE {
            return Err(Error::NonIntegralSteps { span, dt: self.dt });
        }
        Ok(steps as usize)
    }
}

pub(crate) fn guard(x: &[f64], step: usize) -> Result<()> {
    let magnitude = x.iter().fold(
        0.0f64,
        |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) },
    );
    if magnitude.is_nan() || magnitude > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { step, magnitude });
    }
    Ok(())
}

fn offset(x: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

pub fn rk4_step<F>(f: &F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(x)?;
    let k2 = f(&offset(x, 0.5 * dt, &k1))?;
    let k3 = f(&offset(x, 0.5 * dt, &k2))?;
    let k4 = f(&offset(x, dt, &k3))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `ẋ = f(x)` from `t0` to `t1`. Returns every state including `x0`.
pub fn ode_solve_rk4_trajectory<F>(
    f: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let steps = cfg.step_count(t0, t1)?;
    guard(x0, 0)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x0.to_vec());
    for s in 0..steps {
        let next = rk4_step(&f, &out[s], cfg.dt)?;
        guard(&next, s + 1)?;
        out.push(next);
    }
    Ok(out)
}

pub fn ode_solve_rk4<F>(f: F, x0: &[f64], t0: f64, t1: f64, cfg: &SolverConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let steps = cfg.step_count(t0, t1)?;
    guard(x0, 0)?;
    let mut x = x0.to_vec();
    for s in 0..steps {
        x = rk4_step(&f, &x, cfg.dt)?;
        guard(&x, s + 1)?;
    }
    Ok(x)
}

/// Model prediction with the control held constant over `[t0, t1]`.
pub fn predict<M: PortHamiltonian + ?Sized>(
    model: &M,
    x: &[f64],
    u: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    check_len("state", model.state_dim(), x.len())?;
    check_len("control", model.control_dim(), u.len())?;
    ode_solve_rk4(|s| model.rhs(s, u), x, t0, t1, cfg)
}

pub fn predict_trajectory<M: PortHamiltonian + ?Sized>(
    model: &M,
    x: &[f64],
    u: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    check_len("state", model.state_dim(), x.len())?;
    check_len("control", model.control_dim(), u.len())?;
    ode_solve_rk4_trajectory(|s| model.rhs(s, u), x, t0, t1, cfg)
}

/// Stage states of one RK4 step, kept for the reverse pass.
struct StepTape {
    stages: [Vec<f64>; 4],
}

/// Reverse-mode derivative of [`predict`]: adds `out_cotᵀ ∂x̂/∂θ` into
/// `param_grad` and returns `out_cotᵀ ∂x̂/∂x`. Also returns the prediction.
#[allow(clippy::too_many_arguments)]
pub fn predict_vjp<M: Trainable + ?Sized>(
    model: &M,
    x: &[f64],
    u: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    out_cot: impl FnOnce(&[f64]) -> Vec<f64>,
    param_grad: &mut [f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("state", model.state_dim(), x.len())?;
    check_len("control", model.control_dim(), u.len())?;
    let steps = cfg.step_count(t0, t1)?;
    let h = cfg.dt;
    guard(x, 0)?;

    let mut tapes = Vec::with_capacity(steps);
    let mut state = x.to_vec();
    for s in 0..steps {
        let k1 = model.rhs(&state, u)?;
        let s2 = offset(&state, 0.5 * h, &k1);
        let k2 = model.rhs(&s2, u)?;
        let s3 = offset(&state, 0.5 * h, &k2);
        let k3 = model.rhs(&s3, u)?;
        let s4 = offset(&state, h, &k3);
        let k4 = model.rhs(&s4, u)?;
        let next: Vec<f64> = state
            .iter()
            .enumerate()
            .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        guard(&next, s + 1)?;
        tapes.push(StepTape {
            stages: [state, s2, s3, s4],
        });
        state = next;
    }

    let prediction = state;
    let mut x_bar = out_cot(&prediction);
    check_len("prediction cotangent", model.state_dim(), x_bar.len())?;
    for tape in tapes.iter().rev() {
        let y_bar = x_bar.clone();
        let [s1, s2, s3, s4] = &tape.stages;
        // y = x + h/6 (k1 + 2k2 + 2k3 + k4)
        let k4_bar: Vec<f64> = y_bar.iter().map(|v| h / 6.0 * v).collect();
        let mut k3_bar: Vec<f64> = y_bar.iter().map(|v| h / 3.0 * v).collect();
        let mut k2_bar = k3_bar.clone();
        let mut k1_bar = k4_bar.clone();

        let s4_bar = model.rhs_vjp(s4, u, &k4_bar, param_grad)?;
        axpy(1.0, &s4_bar, &mut x_bar);
        axpy(h, &s4_bar, &mut k3_bar);

        let s3_bar = model.rhs_vjp(s3, u, &k3_bar, param_grad)?;
        axpy(1.0, &s3_bar, &mut x_bar);
        axpy(0.5 * h, &s3_bar, &mut k2_bar);

        let s2_bar = model.rhs_vjp(s2, u, &k2_bar, param_grad)?;
        axpy(1.0, &s2_bar, &mut x_bar);
        axpy(0.5 * h, &s2_bar, &mut k1_bar);

        let s1_bar = model.rhs_vjp(s1, u, &k1_bar, param_grad)?;
        axpy(1.0, &s1_bar, &mut x_bar);
    }
    Ok((prediction, x_bar))
}
