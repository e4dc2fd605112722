use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::composition::{CompositeModel, CouplingModel, SubsystemLayout};
use crate::data::Dataset;
use crate::error::{check_len, Error, Result};
use crate::phnn::{transitions, PhnnModel, PortHamiltonian};

/// Singular values below `RANK_TOLERANCE · σ_max` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A state, the control held at it, and the state derivative there.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSample {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub dx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsqDiagnostics {
    /// `‖Aθ − b‖` at the solution.
    pub residual_norm: f64,
    pub singular_values: Vec<f64>,
    /// `σ_max / σ_min` of the regressor.
    pub condition_number: f64,
    pub equations: usize,
    pub unknowns: usize,
}

#[derive(Debug, Clone)]
pub struct LsqCoupling {
    pub coupling: CouplingModel,
    pub diagnostics: LsqDiagnostics,
}

/// Forward-difference derivative samples `(xᵢ₊₁ − xᵢ)/(tᵢ₊₁ − tᵢ)` at `(xᵢ, uᵢ)`.
pub fn finite_difference_samples(dataset: &Dataset) -> Vec<DerivativeSample> {
    transitions(dataset)
        .into_iter()
        .map(|tr| {
            let h = tr.t1 - tr.t0;
            let dx = tr
                .x_next
                .iter()
                .zip(&tr.x)
                .map(|(b, a)| (b - a) / h)
                .collect();
            DerivativeSample {
                x: tr.x,
                u: tr.u,
                dx,
            }
        })
        .collect()
}

/// Fits a constant coupling to `composite_dataset` by linear least squares on
/// finite-difference derivatives, with the submodels held fixed.
pub fn learn_coupling_lsq(
    submodels: &[PhnnModel],
    layout: &SubsystemLayout,
    composite_dataset: &Dataset,
) -> Result<LsqCoupling> {
    composite_dataset.validate()?;
    learn_coupling_lsq_from_samples(
        submodels,
        layout,
        &finite_difference_samples(composite_dataset),
    )
}

/// Least squares over the free entries given derivative samples. For sample
/// `(x, u, ẋ)` with `g = ∇H_c(x)` the equations are
/// `C(θ) g = ẋ − [Diag(J_i) − R_c(x)] g − G_c(x) u`.
pub fn learn_coupling_lsq_from_samples(
    submodels: &[PhnnModel],
    layout: &SubsystemLayout,
    samples: &[DerivativeSample],
) -> Result<LsqCoupling> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let uncoupled = CompositeModel::new(
        submodels.to_vec(),
        CouplingModel::zero(layout.clone()),
        layout.clone(),
    )?;
    let n = layout.state_dim();
    let free = layout.free_entries();
    let unknowns = free.len();
    if unknowns == 0 {
        return Err(Error::InvalidArgument(
            "layout has no free coupling entries".into(),
        ));
    }
    let equations = n * samples.len();
    // Pad with zero rows so the SVD always yields a full right basis.
    let rows = equations.max(unknowns);
    let mut a = DMatrix::<f64>::zeros(rows, unknowns);
    let mut b = DVector::<f64>::zeros(rows);
    for (s, sample) in samples.iter().enumerate() {
        check_len("sample derivative", n, sample.dx.len())?;
        let g = uncoupled.hamiltonian_gradient(&sample.x)?;
        let known = uncoupled.rhs(&sample.x, &sample.u)?;
        let base = s * n;
        for r in 0..n {
            b[base + r] = sample.dx[r] - known[r];
        }
        for (k, &(p, q)) in free.iter().enumerate() {
            a[(base + p, k)] += g[q];
            a[(base + q, k)] -= g[p];
        }
    }
    if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("least-squares system".into()));
    }

    let svd = a.clone().svd(true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let s_max = sv.iter().copied().fold(0.0, f64::max);
    let tol = RANK_TOLERANCE * s_max;
    let v_t = svd.v_t.as_ref().expect("requested V");
    let rank = sv.iter().filter(|&&s| s > tol && s > 0.0).count();
    if rank < unknowns {
        let null_space = sv
            .iter()
            .enumerate()
            .filter(|(_, &s)| !(s > tol && s > 0.0))
            .map(|(i, _)| v_t.row(i).iter().copied().collect())
            .collect();
        return Err(Error::RankDeficient {
            rank,
            unknowns,
            null_space,
        });
    }
    let theta = svd
        .solve(&b, tol)
        .map_err(|e| Error::InvalidArgument(format!("least-squares solve failed: {e}")))?;
    let residual_norm = (&a * &theta - &b).norm();
    let s_min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let mut singular_values = sv;
    singular_values.sort_by(|x, y| y.total_cmp(x));
    let coupling = CouplingModel::constant(layout.clone(), theta.iter().copied().collect())?;
    Ok(LsqCoupling {
        coupling,
        diagnostics: LsqDiagnostics {
            residual_norm,
            singular_values,
            condition_number: s_max / s_min,
            equations,
            unknowns,
        },
    })
}
