//! The three parametrized terms of a port-Hamiltonian model.
//!
//! Each term is either learned (an MLP or a constant parameter block) or an
//! *oracle*: a closed-form callable with analytic derivatives. Oracles stand in
//! for ground truth in tests and in error-bound evaluation.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::nn::MlpSpec;

/// Closed-form Hamiltonian.
pub trait HamiltonianFn: Send + Sync + Debug {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// `∇²H(x) v`
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64>;
}

/// Closed-form matrix-valued function of the state (dissipation or input map).
pub trait MatrixFn: Send + Sync + Debug {
    fn eval(&self, x: &[f64]) -> Matrix;
    /// `∂/∂x Σᵢⱼ adjᵢⱼ M(x)ᵢⱼ`
    fn vjp(&self, x: &[f64], adj: &Matrix) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub enum HamiltonianTerm {
    Mlp(MlpSpec),
    Oracle(Arc<dyn HamiltonianFn>),
}

/// How a learned dissipation matrix `R = L Lᵀ` is parametrized. The raw
/// entries fill the lower triangle of `L` row by row; diagonal entries are
/// squared so that `L` has a non-negative diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DissipationSpec {
    ConstantCholesky,
    MlpCholesky { net: MlpSpec },
}

#[derive(Debug, Clone)]
pub enum DissipationTerm {
    Learned(DissipationSpec),
    Oracle(Arc<dyn MatrixFn>),
}

/// Learned input matrix `G`, stored row-major (`n × m`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    ConstantMatrix,
    MlpMatrix { net: MlpSpec },
}

#[derive(Debug, Clone)]
pub enum InputTerm {
    Learned(InputSpec),
    Oracle(Arc<dyn MatrixFn>),
}

pub fn cholesky_entry_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Lower-triangular factor from raw entries (row-major lower triangle).
pub fn cholesky_factor(n: usize, raw: &[f64]) -> Matrix {
    debug_assert_eq!(raw.len(), cholesky_entry_count(n));
    let mut l = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            l[(i, j)] = if i == j { raw[k] * raw[k] } else { raw[k] };
            k += 1;
        }
    }
    l
}

/// Adjoint of the raw entries given the adjoint of `R = L Lᵀ`.
pub fn cholesky_raw_adjoint(n: usize, raw: &[f64], r_bar: &Matrix) -> Vec<f64> {
    let l = cholesky_factor(n, raw);
    let l_bar = r_bar.add(&r_bar.transpose()).matmul(&l);
    let mut out = Vec::with_capacity(raw.len());
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            out.push(if i == j {
                2.0 * raw[k] * l_bar[(i, j)]
            } else {
                l_bar[(i, j)]
            });
            k += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_gradient;

    #[test]
    fn factor_layout() {
        // raw (1, 2, √3) gives L = [[1, 0], [2, 3]]
        let l = cholesky_factor(2, &[1.0, 2.0, 3.0f64.sqrt()]);
        assert_eq!(l[(0, 0)], 1.0);
        assert_eq!(l[(1, 0)], 2.0);
        assert!((l[(1, 1)] - 3.0).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn raw_adjoint_matches_finite_differences() {
        let raw = [0.3, -1.2, 0.8, 0.5, 0.1, -0.7];
        let adj = Matrix::from_rows(&[&[0.2, -0.4, 1.0], &[0.3, 0.9, -0.6], &[0.0, 0.5, 0.7]]);
        let f = |r: &[f64]| {
            let l = cholesky_factor(3, r);
            let rr = l.matmul(&l.transpose());
            rr.as_slice()
                .iter()
                .zip(adj.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        };
        let fd = finite_difference_gradient(f, &raw, 1e-6);
        let an = cholesky_raw_adjoint(3, &raw, &adj);
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}
