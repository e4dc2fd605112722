//! Nonlinearly damped spring-mass-damper (SMD) ground truth.
//!
//! State `x = (q, p)` with spring deflection `q` and momentum `p`:
//! `H = p²/2m + k q²/2`, `R = diag(0, b p²/m²)`, `G = (0, 1)ᵀ`, so
//! `q̇ = p/m` and `ṗ = −k q − b p³/m³ + u`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::composition::CouplingModel;
use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::phnn::{HamiltonianFn, MatrixFn, PhnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmdParams {
    pub mass: f64,
    pub spring_constant: f64,
    pub damping: f64,
}

impl SmdParams {
    pub fn new(mass: f64, spring_constant: f64, damping: f64) -> Result<Self> {
        let p = SmdParams {
            mass,
            spring_constant,
            damping,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        if !(self.spring_constant > 0.0 && self.spring_constant.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "spring constant must be positive, got {}",
                self.spring_constant
            )));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "damping must be non-negative, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Canonical symplectic matrix `[[0, 1], [−1, 0]]`.
pub fn canonical_interconnection() -> Matrix {
    Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]])
}

pub fn smd_hamiltonian(params: &SmdParams, x: &[f64]) -> f64 {
    let (q, p) = (x[0], x[1]);
    p * p / (2.0 * params.mass) + 0.5 * params.spring_constant * q * q
}

fn smd_gradient(params: &SmdParams, x: &[f64]) -> [f64; 2] {
    [params.spring_constant * x[0], x[1] / params.mass]
}

fn smd_damping_entry(params: &SmdParams, p: f64) -> f64 {
    params.damping * p * p / (params.mass * params.mass)
}

pub fn smd_rhs(params: &SmdParams, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    check_len("SMD state", 2, x.len())?;
    check_len("SMD control", 1, u.len())?;
    let [dq, dp] = smd_gradient(params, x);
    let r = smd_damping_entry(params, x[1]);
    // [J − R] ∇H + G u, written out in the same operation order as the matrix form.
    Ok(vec![dp, -dq - r * dp + u[0]])
}

/// Ground-truth `H` of an SMD, usable as a fixed Hamiltonian term.
#[derive(Debug, Clone, Copy)]
pub struct SmdHamiltonian(pub SmdParams);

impl HamiltonianFn for SmdHamiltonian {
    fn value(&self, x: &[f64]) -> f64 {
        smd_hamiltonian(&self.0, x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        smd_gradient(&self.0, x).to_vec()
    }

    fn hessian_vector(&self, _x: &[f64], v: &[f64]) -> Vec<f64> {
        vec![self.0.spring_constant * v[0], v[1] / self.0.mass]
    }
}

/// Ground-truth `R(x)` of an SMD.
#[derive(Debug, Clone, Copy)]
pub struct SmdDissipation(pub SmdParams);

impl MatrixFn for SmdDissipation {
    fn eval(&self, x: &[f64]) -> Matrix {
        let mut r = Matrix::zeros(2, 2);
        r[(1, 1)] = smd_damping_entry(&self.0, x[1]);
        r
    }

    fn vjp(&self, x: &[f64], adj: &Matrix) -> Vec<f64> {
        let m = self.0.mass;
        vec![0.0, adj[(1, 1)] * 2.0 * self.0.damping * x[1] / (m * m)]
    }
}

/// A state-independent matrix term.
#[derive(Debug, Clone)]
pub struct ConstantMatrixFn(pub Matrix);

impl MatrixFn for ConstantMatrixFn {
    fn eval(&self, _x: &[f64]) -> Matrix {
        self.0.clone()
    }

    fn vjp(&self, x: &[f64], _adj: &Matrix) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// Wraps a Hamiltonian and adds a constant to its gradient:
/// `H̃(x) = H(x) + cᵀx`.
#[derive(Debug, Clone)]
pub struct OffsetHamiltonian {
    pub base: Arc<dyn HamiltonianFn>,
    pub offset: Vec<f64>,
}

impl HamiltonianFn for OffsetHamiltonian {
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + x.iter().zip(&self.offset).map(|(a, b)| a * b).sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.base.gradient(x);
        for (gi, c) in g.iter_mut().zip(&self.offset) {
            *gi += c;
        }
        g
    }

    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.base.hessian_vector(x, v)
    }
}

pub fn smd_input_matrix() -> Matrix {
    Matrix::from_rows(&[&[0.0], &[1.0]])
}

/// A submodel whose terms are exactly the SMD ground truth.
pub fn smd_oracle_model(params: &SmdParams) -> Result<PhnnModel> {
    params.validate()?;
    PhnnModel::builder(2, 1, canonical_interconnection())
        .hamiltonian_oracle(Arc::new(SmdHamiltonian(*params)))
        .dissipation_oracle(Arc::new(SmdDissipation(*params)))
        .input_oracle(Arc::new(ConstantMatrixFn(smd_input_matrix())))
        .build(0)
}

/// Closed-form right-hand side of SMDs coupled by `coupling`:
/// `[Diag(J) + C(x) − Diag(R)] ∇H + Diag(G) u`.
pub fn composite_smd_rhs(
    params: &[SmdParams],
    coupling: &CouplingModel,
    x: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let k = params.len();
    check_len("composite state", 2 * k, x.len())?;
    check_len("composite control", k, u.len())?;
    let layout = coupling.layout();
    if layout.dims().iter().any(|&d| d != (2, 1)) || layout.len() != k {
        return Err(Error::LayoutMismatch(format!(
            "coupling layout {:?} does not describe {k} SMDs",
            layout.dims()
        )));
    }
    let mut structure = Matrix::zeros(2 * k, 2 * k);
    let mut dissipation = Matrix::zeros(2 * k, 2 * k);
    let mut grad = vec![0.0; 2 * k];
    for (i, p) in params.iter().enumerate() {
        let o = 2 * i;
        structure[(o, o + 1)] = 1.0;
        structure[(o + 1, o)] = -1.0;
        dissipation[(o + 1, o + 1)] = smd_damping_entry(p, x[o + 1]);
        let g = smd_gradient(p, &x[o..o + 2]);
        grad[o] = g[0];
        grad[o + 1] = g[1];
    }
    let structure = structure.add(&coupling.eval(x)?).sub(&dissipation);
    let mut dx = structure.matvec(&grad);
    for i in 0..k {
        dx[2 * i + 1] += u[i];
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phnn::PortHamiltonian;

    fn sub1() -> SmdParams {
        SmdParams::new(1.0, 1.2, 1.7).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(SmdParams::new(0.0, 1.0, 0.0).is_err());
        assert!(SmdParams::new(1.0, -1.0, 0.0).is_err());
        assert!(SmdParams::new(1.0, 1.0, -0.1).is_err());
        assert!(SmdParams::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn hamiltonian_value() {
        assert!((smd_hamiltonian(&sub1(), &[1.0, 1.0]) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn rhs_values() {
        let p = sub1();
        assert_eq!(smd_rhs(&p, &[0.0, 0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
        let d = smd_rhs(&p, &[1.0, 1.0], &[0.5]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15);
        assert!((d[1] - (-1.2 - 1.7 + 0.5)).abs() < 1e-14);
    }

    #[test]
    fn oracle_model_matches_closed_form() {
        let p = SmdParams::new(1.3, 0.7, 0.4).unwrap();
        let model = smd_oracle_model(&p).unwrap();
        for x in [[0.3, -1.1], [2.0, 0.5], [-0.4, 0.0]] {
            let a = model.rhs(&x, &[0.25]).unwrap();
            let b = smd_rhs(&p, &x, &[0.25]).unwrap();
            for (ai, bi) in a.iter().zip(&b) {
                assert!((ai - bi).abs() < 1e-14);
            }
            assert!((model.hamiltonian(&x).unwrap() - smd_hamiltonian(&p, &x)).abs() < 1e-15);
        }
    }

    #[test]
    fn dissipation_vjp_matches_finite_differences() {
        let d = SmdDissipation(SmdParams::new(1.4, 1.0, 0.9).unwrap());
        let mut adj = Matrix::zeros(2, 2);
        adj[(1, 1)] = 0.7;
        adj[(0, 1)] = 2.0;
        let x = [0.2, -0.8];
        let f = |x: &[f64]| {
            let r = d.eval(x);
            (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| adj[(i, j)] * r[(i, j)])
                .sum()
        };
        let fd = crate::nn::finite_difference_gradient(f, &x, 1e-6);
        let an = d.vjp(&x, &adj);
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
