use std::sync::Arc;

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::nn::mlp::init_weights;
use crate::nn::rng::{derive_seed, seeded_rng};
use crate::nn::{
    jvp_vjp_into, mlp_forward, mlp_vjp_into, scalar_input_gradient, MlpSpec, ParameterVector,
};
use crate::phnn::terms::{
    cholesky_entry_count, cholesky_factor, cholesky_raw_adjoint, DissipationSpec, DissipationTerm,
    HamiltonianFn, HamiltonianTerm, InputSpec, InputTerm, MatrixFn,
};
use crate::phnn::{PortHamiltonian, Trainable};

pub(crate) const SLOT_HAMILTONIAN: &str = "hamiltonian";
pub(crate) const SLOT_DISSIPATION: &str = "dissipation";
pub(crate) const SLOT_INPUT: &str = "input";

/// Half-width of the uniform initialization of constant parameter blocks.
const CONSTANT_INIT_SCALE: f64 = 0.5;

/// One port-Hamiltonian submodel with a fixed, exactly skew-symmetric `J`.
#[derive(Debug, Clone)]
pub struct PhnnModel {
    state_dim: usize,
    control_dim: usize,
    interconnection: Matrix,
    hamiltonian: HamiltonianTerm,
    dissipation: DissipationTerm,
    input: InputTerm,
    params: ParameterVector,
}

/// Builder for [`PhnnModel`]. Defaults to tanh MLPs with two hidden layers of
/// 32 units for `H` and `R`, and a constant `G`.
#[derive(Debug, Clone)]
pub struct PhnnBuilder {
    state_dim: usize,
    control_dim: usize,
    interconnection: Matrix,
    hamiltonian: HamiltonianTerm,
    dissipation: DissipationTerm,
    input: InputTerm,
}

impl PhnnBuilder {
    pub fn new(state_dim: usize, control_dim: usize, interconnection: Matrix) -> Self {
        let hidden = vec![32, 32];
        PhnnBuilder {
            state_dim,
            control_dim,
            interconnection,
            hamiltonian: HamiltonianTerm::Mlp(MlpSpec::new(state_dim, hidden.clone(), 1)),
            dissipation: DissipationTerm::Learned(DissipationSpec::MlpCholesky {
                net: MlpSpec::new(state_dim, hidden, cholesky_entry_count(state_dim)),
            }),
            input: InputTerm::Learned(InputSpec::ConstantMatrix),
        }
    }

    pub fn hamiltonian_mlp(mut self, hidden: Vec<usize>) -> Self {
        self.hamiltonian = HamiltonianTerm::Mlp(MlpSpec::new(self.state_dim, hidden, 1));
        self
    }

    pub fn hamiltonian_oracle(mut self, h: Arc<dyn HamiltonianFn>) -> Self {
        self.hamiltonian = HamiltonianTerm::Oracle(h);
        self
    }

    pub fn dissipation_constant(mut self) -> Self {
        self.dissipation = DissipationTerm::Learned(DissipationSpec::ConstantCholesky);
        self
    }

    pub fn dissipation_mlp(mut self, hidden: Vec<usize>) -> Self {
        let net = MlpSpec::new(self.state_dim, hidden, cholesky_entry_count(self.state_dim));
        self.dissipation = DissipationTerm::Learned(DissipationSpec::MlpCholesky { net });
        self
    }

    pub fn dissipation_oracle(mut self, r: Arc<dyn MatrixFn>) -> Self {
        self.dissipation = DissipationTerm::Oracle(r);
        self
    }

    pub fn input_constant(mut self) -> Self {
        self.input = InputTerm::Learned(InputSpec::ConstantMatrix);
        self
    }

    pub fn input_mlp(mut self, hidden: Vec<usize>) -> Self {
        let net = MlpSpec::new(self.state_dim, hidden, self.state_dim * self.control_dim);
        self.input = InputTerm::Learned(InputSpec::MlpMatrix { net });
        self
    }

    pub fn input_oracle(mut self, g: Arc<dyn MatrixFn>) -> Self {
        self.input = InputTerm::Oracle(g);
        self
    }

    /// Randomly initialized parameters, deterministic in `seed`.
    pub fn build(self, seed: u64) -> Result<PhnnModel> {
        let (n, m) = (self.state_dim, self.control_dim);
        let mut params = ParameterVector::new();
        let h = match &self.hamiltonian {
            HamiltonianTerm::Mlp(spec) => init_weights(spec, &mut seeded_rng(derive_seed(seed, 0))),
            HamiltonianTerm::Oracle(_) => Vec::new(),
        };
        params.push(SLOT_HAMILTONIAN, h);
        let d = match &self.dissipation {
            DissipationTerm::Learned(DissipationSpec::MlpCholesky { net }) => {
                init_weights(net, &mut seeded_rng(derive_seed(seed, 1)))
            }
            DissipationTerm::Learned(DissipationSpec::ConstantCholesky) => {
                uniform_block(cholesky_entry_count(n), derive_seed(seed, 1))
            }
            DissipationTerm::Oracle(_) => Vec::new(),
        };
        params.push(SLOT_DISSIPATION, d);
        let g = match &self.input {
            InputTerm::Learned(InputSpec::MlpMatrix { net }) => {
                init_weights(net, &mut seeded_rng(derive_seed(seed, 2)))
            }
            InputTerm::Learned(InputSpec::ConstantMatrix) => {
                uniform_block(n * m, derive_seed(seed, 2))
            }
            InputTerm::Oracle(_) => Vec::new(),
        };
        params.push(SLOT_INPUT, g);
        self.build_with(params)
    }

    /// Uses the given parameters, which must match the term layout.
    pub fn build_with(self, params: ParameterVector) -> Result<PhnnModel> {
        PhnnModel::from_parts(
            self.state_dim,
            self.control_dim,
            self.interconnection,
            self.hamiltonian,
            self.dissipation,
            self.input,
            params,
        )
    }
}

fn uniform_block(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    (0..len)
        .map(|_| rng.random_range(-CONSTANT_INIT_SCALE..=CONSTANT_INIT_SCALE))
        .collect()
}

impl PhnnModel {
    pub fn builder(state_dim: usize, control_dim: usize, interconnection: Matrix) -> PhnnBuilder {
        PhnnBuilder::new(state_dim, control_dim, interconnection)
    }

    pub fn from_parts(
        state_dim: usize,
        control_dim: usize,
        interconnection: Matrix,
        hamiltonian: HamiltonianTerm,
        dissipation: DissipationTerm,
        input: InputTerm,
        params: ParameterVector,
    ) -> Result<Self> {
        let n = state_dim;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "state dimension must be positive".into(),
            ));
        }
        check_len("interconnection rows", n, interconnection.rows())?;
        check_len("interconnection cols", n, interconnection.cols())?;
        if let Some((row, col)) = interconnection.skew_violation() {
            return Err(Error::NotSkewSymmetric { row, col });
        }

        let expect = |slot: &str, len: usize| -> Result<()> {
            let got = params.slot(slot).map(|s| s.len);
            if got != Some(len) {
                return Err(Error::LayoutMismatch(format!(
                    "slot '{slot}' should hold {len} parameters, found {got:?}"
                )));
            }
            Ok(())
        };
        let check_net = |net: &MlpSpec, out: usize, what: &str| -> Result<()> {
            net.validate()?;
            if net.input_dim != n || net.output_dim != out {
                return Err(Error::LayoutMismatch(format!(
                    "{what} network maps {} -> {}, expected {n} -> {out}",
                    net.input_dim, net.output_dim
                )));
            }
            Ok(())
        };

        match &hamiltonian {
            HamiltonianTerm::Mlp(net) => {
                check_net(net, 1, "Hamiltonian")?;
                expect(SLOT_HAMILTONIAN, net.param_count())?;
            }
            HamiltonianTerm::Oracle(_) => expect(SLOT_HAMILTONIAN, 0)?,
        }
        match &dissipation {
            DissipationTerm::Learned(DissipationSpec::ConstantCholesky) => {
                expect(SLOT_DISSIPATION, cholesky_entry_count(n))?
            }
            DissipationTerm::Learned(DissipationSpec::MlpCholesky { net }) => {
                check_net(net, cholesky_entry_count(n), "dissipation")?;
                expect(SLOT_DISSIPATION, net.param_count())?;
            }
            DissipationTerm::Oracle(_) => expect(SLOT_DISSIPATION, 0)?,
        }
        match &input {
            InputTerm::Learned(InputSpec::ConstantMatrix) => expect(SLOT_INPUT, n * control_dim)?,
            InputTerm::Learned(InputSpec::MlpMatrix { net }) => {
                check_net(net, n * control_dim, "input-matrix")?;
                expect(SLOT_INPUT, net.param_count())?;
            }
            InputTerm::Oracle(_) => expect(SLOT_INPUT, 0)?,
        }
        if params.layout().len() != 3 {
            return Err(Error::LayoutMismatch(format!(
                "expected 3 parameter slots, found {}",
                params.layout().len()
            )));
        }
        Ok(PhnnModel {
            state_dim,
            control_dim,
            interconnection,
            hamiltonian,
            dissipation,
            input,
            params,
        })
    }

    pub fn interconnection(&self) -> &Matrix {
        &self.interconnection
    }

    pub fn hamiltonian_term(&self) -> &HamiltonianTerm {
        &self.hamiltonian
    }

    pub fn dissipation_term(&self) -> &DissipationTerm {
        &self.dissipation
    }

    pub fn input_term(&self) -> &InputTerm {
        &self.input
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    /// True when every term is learned (no oracles), i.e. the model can be
    /// checkpointed.
    pub fn is_learned(&self) -> bool {
        !matches!(self.hamiltonian, HamiltonianTerm::Oracle(_))
            && !matches!(self.dissipation, DissipationTerm::Oracle(_))
            && !matches!(self.input, InputTerm::Oracle(_))
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        check_len("model parameters", self.params.len(), values.len())?;
        self.params.values_mut().copy_from_slice(values);
        Ok(())
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        check_len("state", self.state_dim, x.len())
    }

    /// Raw lower-triangular entries for learned dissipation terms.
    fn cholesky_raw(&self, spec: &DissipationSpec, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.params.get(SLOT_DISSIPATION);
        match spec {
            DissipationSpec::ConstantCholesky => Ok(p.to_vec()),
            DissipationSpec::MlpCholesky { net } => mlp_forward(net, p, x),
        }
    }

    /// Adds `vᵀ ∂∇H/∂θ` into `grad` and returns `∇²H v`.
    pub fn hamiltonian_gradient_vjp(
        &self,
        x: &[f64],
        v: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        self.check_state(x)?;
        check_len("gradient cotangent", self.state_dim, v.len())?;
        match &self.hamiltonian {
            HamiltonianTerm::Mlp(net) => {
                let range = self.params.range(SLOT_HAMILTONIAN);
                let slot = grad.map(|g| &mut g[range]);
                jvp_vjp_into(net, self.params.get(SLOT_HAMILTONIAN), x, v, &[1.0], slot)
            }
            HamiltonianTerm::Oracle(h) => Ok(h.hessian_vector(x, v)),
        }
    }

    /// Adds `Σ r_bar ⊙ ∂R/∂θ` into `grad` and returns `Σ r_bar ⊙ ∂R/∂x`.
    pub fn dissipation_vjp(
        &self,
        x: &[f64],
        r_bar: &Matrix,
        grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let n = self.state_dim;
        match &self.dissipation {
            DissipationTerm::Oracle(r) => Ok(r.vjp(x, r_bar)),
            DissipationTerm::Learned(spec) => {
                let raw = self.cholesky_raw(spec, x)?;
                let raw_bar = cholesky_raw_adjoint(n, &raw, r_bar);
                let range = self.params.range(SLOT_DISSIPATION);
                match spec {
                    DissipationSpec::ConstantCholesky => {
                        if let Some(g) = grad {
                            for (gi, rb) in g[range].iter_mut().zip(&raw_bar) {
                                *gi += rb;
                            }
                        }
                        Ok(vec![0.0; n])
                    }
                    DissipationSpec::MlpCholesky { net } => {
                        let slot = grad.map(|g| &mut g[range]);
                        mlp_vjp_into(net, self.params.get(SLOT_DISSIPATION), x, &raw_bar, slot)
                    }
                }
            }
        }
    }

    /// Adds `Σ g_bar ⊙ ∂G/∂θ` into `grad` and returns `Σ g_bar ⊙ ∂G/∂x`.
    pub fn input_vjp(
        &self,
        x: &[f64],
        g_bar: &Matrix,
        grad: Option<&mut [f64]>,
    ) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let range = self.params.range(SLOT_INPUT);
        match &self.input {
            InputTerm::Oracle(g) => Ok(g.vjp(x, g_bar)),
            InputTerm::Learned(InputSpec::ConstantMatrix) => {
                if let Some(g) = grad {
                    for (gi, gb) in g[range].iter_mut().zip(g_bar.as_slice()) {
                        *gi += gb;
                    }
                }
                Ok(vec![0.0; self.state_dim])
            }
            InputTerm::Learned(InputSpec::MlpMatrix { net }) => {
                let slot = grad.map(|g| &mut g[range]);
                mlp_vjp_into(net, self.params.get(SLOT_INPUT), x, g_bar.as_slice(), slot)
            }
        }
    }
}

impl PortHamiltonian for PhnnModel {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn control_dim(&self) -> usize {
        self.control_dim
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        self.check_state(x)?;
        match &self.hamiltonian {
            HamiltonianTerm::Mlp(net) => {
                Ok(mlp_forward(net, self.params.get(SLOT_HAMILTONIAN), x)?[0])
            }
            HamiltonianTerm::Oracle(h) => Ok(h.value(x)),
        }
    }

    fn hamiltonian_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        match &self.hamiltonian {
            HamiltonianTerm::Mlp(net) => {
                scalar_input_gradient(net, self.params.get(SLOT_HAMILTONIAN), x)
            }
            HamiltonianTerm::Oracle(h) => Ok(h.gradient(x)),
        }
    }

    fn interconnection_at(&self, _x: &[f64]) -> Result<Matrix> {
        Ok(self.interconnection.clone())
    }

    fn dissipation_matrix(&self, x: &[f64]) -> Result<Matrix> {
        self.check_state(x)?;
        match &self.dissipation {
            DissipationTerm::Oracle(r) => Ok(r.eval(x)),
            DissipationTerm::Learned(spec) => {
                let l = cholesky_factor(self.state_dim, &self.cholesky_raw(spec, x)?);
                Ok(l.matmul(&l.transpose()))
            }
        }
    }

    fn input_matrix(&self, x: &[f64]) -> Result<Matrix> {
        self.check_state(x)?;
        let (n, m) = (self.state_dim, self.control_dim);
        match &self.input {
            InputTerm::Oracle(g) => Ok(g.eval(x)),
            InputTerm::Learned(InputSpec::ConstantMatrix) => {
                Matrix::from_row_major(n, m, self.params.get(SLOT_INPUT).to_vec())
            }
            InputTerm::Learned(InputSpec::MlpMatrix { net }) => {
                Matrix::from_row_major(n, m, mlp_forward(net, self.params.get(SLOT_INPUT), x)?)
            }
        }
    }
}

impl Trainable for PhnnModel {
    fn parameters(&self) -> &ParameterVector {
        &self.params
    }

    fn parameters_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    fn rhs_vjp(
        &self,
        x: &[f64],
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_state(x)?;
        check_len("control", self.control_dim, u.len())?;
        check_len("rhs cotangent", self.state_dim, cot.len())?;
        check_len("parameter gradient", self.params.len(), param_grad.len())?;
        let grad_h = self.hamiltonian_gradient(x)?;
        let r = self.dissipation_matrix(x)?;

        // f = J ∇H − R ∇H + G u
        let mut g_bar = self.interconnection.tr_matvec(cot);
        for (gb, rc) in g_bar.iter_mut().zip(r.tr_matvec(cot)) {
            *gb -= rc;
        }
        let mut r_bar = Matrix::outer(cot, &grad_h);
        r_bar.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        let in_bar = Matrix::outer(cot, u);

        let mut dx = self.hamiltonian_gradient_vjp(x, &g_bar, Some(param_grad))?;
        for (d, v) in dx
            .iter_mut()
            .zip(self.dissipation_vjp(x, &r_bar, Some(param_grad))?)
        {
            *d += v;
        }
        for (d, v) in dx
            .iter_mut()
            .zip(self.input_vjp(x, &in_bar, Some(param_grad))?)
        {
            *d += v;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_gradient;
    use crate::nn::rng::seeded_rng;

    fn j2() -> Matrix {
        Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]])
    }

    fn zeroed(model: PhnnModel) -> PhnnModel {
        let mut m = model;
        let zeros = vec![0.0; m.params.len()];
        m.set_params(&zeros).unwrap();
        m
    }

    #[test]
    fn rejects_non_skew_interconnection() {
        let j = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(
            PhnnModel::builder(2, 1, j).build(0),
            Err(Error::NotSkewSymmetric { .. })
        ));
    }

    #[test]
    fn zero_parameters_zero_terms() {
        let m = zeroed(PhnnModel::builder(2, 1, j2()).build(0).unwrap());
        let x = [0.4, -1.3];
        assert_eq!(m.hamiltonian(&x).unwrap(), 0.0);
        assert_eq!(m.hamiltonian_gradient(&x).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.dissipation_matrix(&x).unwrap().max_abs(), 0.0);
        assert_eq!(m.input_matrix(&x).unwrap().max_abs(), 0.0);
        assert_eq!(m.rhs(&x, &[0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.output(&x).unwrap(), vec![0.0]);

        let mlp_g = zeroed(
            PhnnModel::builder(2, 1, j2())
                .input_mlp(vec![4])
                .build(0)
                .unwrap(),
        );
        assert_eq!(mlp_g.input_matrix(&x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn constant_dissipation_from_raw_entries() {
        let mut m = PhnnModel::builder(2, 1, j2())
            .dissipation_constant()
            .build(0)
            .unwrap();
        let r = m.params.range(SLOT_DISSIPATION);
        m.params.values_mut()[r].copy_from_slice(&[1.0, 2.0, 3.0f64.sqrt()]);
        let rm = m.dissipation_matrix(&[0.0, 0.0]).unwrap();
        let want = [1.0, 2.0, 2.0, 13.0];
        for (a, b) in rm.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_input_matrix_entries() {
        let mut m = PhnnModel::builder(2, 1, j2()).build(0).unwrap();
        m.params.get_mut(SLOT_INPUT).copy_from_slice(&[0.0, 1.0]);
        for x in [[0.0, 0.0], [3.0, -2.0]] {
            assert_eq!(
                m.input_matrix(&x).unwrap(),
                Matrix::from_rows(&[&[0.0], &[1.0]])
            );
        }
    }

    #[test]
    fn scalar_hamiltonian_for_any_state_dim() {
        for n in [2usize, 20] {
            let j = Matrix::zeros(n, n);
            let m = PhnnModel::builder(n, 1, j).build(1).unwrap();
            let h = m.hamiltonian(&vec![0.1; n]).unwrap();
            assert!(h.is_finite());
            assert_eq!(m.hamiltonian_gradient(&vec![0.1; n]).unwrap().len(), n);
            assert_eq!(m.output(&vec![0.1; n]).unwrap().len(), 1);
        }
    }

    #[test]
    fn layout_mismatch_detected() {
        let m = PhnnModel::builder(2, 1, j2()).build(0).unwrap();
        let bad = PhnnModel::builder(4, 1, Matrix::zeros(4, 4)).build_with(m.params.clone());
        assert!(matches!(bad, Err(Error::LayoutMismatch(_))));
    }

    #[test]
    fn dimension_mismatch_errors() {
        let m = PhnnModel::builder(2, 1, j2()).build(0).unwrap();
        assert!(m.hamiltonian(&[1.0]).is_err());
        assert!(m.rhs(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(m.dissipation_matrix(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn rhs_vjp_matches_finite_differences() {
        let variants = [
            PhnnModel::builder(
                3,
                2,
                Matrix::from_rows(&[&[0.0, 1.0, -0.5], &[-1.0, 0.0, 2.0], &[0.5, -2.0, 0.0]]),
            )
            .hamiltonian_mlp(vec![6, 5])
            .dissipation_mlp(vec![4])
            .input_mlp(vec![3])
            .build(4)
            .unwrap(),
            PhnnModel::builder(2, 1, j2())
                .hamiltonian_mlp(vec![8])
                .dissipation_constant()
                .build(5)
                .unwrap(),
        ];
        let mut rng = seeded_rng(17);
        for model in variants {
            let n = model.state_dim;
            let m = model.control_dim;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cot: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut pg = vec![0.0; model.params.len()];
            let dx = model.rhs_vjp(&x, &u, &cot, &mut pg).unwrap();

            let phi_x = |xx: &[f64]| crate::linalg::dot(&model.rhs(xx, &u).unwrap(), &cot);
            let fd_x = finite_difference_gradient(phi_x, &x, 1e-6);
            for (a, b) in dx.iter().zip(&fd_x) {
                assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "dx {a} vs {b}");
            }
            let base = model.params.values().to_vec();
            let phi_p = |p: &[f64]| {
                let mut mm = model.clone();
                mm.set_params(p).unwrap();
                crate::linalg::dot(&mm.rhs(&x, &u).unwrap(), &cot)
            };
            let fd_p = finite_difference_gradient(phi_p, &base, 1e-6);
            for (i, (a, b)) in pg.iter().zip(&fd_p).enumerate() {
                assert!(
                    (a - b).abs() < 1e-6 * (1.0 + b.abs()),
                    "param {i}: {a} vs {b}"
                );
            }
        }
    }
}
