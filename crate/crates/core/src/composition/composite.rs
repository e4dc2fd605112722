use crate::composition::{CouplingModel, SubsystemLayout};
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, Matrix};
use crate::nn::ParameterVector;
use crate::phnn::{PhnnModel, PortHamiltonian, Trainable};

/// Submodels joined by a skew coupling:
/// `J_c(x) = Diag(J_i) + C(x)`, `R_c = Diag(R_i)`, `G_c = Diag(G_i)`,
/// `H_c = Σ H_i`. Only the coupling parameters are trainable.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    layout: SubsystemLayout,
    submodels: Vec<PhnnModel>,
    coupling: CouplingModel,
    block_interconnection: Matrix,
}

pub fn compose(
    submodels: Vec<PhnnModel>,
    coupling: CouplingModel,
    layout: SubsystemLayout,
) -> Result<CompositeModel> {
    CompositeModel::new(submodels, coupling, layout)
}

impl CompositeModel {
    pub fn new(
        submodels: Vec<PhnnModel>,
        coupling: CouplingModel,
        layout: SubsystemLayout,
    ) -> Result<Self> {
        if submodels.len() != layout.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} submodels for a layout of {} subsystems",
                submodels.len(),
                layout.len()
            )));
        }
        for (i, (m, &(n, c))) in submodels.iter().zip(layout.dims()).enumerate() {
            if m.state_dim() != n || m.control_dim() != c {
                return Err(Error::LayoutMismatch(format!(
                    "submodel {i} has dimensions ({}, {}) but the layout expects ({n}, {c})",
                    m.state_dim(),
                    m.control_dim()
                )));
            }
        }
        if coupling.layout() != &layout {
            return Err(Error::LayoutMismatch(format!(
                "coupling layout {:?} differs from composite layout {:?}",
                coupling.layout().dims(),
                layout.dims()
            )));
        }
        let n = layout.state_dim();
        let mut block_interconnection = Matrix::zeros(n, n);
        for (i, m) in submodels.iter().enumerate() {
            let o = layout.state_range(i).start;
            block_interconnection.set_block(o, o, m.interconnection());
        }
        Ok(CompositeModel {
            layout,
            submodels,
            coupling,
            block_interconnection,
        })
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn submodels(&self) -> &[PhnnModel] {
        &self.submodels
    }

    pub fn coupling(&self) -> &CouplingModel {
        &self.coupling
    }

    pub fn into_coupling(self) -> CouplingModel {
        self.coupling
    }

    /// `Diag(J_i)` without the coupling.
    pub fn block_interconnection(&self) -> &Matrix {
        &self.block_interconnection
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        check_len("composite state", self.layout.state_dim(), x.len())
    }
}

impl PortHamiltonian for CompositeModel {
    fn state_dim(&self) -> usize {
        self.layout.state_dim()
    }

    fn control_dim(&self) -> usize {
        self.layout.control_dim()
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        self.check_state(x)?;
        let mut h = 0.0;
        for (i, sub) in self.submodels.iter().enumerate() {
            h += sub.hamiltonian(&x[self.layout.state_range(i)])?;
        }
        Ok(h)
    }

    fn hamiltonian_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let mut g = Vec::with_capacity(x.len());
        for (i, sub) in self.submodels.iter().enumerate() {
            g.extend(sub.hamiltonian_gradient(&x[self.layout.state_range(i)])?);
        }
        Ok(g)
    }

    fn interconnection_at(&self, x: &[f64]) -> Result<Matrix> {
        self.check_state(x)?;
        Ok(self.block_interconnection.add(&self.coupling.eval(x)?))
    }

    fn dissipation_matrix(&self, x: &[f64]) -> Result<Matrix> {
        self.check_state(x)?;
        let n = self.layout.state_dim();
        let mut r = Matrix::zeros(n, n);
        for (i, sub) in self.submodels.iter().enumerate() {
            let s = self.layout.state_range(i);
            r.set_block(s.start, s.start, &sub.dissipation_matrix(&x[s])?);
        }
        Ok(r)
    }

    fn input_matrix(&self, x: &[f64]) -> Result<Matrix> {
        self.check_state(x)?;
        let mut g = Matrix::zeros(self.layout.state_dim(), self.layout.control_dim());
        for (i, sub) in self.submodels.iter().enumerate() {
            let s = self.layout.state_range(i);
            let c = self.layout.control_range(i);
            g.set_block(s.start, c.start, &sub.input_matrix(&x[s])?);
        }
        Ok(g)
    }
}

impl Trainable for CompositeModel {
    fn parameters(&self) -> &ParameterVector {
        self.coupling.params()
    }

    fn parameters_mut(&mut self) -> &mut ParameterVector {
        self.coupling.params_mut()
    }

    fn rhs_vjp(
        &self,
        x: &[f64],
        u: &[f64],
        cot: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        self.check_state(x)?;
        check_len("composite control", self.layout.control_dim(), u.len())?;
        check_len("composite cotangent", self.layout.state_dim(), cot.len())?;
        let g = self.hamiltonian_gradient(x)?;
        let structure = self
            .interconnection_at(x)?
            .sub(&self.dissipation_matrix(x)?);
        let g_bar = structure.tr_matvec(cot);

        // C(x) g
        let mut dx = self.coupling.vjp(x, &Matrix::outer(cot, &g), param_grad)?;

        for (i, sub) in self.submodels.iter().enumerate() {
            let s = self.layout.state_range(i);
            let c = self.layout.control_range(i);
            let (xi, gi, ci) = (&x[s.clone()], &g[s.clone()], &cot[s.clone()]);
            let mut local = sub.hamiltonian_gradient_vjp(xi, &g_bar[s.clone()], None)?;
            let mut r_bar = Matrix::outer(ci, gi);
            r_bar.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
            axpy(1.0, &sub.dissipation_vjp(xi, &r_bar, None)?, &mut local);
            axpy(
                1.0,
                &sub.input_vjp(xi, &Matrix::outer(ci, &u[c]), None)?,
                &mut local,
            );
            axpy(1.0, &local, &mut dx[s]);
        }
        Ok(dx)
    }
}
