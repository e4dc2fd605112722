use crate::composition::SubsystemLayout;
use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{init_params, mlp_forward, mlp_vjp_into, MlpSpec, ParameterVector};

const SLOT_FREE: &str = "free_entries";
const SLOT_NET: &str = "coupling_net";

#[derive(Debug, Clone, PartialEq)]
pub enum CouplingKind {
    /// Parameters are the free entries `C[r][c]`, `r < c`, in the order of
    /// [`SubsystemLayout::free_entries`]; `C[c][r] = −C[r][c]`.
    Constant,
    /// `C(x) = M ⊙ (A(x) − A(x)ᵀ)` where `A` is the `n×n` reshaped output of
    /// `net` and `M` masks out the diagonal blocks.
    StateDependent { net: MlpSpec },
}

/// Skew-symmetric coupling with zero diagonal blocks. Both properties hold by
/// construction for every parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingModel {
    layout: SubsystemLayout,
    kind: CouplingKind,
    params: ParameterVector,
}

impl CouplingModel {
    pub fn constant(layout: SubsystemLayout, free_entries: Vec<f64>) -> Result<Self> {
        check_len(
            "coupling free entries",
            layout.free_entries().len(),
            free_entries.len(),
        )?;
        if free_entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coupling free entries".into()));
        }
        let mut params = ParameterVector::new();
        params.push(SLOT_FREE, free_entries);
        Ok(CouplingModel {
            layout,
            kind: CouplingKind::Constant,
            params,
        })
    }

    /// Checks that `matrix` is exactly skew-symmetric with zero diagonal blocks
    /// and stores its free entries.
    pub fn from_matrix(layout: SubsystemLayout, matrix: &Matrix) -> Result<Self> {
        let n = layout.state_dim();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(Error::LayoutMismatch(format!(
                "coupling is {}x{} but the layout has state dimension {n}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for b in 0..layout.len() {
            let r = layout.state_range(b);
            for i in r.clone() {
                for j in r.clone() {
                    if matrix[(i, j)] != 0.0 {
                        return Err(Error::NonzeroDiagonalBlock { block: b });
                    }
                }
            }
        }
        if let Some((row, col)) = matrix.skew_violation() {
            return Err(Error::NotSkewSymmetric { row, col });
        }
        let free = layout
            .free_entries()
            .iter()
            .map(|&(r, c)| matrix[(r, c)])
            .collect();
        Self::constant(layout, free)
    }

    pub fn zero(layout: SubsystemLayout) -> Self {
        let k = layout.free_entries().len();
        Self::constant(layout, vec![0.0; k]).expect("zero coupling is valid")
    }

    /// State-dependent coupling with a freshly initialized tanh MLP.
    pub fn state_dependent(layout: SubsystemLayout, hidden: Vec<usize>, seed: u64) -> Result<Self> {
        let n = layout.state_dim();
        let net = MlpSpec::new(n, hidden, n * n);
        net.validate()?;
        let init = init_params(&net, seed);
        Self::state_dependent_with(layout, net, init.values().to_vec())
    }

    pub fn state_dependent_with(
        layout: SubsystemLayout,
        net: MlpSpec,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = layout.state_dim();
        net.validate()?;
        if net.input_dim != n || net.output_dim != n * n {
            return Err(Error::LayoutMismatch(format!(
                "coupling net maps {} -> {} but the layout needs {n} -> {}",
                net.input_dim,
                net.output_dim,
                n * n
            )));
        }
        check_len("coupling net parameters", net.param_count(), weights.len())?;
        let mut params = ParameterVector::new();
        params.push(SLOT_NET, weights);
        Ok(CouplingModel {
            layout,
            kind: CouplingKind::StateDependent { net },
            params,
        })
    }

    pub fn layout(&self) -> &SubsystemLayout {
        &self.layout
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn state_dim(&self) -> usize {
        self.layout.state_dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Matrix> {
        let n = self.state_dim();
        check_len("coupling state", n, x.len())?;
        let mut c = Matrix::zeros(n, n);
        match &self.kind {
            CouplingKind::Constant => {
                for (&(r, col), &v) in self.layout.free_entries().iter().zip(self.params.values()) {
                    c[(r, col)] = v;
                    c[(col, r)] = -v;
                }
            }
            CouplingKind::StateDependent { net } => {
                let a = mlp_forward(net, self.params.values(), x)?;
                for (r, col) in self.layout.free_entries() {
                    let v = a[r * n + col] - a[col * n + r];
                    c[(r, col)] = v;
                    c[(col, r)] = -v;
                }
            }
        }
        Ok(c)
    }

    /// Given `C̄ = ∂ℓ/∂C`, adds `∂ℓ/∂θ` into `grad` and returns `∂ℓ/∂x`
    /// through `C(x)`.
    pub fn vjp(&self, x: &[f64], c_bar: &Matrix, grad: &mut [f64]) -> Result<Vec<f64>> {
        let n = self.state_dim();
        check_len("coupling state", n, x.len())?;
        check_len("coupling parameter gradient", self.params.len(), grad.len())?;
        match &self.kind {
            CouplingKind::Constant => {
                for (&(r, c), g) in self.layout.free_entries().iter().zip(grad.iter_mut()) {
                    *g += c_bar[(r, c)] - c_bar[(c, r)];
                }
                Ok(vec![0.0; n])
            }
            CouplingKind::StateDependent { net } => {
                let mut a_bar = vec![0.0; n * n];
                for (r, c) in self.layout.free_entries() {
                    let v = c_bar[(r, c)] - c_bar[(c, r)];
                    a_bar[r * n + c] = v;
                    a_bar[c * n + r] = -v;
                }
                mlp_vjp_into(net, self.params.values(), x, &a_bar, Some(grad))
            }
        }
    }
}

/// Chain coupling of `k` two-dimensional subsystems: the momentum of
/// subsystem `i` drives the deflection of subsystem `i + 1`, i.e.
/// `C[p_i][q_{i+1}] = 1` and `C[q_{i+1}][p_i] = −1`.
pub fn chain_coupling(layout: &SubsystemLayout) -> Result<CouplingModel> {
    if layout.dims().iter().any(|d| d.0 != 2) {
        return Err(Error::LayoutMismatch(
            "chain coupling needs two-dimensional subsystems".into(),
        ));
    }
    let n = layout.state_dim();
    let mut c = Matrix::zeros(n, n);
    for i in 0..layout.len().saturating_sub(1) {
        let p = layout.state_range(i).start + 1;
        let q = layout.state_range(i + 1).start;
        c[(p, q)] = 1.0;
        c[(q, p)] = -1.0;
    }
    CouplingModel::from_matrix(layout.clone(), &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_gradient;

    fn two() -> SubsystemLayout {
        SubsystemLayout::uniform(2, 2, 1).unwrap()
    }

    #[test]
    fn chain_coupling_two_smds() {
        let c = chain_coupling(&two()).unwrap();
        assert_eq!(c.params().values(), &[0.0, 0.0, 1.0, 0.0]);
        let m = c.eval(&[0.0; 4]).unwrap();
        assert_eq!(m[(1, 2)], 1.0);
        assert_eq!(m[(2, 1)], -1.0);
        assert_eq!(m.max_abs(), 1.0);
    }

    #[test]
    fn rejects_bad_matrices() {
        let mut m = Matrix::zeros(4, 4);
        m[(0, 2)] = 1.0;
        assert!(matches!(
            CouplingModel::from_matrix(two(), &m),
            Err(Error::NotSkewSymmetric { .. })
        ));
        let mut m = Matrix::zeros(4, 4);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = -1.0;
        assert!(matches!(
            CouplingModel::from_matrix(two(), &m),
            Err(Error::NonzeroDiagonalBlock { block: 0 })
        ));
        assert!(CouplingModel::from_matrix(two(), &Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn state_dependent_is_skew_with_zero_blocks() {
        let c = CouplingModel::state_dependent(two(), vec![8], 4).unwrap();
        let m = c.eval(&[0.3, -0.2, 1.1, 0.5]).unwrap();
        assert!(m.skew_violation().is_none());
        for b in 0..2 {
            let r = c.layout().state_range(b);
            for i in r.clone() {
                for j in r.clone() {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        assert!(m.max_abs() > 0.0);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let c = CouplingModel::state_dependent(two(), vec![6], 9).unwrap();
        let x = [0.4, -0.7, 0.2, 0.9];
        let mut c_bar = Matrix::zeros(4, 4);
        for (i, v) in c_bar.as_mut_slice().iter_mut().enumerate() {
            *v = ((i * 7 % 11) as f64 - 5.0) / 5.0;
        }
        let contract = |m: &Matrix| {
            m.as_slice()
                .iter()
                .zip(c_bar.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let mut grad = vec![0.0; c.params().len()];
        let dx = c.vjp(&x, &c_bar, &mut grad).unwrap();
        let fd_x = finite_difference_gradient(|x| contract(&c.eval(x).unwrap()), &x, 1e-6);
        for (a, b) in dx.iter().zip(&fd_x) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        let theta = c.params().values().to_vec();
        let fd_p = finite_difference_gradient(
            |p| {
                let mut c2 = c.clone();
                c2.params_mut().values_mut().copy_from_slice(p);
                contract(&c2.eval(&x).unwrap())
            },
            &theta,
            1e-6,
        );
        for (a, b) in grad.iter().zip(&fd_p) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_vjp() {
        let c = CouplingModel::constant(two(), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut c_bar = Matrix::zeros(4, 4);
        c_bar[(1, 2)] = 2.0;
        c_bar[(2, 1)] = 0.5;
        let mut g = vec![0.0; 4];
        c.vjp(&[0.0; 4], &c_bar, &mut g).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 1.5, 0.0]);
    }
}
