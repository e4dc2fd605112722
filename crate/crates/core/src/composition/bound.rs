//! Sampled evaluation of the composite prediction-error bound
//! `‖P_c − P_c,Θ‖ ≤ Σᵢ [εᵢ + 2 Σ_{j>i} (γᵢⱼ + σᵢⱼ ηⱼ)]`.
//!
//! All norms are Euclidean for vectors and spectral for matrices. Every
//! maximum is taken over the same `n_samples` points drawn from the domain,
//! so the report is a sampled estimate, not a certificate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{CompositeModel, CouplingModel, SubsystemLayout};
use crate::error::{check_len, Error, Result};
use crate::linalg::{norm, sub};
use crate::nn::rng::{derive_seed, seeded_rng};
use crate::phnn::{PhnnModel, PortHamiltonian};
use crate::systems::sample_box;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Interval { low, high }
    }
}

/// Per-subsystem state and control boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDomain {
    pub states: Vec<Vec<Interval>>,
    pub controls: Vec<Vec<Interval>>,
}

impl SamplingDomain {
    /// The same state and control box for every subsystem of `layout`.
    pub fn uniform(layout: &SubsystemLayout, state: Interval, control: Interval) -> Self {
        SamplingDomain {
            states: layout.dims().iter().map(|&(n, _)| vec![state; n]).collect(),
            controls: layout
                .dims()
                .iter()
                .map(|&(_, m)| vec![control; m])
                .collect(),
        }
    }

    pub fn validate(&self, layout: &SubsystemLayout) -> Result<()> {
        check_len("domain state boxes", layout.len(), self.states.len())?;
        check_len("domain control boxes", layout.len(), self.controls.len())?;
        for (i, &(n, m)) in layout.dims().iter().enumerate() {
            check_len("domain state box", n, self.states[i].len())?;
            check_len("domain control box", m, self.controls[i].len())?;
            for iv in self.states[i].iter().chain(&self.controls[i]) {
                if !(iv.low.is_finite() && iv.high.is_finite() && iv.low <= iv.high) {
                    return Err(Error::InvalidArgument(format!(
                        "subsystem {i}: domain interval [{}, {}] is invalid",
                        iv.low, iv.high
                    )));
                }
            }
        }
        Ok(())
    }

    fn bounds(boxes: &[Vec<Interval>]) -> (Vec<f64>, Vec<f64>) {
        boxes.iter().flatten().map(|iv| (iv.low, iv.high)).unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `εᵢ = max ‖Pᵢ − Pᵢ,Θ‖`
    pub eps: Vec<f64>,
    /// `ηᵢ = max ‖∇Hᵢ − ∇Hᵢ,θ‖`
    pub eta: Vec<f64>,
    /// `γᵢⱼ = max ‖(Cᵢⱼ − C_φ,ᵢⱼ) ∇Hⱼ‖`; zero on the diagonal.
    pub gamma: Vec<Vec<f64>>,
    /// `σᵢⱼ = max ‖C_φ,ᵢⱼ‖₂`; zero on the diagonal.
    pub sigma: Vec<Vec<f64>>,
    pub lhs_max: f64,
    /// Lowest sample index attaining `lhs_max`.
    pub lhs_argmax: usize,
    /// `Σᵢ [εᵢ + 2 Σ_{j>i} (γᵢⱼ + σᵢⱼ ηⱼ)]`
    pub rhs: f64,
    /// `Σᵢ εᵢ + Σ_{i≠j} (γᵢⱼ + σᵢⱼ ηⱼ)`, which bounds the error without
    /// assuming the `(i, j)` and `(j, i)` terms coincide.
    pub rhs_all_pairs: f64,
    pub samples: usize,
    pub seed: u64,
    pub domain: SamplingDomain,
}

struct SampleTerms {
    eps: Vec<f64>,
    eta: Vec<f64>,
    gamma: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    lhs: f64,
}

fn check_parts(models: &[PhnnModel], layout: &SubsystemLayout, what: &str) -> Result<()> {
    if models.len() != layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "{} {what} for {} subsystems",
            models.len(),
            layout.len()
        )));
    }
    Ok(())
}

pub fn error_bound_report(
    true_subsystems: &[PhnnModel],
    submodels: &[PhnnModel],
    true_coupling: &CouplingModel,
    learned_coupling: &CouplingModel,
    domain: &SamplingDomain,
    n_samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    let layout = true_coupling.layout().clone();
    if learned_coupling.layout() != &layout {
        return Err(Error::LayoutMismatch(
            "true and learned couplings have different layouts".into(),
        ));
    }
    check_parts(true_subsystems, &layout, "true subsystems")?;
    check_parts(submodels, &layout, "submodels")?;
    domain.validate(&layout)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let truth = CompositeModel::new(
        true_subsystems.to_vec(),
        true_coupling.clone(),
        layout.clone(),
    )?;
    let model = CompositeModel::new(submodels.to_vec(), learned_coupling.clone(), layout.clone())?;
    let (x_lo, x_hi) = SamplingDomain::bounds(&domain.states);
    let (u_lo, u_hi) = SamplingDomain::bounds(&domain.controls);
    let k = layout.len();

    let terms: Vec<SampleTerms> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeded_rng(derive_seed(seed, s as u64));
            let x = sample_box(&mut rng, &x_lo, &x_hi);
            let u = sample_box(&mut rng, &u_lo, &u_hi);
            let lhs = norm(&sub(&truth.rhs(&x, &u)?, &model.rhs(&x, &u)?));
            let c_true = true_coupling.eval(&x)?;
            let c_learned = learned_coupling.eval(&x)?;
            let c_diff = c_true.sub(&c_learned);
            let mut t = SampleTerms {
                eps: vec![0.0; k],
                eta: vec![0.0; k],
                gamma: vec![vec![0.0; k]; k],
                sigma: vec![vec![0.0; k]; k],
                lhs,
            };
            let mut true_grads = Vec::with_capacity(k);
            for i in 0..k {
                let (si, ci) = (layout.state_range(i), layout.control_range(i));
                let (xi, ui) = (&x[si], &u[ci]);
                t.eps[i] = norm(&sub(
                    &true_subsystems[i].rhs(xi, ui)?,
                    &submodels[i].rhs(xi, ui)?,
                ));
                let g_true = true_subsystems[i].hamiltonian_gradient(xi)?;
                t.eta[i] = norm(&sub(&g_true, &submodels[i].hamiltonian_gradient(xi)?));
                true_grads.push(g_true);
            }
            for i in 0..k {
                let si = layout.state_range(i);
                for j in (0..k).filter(|&j| j != i) {
                    let sj = layout.state_range(j);
                    let block =
                        |m: &crate::linalg::Matrix| m.block(si.start, sj.start, si.len(), sj.len());
                    t.gamma[i][j] = norm(&block(&c_diff).matvec(&true_grads[j]));
                    t.sigma[i][j] = block(&c_learned).spectral_norm();
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;

    let mut eps = vec![0.0; k];
    let mut eta = vec![0.0; k];
    let mut gamma = vec![vec![0.0; k]; k];
    let mut sigma = vec![vec![0.0; k]; k];
    let (mut lhs_max, mut lhs_argmax) = (f64::NEG_INFINITY, 0);
    for (s, t) in terms.iter().enumerate() {
        for i in 0..k {
            eps[i] = f64::max(eps[i], t.eps[i]);
            eta[i] = f64::max(eta[i], t.eta[i]);
            for j in 0..k {
                gamma[i][j] = f64::max(gamma[i][j], t.gamma[i][j]);
                sigma[i][j] = f64::max(sigma[i][j], t.sigma[i][j]);
            }
        }
        if t.lhs > lhs_max {
            lhs_max = t.lhs;
            lhs_argmax = s;
        }
    }

    let mut rhs = 0.0;
    let mut rhs_all_pairs = 0.0;
    for i in 0..k {
        rhs += eps[i];
        rhs_all_pairs += eps[i];
        for j in 0..k {
            let term = gamma[i][j] + sigma[i][j] * eta[j];
            if j > i {
                rhs += 2.0 * term;
            }
            if j != i {
                rhs_all_pairs += term;
            }
        }
    }

    Ok(BoundReport {
        eps,
        eta,
        gamma,
        sigma,
        lhs_max,
        lhs_argmax,
        rhs,
        rhs_all_pairs,
        samples: n_samples,
        seed,
        domain: domain.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::chain_coupling;
    use crate::systems::{smd_oracle_model, SmdHamiltonian, SmdParams};
    use std::sync::Arc;

    fn params() -> Vec<SmdParams> {
        vec![
            SmdParams::new(1.0, 1.2, 1.7).unwrap(),
            SmdParams::new(1.0, 1.5, 1.7).unwrap(),
        ]
    }

    fn oracles() -> Vec<PhnnModel> {
        params()
            .iter()
            .map(|p| smd_oracle_model(p).unwrap())
            .collect()
    }

    fn domain(layout: &SubsystemLayout) -> SamplingDomain {
        SamplingDomain::uniform(layout, Interval::new(-1.0, 1.0), Interval::new(-0.5, 0.5))
    }

    /// Oracle SMD whose Hamiltonian gradient is shifted by `offset`.
    fn offset_model(p: &SmdParams, offset: Vec<f64>) -> PhnnModel {
        use crate::systems::{
            canonical_interconnection, smd_input_matrix, ConstantMatrixFn, OffsetHamiltonian,
            SmdDissipation,
        };
        PhnnModel::builder(2, 1, canonical_interconnection())
            .hamiltonian_oracle(Arc::new(OffsetHamiltonian {
                base: Arc::new(SmdHamiltonian(*p)),
                offset,
            }))
            .dissipation_oracle(Arc::new(SmdDissipation(*p)))
            .input_oracle(Arc::new(ConstantMatrixFn(smd_input_matrix())))
            .build(0)
            .unwrap()
    }

    #[test]
    fn exact_model_has_zero_bound() {
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        let c = chain_coupling(&layout).unwrap();
        let r =
            error_bound_report(&oracles(), &oracles(), &c, &c, &domain(&layout), 200, 1).unwrap();
        assert_eq!(r.lhs_max, 0.0);
        assert_eq!(r.rhs, 0.0);
        assert!(r.eps.iter().chain(&r.eta).all(|&v| v == 0.0));
        assert_eq!(r.sigma[0][1], 1.0);
        assert_eq!(r.samples, 200);
    }

    #[test]
    fn gradient_offset_sets_eta() {
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        let c = chain_coupling(&layout).unwrap();
        let p = params();
        let perturbed = vec![
            smd_oracle_model(&p[0]).unwrap(),
            offset_model(&p[1], vec![0.06, 0.08]),
        ];
        let r =
            error_bound_report(&oracles(), &perturbed, &c, &c, &domain(&layout), 100, 2).unwrap();
        assert_eq!(r.eta[0], 0.0);
        assert!((r.eta[1] - 0.1).abs() < 1e-12, "{}", r.eta[1]);
        assert!(r.lhs_max <= r.rhs);
        assert!(r.lhs_max <= r.rhs_all_pairs);
    }

    /// Only the first subsystem's gradient is wrong and the coupling is exact.
    /// The error it induces through `C₂₁` is counted by the all-pairs bound
    /// but has no term in the upper-triangular sum.
    #[test]
    fn upper_triangular_sum_can_miss_lower_coupling_error() {
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        let c = chain_coupling(&layout).unwrap();
        let p = params();
        let perturbed = vec![
            offset_model(&p[0], vec![0.0, 0.1]),
            smd_oracle_model(&p[1]).unwrap(),
        ];
        let r =
            error_bound_report(&oracles(), &perturbed, &c, &c, &domain(&layout), 500, 3).unwrap();
        assert_eq!(r.rhs, r.eps[0]);
        assert!(r.lhs_max > r.rhs);
        assert!(r.lhs_max <= r.rhs_all_pairs + 1e-15);
    }

    #[test]
    fn deterministic_for_seed() {
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        let c = chain_coupling(&layout).unwrap();
        let learned =
            CouplingModel::constant(layout.clone(), vec![0.01, -0.02, 0.97, 0.03]).unwrap();
        let a = error_bound_report(
            &oracles(),
            &oracles(),
            &c,
            &learned,
            &domain(&layout),
            300,
            9,
        )
        .unwrap();
        let b = error_bound_report(
            &oracles(),
            &oracles(),
            &c,
            &learned,
            &domain(&layout),
            300,
            9,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.gamma[0][1] > 0.0 && a.gamma[1][0] > 0.0);
        assert_eq!(a.gamma[0][0], 0.0);
    }

    #[test]
    fn rejects_zero_samples_and_bad_domain() {
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        let c = chain_coupling(&layout).unwrap();
        assert!(
            error_bound_report(&oracles(), &oracles(), &c, &c, &domain(&layout), 0, 0).is_err()
        );
        let mut d = domain(&layout);
        d.states[1][0] = Interval::new(1.0, -1.0);
        assert!(error_bound_report(&oracles(), &oracles(), &c, &c, &d, 10, 0).is_err());
    }
}
