//! Fully connected tanh networks with hand-written reverse-mode derivatives.
//!
//! Parameters are stored flat, layer by layer: the row-major weight matrix
//! `(out × in)` followed by the bias vector `(out)`. Hidden layers apply `tanh`;
//! the output layer is affine.
//!
//! Besides the usual forward pass and vector-Jacobian product, this module
//! provides [`jvp_vjp_into`], the reverse-mode derivative of a Jacobian-vector
//! product. Port-Hamiltonian right-hand sides contain `∇ₓH(x)`, so training
//! through an integrator needs derivatives of an input gradient with respect to
//! both parameters and input.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;
use crate::nn::params::ParameterVector;
use crate::nn::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all MLP widths must be at least 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    fn check(&self, params: &[f64], input: &[f64]) -> Result<()> {
        check_len("MLP parameters", self.param_count(), params.len())?;
        check_len("MLP input", self.input_dim, input.len())
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_weights<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        out.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)));
        out.extend(std::iter::repeat_n(0.0, fan_out));
    }
    out
}

pub fn init_params(spec: &MlpSpec, seed: u64) -> ParameterVector {
    let mut rng = seeded_rng(seed);
    let mut p = ParameterVector::new();
    p.push("mlp", init_weights(spec, &mut rng));
    p
}

struct Layer<'a> {
    w: &'a [f64],
    b: &'a [f64],
    fan_in: usize,
    fan_out: usize,
}

impl Layer<'_> {
    fn affine(&self, a: &[f64]) -> Vec<f64> {
        (0..self.fan_out)
            .map(|o| {
                let row = &self.w[o * self.fan_in..(o + 1) * self.fan_in];
                row.iter().zip(a).fold(self.b[o], |acc, (w, x)| acc + w * x)
            })
            .collect()
    }

    fn linear(&self, a: &[f64]) -> Vec<f64> {
        (0..self.fan_out)
            .map(|o| {
                let row = &self.w[o * self.fan_in..(o + 1) * self.fan_in];
                row.iter().zip(a).fold(0.0, |acc, (w, x)| acc + w * x)
            })
            .collect()
    }

    /// `Wᵀ v`
    fn tr(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.fan_in];
        for (o, &vo) in v.iter().enumerate() {
            if vo == 0.0 {
                continue;
            }
            let row = &self.w[o * self.fan_in..(o + 1) * self.fan_in];
            for (acc, w) in out.iter_mut().zip(row) {
                *acc += w * vo;
            }
        }
        out
    }
}

fn layers<'a>(spec: &MlpSpec, params: &'a [f64]) -> Vec<Layer<'a>> {
    let mut offset = 0;
    spec.layer_dims()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w = &params[offset..offset + fan_in * fan_out];
            offset += fan_in * fan_out;
            let b = &params[offset..offset + fan_out];
            offset += fan_out;
            Layer {
                w,
                b,
                fan_in,
                fan_out,
            }
        })
        .collect()
}

/// Adds `scale * (z aᵀ, z)` into the gradient slot of one layer.
fn accumulate_layer_grad(
    grad: &mut [f64],
    offset: usize,
    layer: &Layer<'_>,
    z_bar: &[f64],
    a: &[f64],
    with_bias: bool,
) {
    let (n_in, n_out) = (layer.fan_in, layer.fan_out);
    for o in 0..n_out {
        let zo = z_bar[o];
        if zo == 0.0 {
            continue;
        }
        let row = &mut grad[offset + o * n_in..offset + (o + 1) * n_in];
        for (g, ai) in row.iter_mut().zip(a) {
            *g += zo * ai;
        }
        if with_bias {
            grad[offset + n_in * n_out + o] += zo;
        }
    }
}

fn layer_offsets(spec: &MlpSpec) -> Vec<usize> {
    let mut offsets = Vec::new();
    let mut acc = 0;
    for (i, o) in spec.layer_dims() {
        offsets.push(acc);
        acc += (i + 1) * o;
    }
    offsets
}

/// Post-activation values of every layer, `acts[0]` being the input and the
/// last entry the (affine) output.
fn forward_trace(layers: &[Layer<'_>], input: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input.to_vec());
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let mut z = layer.affine(&acts[l]);
        if l < last {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(z);
    }
    acts
}

pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    spec.check(params, input)?;
    let layers = layers(spec, params);
    Ok(forward_trace(&layers, input).pop().unwrap_or_default())
}

/// Reverse-mode vector-Jacobian product. Parameter gradients are *added* into
/// `param_grad`; the input gradient is returned.
pub fn mlp_vjp_into(
    spec: &MlpSpec,
    params: &[f64],
    input: &[f64],
    cotangent: &[f64],
    param_grad: Option<&mut [f64]>,
) -> Result<Vec<f64>> {
    spec.check(params, input)?;
    check_len("MLP cotangent", spec.output_dim, cotangent.len())?;
    let layers = layers(spec, params);
    let acts = forward_trace(&layers, input);
    let offsets = layer_offsets(spec);
    let mut param_grad = param_grad;
    if let Some(g) = param_grad.as_deref() {
        check_len("MLP parameter gradient", spec.param_count(), g.len())?;
    }

    let last = layers.len() - 1;
    let mut z_bar = cotangent.to_vec();
    for l in (0..layers.len()).rev() {
        if l < last {
            // acts[l + 1] = tanh(z)
            for (zb, a) in z_bar.iter_mut().zip(&acts[l + 1]) {
                *zb *= 1.0 - a * a;
            }
        }
        if let Some(g) = param_grad.as_deref_mut() {
            accumulate_layer_grad(g, offsets[l], &layers[l], &z_bar, &acts[l], true);
        }
        z_bar = layers[l].tr(&z_bar);
    }
    Ok(z_bar)
}

/// Returns `(cotangentᵀ ∂f/∂θ, cotangentᵀ ∂f/∂x)`.
pub fn mlp_vjp(
    spec: &MlpSpec,
    params: &[f64],
    input: &[f64],
    cotangent: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pg = vec![0.0; spec.param_count()];
    let ig = mlp_vjp_into(spec, params, input, cotangent, Some(&mut pg))?;
    Ok((pg, ig))
}

/// Jacobian `∂f/∂x` as an `output_dim × input_dim` matrix.
pub fn mlp_input_gradient(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Matrix> {
    spec.check(params, input)?;
    let mut jac = Matrix::zeros(spec.output_dim, spec.input_dim);
    let mut e = vec![0.0; spec.output_dim];
    for o in 0..spec.output_dim {
        e[o] = 1.0;
        let row = mlp_vjp_into(spec, params, input, &e, None)?;
        e[o] = 0.0;
        jac.set_block(o, 0, &Matrix::from_row_major(1, spec.input_dim, row)?);
    }
    Ok(jac)
}

/// Gradient of a scalar-output network with respect to its input.
pub fn scalar_input_gradient(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    check_len("scalar MLP output", 1, spec.output_dim)?;
    mlp_vjp_into(spec, params, input, &[1.0], None)
}

/// Reverse-mode derivative of the directional derivative
/// `φ(θ, x) = weightᵀ (∂f/∂x)(x) · tangent`.
///
/// For a scalar network with `weight = [1]` this is `tangentᵀ ∇ₓf(x)`, so the
/// returned input gradient is the Hessian-vector product `∇²ₓf · tangent` and
/// the parameter gradient (added into `param_grad`) is `∂(tangentᵀ∇ₓf)/∂θ`.
pub fn jvp_vjp_into(
    spec: &MlpSpec,
    params: &[f64],
    input: &[f64],
    tangent: &[f64],
    weight: &[f64],
    param_grad: Option<&mut [f64]>,
) -> Result<Vec<f64>> {
    spec.check(params, input)?;
    check_len("JVP tangent", spec.input_dim, tangent.len())?;
    check_len("JVP output weight", spec.output_dim, weight.len())?;
    let layers = layers(spec, params);
    let offsets = layer_offsets(spec);
    let mut param_grad = param_grad;
    if let Some(g) = param_grad.as_deref() {
        check_len("MLP parameter gradient", spec.param_count(), g.len())?;
    }

    // Forward pass carrying primal activations and tangents.
    let last = layers.len() - 1;
    let mut acts = vec![input.to_vec()];
    let mut tans = vec![tangent.to_vec()];
    let mut z_tans = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let mut a = layer.affine(&acts[l]);
        let zt = layer.linear(&tans[l]);
        if l < last {
            a.iter_mut().for_each(|v| *v = v.tanh());
            let t: Vec<f64> = a.iter().zip(&zt).map(|(a, z)| (1.0 - a * a) * z).collect();
            tans.push(t);
        } else {
            tans.push(zt.clone());
        }
        z_tans.push(zt);
        acts.push(a);
    }

    // Reverse pass. `a_bar`, `t_bar` are adjoints of the layer's primal output
    // and tangent output. Only the output tangent enters φ.
    let mut a_bar = vec![0.0; spec.output_dim];
    let mut t_bar = weight.to_vec();
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let (z_bar, zt_bar) = if l < last {
            let a = &acts[l + 1];
            let zt = &z_tans[l];
            let mut z_bar = vec![0.0; layer.fan_out];
            let mut zt_bar = vec![0.0; layer.fan_out];
            for o in 0..layer.fan_out {
                let s = 1.0 - a[o] * a[o];
                // t = s ⊙ ż, s = 1 - a², a = tanh(z)
                zt_bar[o] = t_bar[o] * s;
                let s_bar = t_bar[o] * zt[o];
                let a_total = a_bar[o] - 2.0 * a[o] * s_bar;
                z_bar[o] = a_total * s;
            }
            (z_bar, zt_bar)
        } else {
            (a_bar.clone(), t_bar.clone())
        };
        if let Some(g) = param_grad.as_deref_mut() {
            accumulate_layer_grad(g, offsets[l], layer, &z_bar, &acts[l], true);
            accumulate_layer_grad(g, offsets[l], layer, &zt_bar, &tans[l], false);
        }
        a_bar = layer.tr(&z_bar);
        t_bar = layer.tr(&zt_bar);
    }
    Ok(a_bar)
}
