//! Multilayer perceptrons and Gaussian-headed networks.
//!
//! The numeric primitives here ([`matvec_into`], [`apply_activation`]) are
//! shared by the evaluation forward pass and the autodiff tape so the two
//! paths produce bit-identical values — the tape is the training path, the
//! plain forward is the acting/evaluation path, and tests pin their equality.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::dist::GaussianDiag;
use crate::nn::tensor::Tensor;
use crate::rng::Stream;

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
    /// Logistic sigmoid clamped to [eps, 1−eps] so downstream logs are safe.
    SigmoidClamped { eps: f64 },
    /// `floor + scale · sigmoid(z)`: a smooth positive head for variances.
    /// The additive floor keeps the output ≥ floor without killing gradients.
    ScaledSigmoid { scale: f64, floor: f64 },
    Softmax,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `out = W·x + b` with `W` row-major `[rows × cols]`.
pub(crate) fn matvec_into(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        *o = row.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    }
}

/// Apply `act` in place to a preactivation vector.
pub(crate) fn apply_activation(act: Activation, z: &mut [f64]) {
    match act {
        Activation::Linear => {}
        Activation::Tanh => {
            for v in z.iter_mut() {
                *v = v.tanh();
            }
        }
        Activation::Relu => {
            for v in z.iter_mut() {
                *v = v.max(0.0);
            }
        }
        Activation::SigmoidClamped { eps } => {
            for v in z.iter_mut() {
                *v = sigmoid(*v).clamp(eps, 1.0 - eps);
            }
        }
        Activation::ScaledSigmoid { scale, floor } => {
            for v in z.iter_mut() {
                *v = floor + scale * sigmoid(*v);
            }
        }
        Activation::Softmax => {
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in z.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in z.iter_mut() {
                *v /= sum;
            }
        }
    }
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// Xavier/Glorot uniform: U(−√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))).
    Xavier,
    /// Xavier scaled by a factor — small-gain heads that start near zero
    /// output but still break symmetry.
    XavierScaled(f64),
    /// All zeros — heads whose initial output should be an exact constant.
    Zero,
}

/// One dense layer. `dropout` is the drop probability applied to this
/// layer's *output* during training-mode tape passes; the plain forward
/// never drops (inverted dropout is identity at evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub dropout: f64,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout: f64,
        init: WeightInit,
        rng: &mut Stream,
    ) -> Self {
        let mut weight = Tensor::zeros(&[out_dim, in_dim]);
        match init {
            WeightInit::Zero => {}
            WeightInit::Xavier | WeightInit::XavierScaled(_) => {
                let gain = match init {
                    WeightInit::XavierScaled(g) => g,
                    _ => 1.0,
                };
                let limit = gain * (6.0 / (in_dim + out_dim) as f64).sqrt();
                for w in weight.data.iter_mut() {
                    *w = rng.random_range(-limit..limit);
                }
            }
        }
        Layer { weight, bias: Tensor::zeros(&[out_dim]), activation, dropout }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape[0]
    }

    /// Plain forward: affine map then activation, no dropout.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "layer expects input dim {}, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        let mut out = self.bias.data.clone();
        let mut z = vec![0.0; self.out_dim()];
        matvec_into(&self.weight.data, self.out_dim(), self.in_dim(), x, &mut z);
        for (o, zi) in out.iter_mut().zip(z.iter()) {
            *o += zi;
        }
        apply_activation(self.activation, &mut out);
        Ok(out)
    }
}

/// A stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn in_dim(&self) -> usize {
        self.layers.first().map(|l| l.in_dim()).unwrap_or(0)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim()).unwrap_or(0)
    }

    /// Plain forward pass (no dropout).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Forward pass that also returns every layer's post-activation output
    /// (used to expose hidden activations, e.g. the actor's h1).
    pub fn forward_all(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h)?;
            outs.push(h.clone());
        }
        Ok(outs)
    }

    /// All parameter tensors, layer by layer, weight before bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }
}

/// An MLP trunk with diagonal-Gaussian mean/variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNet {
    pub trunk: Mlp,
    pub mean_head: Layer,
    pub var_head: Layer,
}

impl GaussianNet {
    pub fn in_dim(&self) -> usize {
        self.trunk.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_head.out_dim()
    }

    /// Plain forward to a diagonal Gaussian (no dropout).
    pub fn forward(&self, x: &[f64]) -> Result<GaussianDiag> {
        let h = self.trunk.forward(x)?;
        let mean = self.mean_head.forward(&h)?;
        let var = self.var_head.forward(&h)?;
        Ok(GaussianDiag { mean, var })
    }

    /// Trunk tensors, then mean head, then var head.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.trunk.tensors();
        v.extend([&self.mean_head.weight, &self.mean_head.bias]);
        v.extend([&self.var_head.weight, &self.var_head.bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.trunk.tensors_mut();
        v.extend([&mut self.mean_head.weight, &mut self.mean_head.bias]);
        v.extend([&mut self.var_head.weight, &mut self.var_head.bias]);
        v
    }
}
