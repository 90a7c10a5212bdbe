//! Minimal neural-network core: dense tensors, MLPs with Gaussian heads,
//! distribution quantities, a reverse-mode autodiff tape, and Adam.

pub mod adam;
pub mod dist;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::{clip_global_norm, Adam};
pub use dist::{
    entropy_bernoulli, entropy_gaussian, kl_gaussians, BernoulliVec, GaussianDiag, PROB_EPS,
};
pub use mlp::{Activation, GaussianNet, Layer, Mlp, WeightInit};
pub use tape::{gauss_grads, mlp_grads, BoundGauss, BoundLayer, BoundMlp, Grads, NodeId, Tape};
pub use tensor::Tensor;
