//! The agent's networks and the mappings between them.
//!
//! Four networks over observation space O (dim 44 by default) and latent
//! space S (dim 16):
//!
//! * **Encoder** Q_φs(s|o): o → diagonal Gaussian over S;
//! * **Transition** P_θs(s'|s, π̂): latent + policy embedding → Gaussian over
//!   S, dropout on hidden layers (the MC-dropout ensemble for parameter
//!   epistemics);
//! * **Decoder** P_θo(o|s): s → per-channel Bernoulli probabilities,
//!   dropout on hidden layers;
//! * **Actor** Q_φa(a|o): o → softmax over the c wake targets.
//!
//! Two mappings close the loop:
//!
//! * Π (policy embedding): π̂ = [o | actor h1 | actor probs] — what the
//!   transition net conditions on;
//! * Ψ (preference extraction): the decoder's predicted composite-preference
//!   channel, clamped positive, whose −log is the extrinsic EFE term.
//!
//! Initialization is deliberately asymmetric: trunks are Xavier, Gaussian
//! mean heads are small-gain Xavier (×0.1), variance heads and the decoder
//! output layer start at zero. That puts the initial posterior close to the
//! prior N(0, floor+λ_s/2) and the initial reconstruction at 0.5 per
//! channel — gradients flow from step one without a huge initial KL.

use crate::error::{Error, Result};
use crate::nn::dist::{BernoulliVec, GaussianDiag, PROB_EPS};
use crate::nn::mlp::{Activation, GaussianNet, Layer, Mlp, WeightInit};
use crate::rng::Stream;
use crate::sim::obs::{ObsLayout, ObservationVec};
use crate::sim::state::Action;

/// Network architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub transition_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub actor_hidden: usize,
    /// Scale λ_s of the variance head's sigmoid.
    pub lambda_s: f64,
    /// Additive variance floor.
    pub var_floor: f64,
    /// Drop probability on transition/decoder hidden layers.
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            latent_dim: 16,
            encoder_hidden: vec![64, 64],
            transition_hidden: vec![128, 128],
            decoder_hidden: vec![64, 64],
            actor_hidden: 32,
            lambda_s: 1.5,
            var_floor: 1e-4,
            dropout: 0.1,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent_dim", "must be ≥ 1"));
        }
        for (field, dims) in [
            ("encoder_hidden", &self.encoder_hidden),
            ("transition_hidden", &self.transition_hidden),
            ("decoder_hidden", &self.decoder_hidden),
        ] {
            if dims.is_empty() || dims.iter().any(|&d| d == 0) {
                return Err(Error::Config {
                    field,
                    reason: format!("layer widths must be non-empty and positive, got {dims:?}"),
                });
            }
        }
        if self.actor_hidden == 0 {
            return Err(Error::config("actor_hidden", "must be ≥ 1"));
        }
        if !(self.lambda_s.is_finite() && self.lambda_s > 0.0) {
            return Err(Error::config("lambda_s", "must be finite and > 0"));
        }
        if !(self.var_floor.is_finite() && self.var_floor > 0.0) {
            return Err(Error::config("var_floor", "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must be in [0, 1)"));
        }
        Ok(())
    }
}

fn build_trunk(
    in_dim: usize,
    hidden: &[usize],
    dropout: f64,
    rng: &mut Stream,
) -> Mlp {
    let mut layers = Vec::new();
    let mut prev = in_dim;
    for &h in hidden {
        layers.push(Layer::new(prev, h, Activation::Tanh, dropout, WeightInit::Xavier, rng));
        prev = h;
    }
    Mlp { layers }
}

fn build_gaussian_net(
    in_dim: usize,
    hidden: &[usize],
    latent: usize,
    dropout: f64,
    arch: &ArchConfig,
    rng: &mut Stream,
) -> GaussianNet {
    let trunk = build_trunk(in_dim, hidden, dropout, rng);
    let h_last = *hidden.last().expect("validated non-empty");
    let mean_head = Layer::new(
        h_last,
        latent,
        Activation::Tanh,
        0.0,
        WeightInit::XavierScaled(0.1),
        rng,
    );
    let var_head = Layer::new(
        h_last,
        latent,
        Activation::ScaledSigmoid { scale: arch.lambda_s, floor: arch.var_floor },
        0.0,
        WeightInit::Zero,
        rng,
    );
    GaussianNet { trunk, mean_head, var_head }
}

/// Encoder + transition + decoder, plus the observation layout they share.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub encoder: GaussianNet,
    pub transition: GaussianNet,
    pub decoder: Mlp,
    pub layout: ObsLayout,
    pub arch: ArchConfig,
}

impl GenerativeModel {
    /// Build with fresh weights drawn from `rng` (encoder, transition,
    /// decoder in that order — the draw order is part of determinism).
    pub fn new(layout: ObsLayout, arch: ArchConfig, rng: &mut Stream) -> Result<Self> {
        arch.validate()?;
        let obs_dim = layout.dim();
        let pi_dim = obs_dim + arch.actor_hidden + layout.machines;
        let encoder =
            build_gaussian_net(obs_dim, &arch.encoder_hidden, arch.latent_dim, 0.0, &arch, rng);
        let transition = build_gaussian_net(
            arch.latent_dim + pi_dim,
            &arch.transition_hidden,
            arch.latent_dim,
            arch.dropout,
            &arch,
            rng,
        );
        let mut decoder = build_trunk(arch.latent_dim, &arch.decoder_hidden, arch.dropout, rng);
        decoder.layers.push(Layer::new(
            *arch.decoder_hidden.last().expect("validated non-empty"),
            obs_dim,
            Activation::SigmoidClamped { eps: PROB_EPS },
            0.0,
            WeightInit::Zero,
            rng,
        ));
        Ok(GenerativeModel { encoder, transition, decoder, layout, arch })
    }

    /// Dimension of the policy embedding π̂ the transition net conditions on.
    pub fn pi_dim(&self) -> usize {
        self.layout.dim() + self.arch.actor_hidden + self.layout.machines
    }

    /// Q_φs(s|o): posterior belief for an observation.
    pub fn encode(&self, o: &ObservationVec) -> Result<GaussianDiag> {
        self.layout.validate(o.as_slice())?;
        self.encoder.forward(o.as_slice())
    }

    /// P_θs(s'|s, π̂): prior over the next latent (evaluation pass, dropout
    /// off).
    pub fn transit(&self, s: &[f64], pi_hat: &[f64]) -> Result<GaussianDiag> {
        if s.len() != self.arch.latent_dim {
            return Err(Error::Shape(format!(
                "latent dim {} expected, got {}",
                self.arch.latent_dim,
                s.len()
            )));
        }
        if pi_hat.len() != self.pi_dim() {
            return Err(Error::Shape(format!(
                "policy embedding dim {} expected, got {}",
                self.pi_dim(),
                pi_hat.len()
            )));
        }
        let mut x = Vec::with_capacity(s.len() + pi_hat.len());
        x.extend_from_slice(s);
        x.extend_from_slice(pi_hat);
        self.transition.forward(&x)
    }

    /// P_θo(o|s): per-channel Bernoulli probabilities (evaluation pass).
    pub fn decode(&self, s: &[f64]) -> Result<BernoulliVec> {
        if s.len() != self.arch.latent_dim {
            return Err(Error::Shape(format!(
                "latent dim {} expected, got {}",
                self.arch.latent_dim,
                s.len()
            )));
        }
        Ok(BernoulliVec { probs: self.decoder.forward(s)? })
    }
}

/// Ψ: pull the predicted composite-preference channel out of a decoded
/// observation, clamped to [PROB_EPS, 1] so −ln Ψ is finite.
pub fn psi(pred: &BernoulliVec, layout: &ObsLayout) -> Result<f64> {
    if pred.dim() != layout.dim() {
        return Err(Error::Shape(format!(
            "prediction dim {} vs layout dim {}",
            pred.dim(),
            layout.dim()
        )));
    }
    Ok(pred.probs[layout.composite_index()].clamp(PROB_EPS, 1.0))
}

/// Collapse decoded channel probabilities to a concrete observation: each
/// one-hot group takes its argmax (ties → lowest index), preference channels
/// pass through clamped to [0, 1].
pub fn sample_prediction(pred: &BernoulliVec, layout: &ObsLayout) -> Result<ObservationVec> {
    if pred.dim() != layout.dim() {
        return Err(Error::Shape(format!(
            "prediction dim {} vs layout dim {}",
            pred.dim(),
            layout.dim()
        )));
    }
    let mut v = vec![0.0; layout.dim()];
    let mut one_hot = |range: std::ops::Range<usize>| {
        let slice = &pred.probs[range.clone()];
        let mut best = 0;
        for (i, &p) in slice.iter().enumerate() {
            if p > slice[best] {
                best = i;
            }
        }
        v[range.start + best] = 1.0;
    };
    one_hot(layout.buffer_range());
    for i in 0..layout.machines {
        one_hot(layout.machine_range(i));
    }
    for i in layout.pref_range() {
        v[i] = pred.probs[i].clamp(0.0, 1.0);
    }
    ObservationVec::new(layout, v)
}

/// Q_φa(a|o): softmax policy over wake targets {1..c}.
#[derive(Debug, Clone)]
pub struct Actor {
    pub net: Mlp,
}

impl Actor {
    pub fn new(layout: ObsLayout, arch: &ArchConfig, rng: &mut Stream) -> Result<Self> {
        arch.validate()?;
        let net = Mlp {
            layers: vec![
                Layer::new(layout.dim(), arch.actor_hidden, Activation::Relu, 0.0, WeightInit::Xavier, rng),
                Layer::new(arch.actor_hidden, layout.machines, Activation::Softmax, 0.0, WeightInit::Xavier, rng),
            ],
        };
        Ok(Actor { net })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.net.out_dim()
    }

    /// Action probabilities and the first hidden activation h1 (the piece of
    /// the policy embedding that carries the actor's internal state).
    pub fn forward(&self, o: &ObservationVec) -> Result<(Vec<f64>, Vec<f64>)> {
        let outs = self.net.forward_all(o.as_slice())?;
        let h1 = outs[0].clone();
        let probs = outs.last().expect("actor has layers").clone();
        Ok((probs, h1))
    }

    /// Π: the policy embedding π̂ = [o | h1 | action probabilities].
    pub fn policy_repr(&self, o: &ObservationVec) -> Result<Vec<f64>> {
        let (probs, h1) = self.forward(o)?;
        let mut pi = Vec::with_capacity(o.len() + h1.len() + probs.len());
        pi.extend_from_slice(o.as_slice());
        pi.extend_from_slice(&h1);
        pi.extend_from_slice(&probs);
        Ok(pi)
    }

    /// Sample a wake target from the policy (index i ↦ target i+1).
    pub fn sample_action(&self, probs: &[f64], rng: &mut Stream) -> Action {
        use rand::Rng;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Action::new(i + 1);
            }
        }
        Action::new(probs.len())
    }

    /// Greedy wake target (ties → lowest index).
    pub fn argmax_action(probs: &[f64]) -> Action {
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        Action::new(best + 1)
    }
}
