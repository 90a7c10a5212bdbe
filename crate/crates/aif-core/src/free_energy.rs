//! Variational and expected free energy.
//!
//! **Model learning** ([`model_losses`]) builds, per replayed experience,
//!
//! ```text
//!   L_s = KL( Q(s_end | o_end) ‖ P(s_end | s̃_start, π̂) )        (latent loss)
//!   L_o = 2/7·BCE_buffer + 1/7·BCE_machines + 4/7·MSE_R
//!         + β·KL( Q(s_end|o_end) ‖ N(0, I) )                     (observation loss)
//!   MSE_R = −ln(1 − MAE(pred_prefs, true_prefs) + ε)
//! ```
//!
//! where the reconstruction decodes a reparameterized sample of the
//! posterior, and dropout is live on transition/decoder hidden layers.
//! Gradients are routed per network within the model step: transition
//! parameters from ∂L_s, decoder parameters from ∂L_o, encoder parameters
//! from ∂(L_s + L_o) — the encoder shapes both the transition target and
//! the reconstructed posterior, and the β-KL regularizer has no other
//! parameter to act on. Actor parameters are never touched here.
//!
//! **Policy optimization** ([`efe_estimate`]) scores the actor's current
//! policy at an observation by rolling the frozen generative model one
//! abstract step forward:
//!
//! ```text
//!   G = E[ −ln Ψ(ô) ]                                  (extrinsic)
//!     + E[ H(s''|imagined ô) − H(s'|s̃, π̂) ]           (state epistemic)
//!     + E[ H(ô_dropout) − H(ô_base) ]                  (parameter epistemic)
//! ```
//!
//! with S1 outer prediction samples and S2 inner MC-dropout samples per
//! outer sample. Only the actor receives gradients; the model networks are
//! bound as constants.

use crate::agent::replay::Experience;
use crate::error::{Error, Result};
use crate::model::{Actor, GenerativeModel};
use crate::nn::dist::{BernoulliVec, PROB_EPS};
use crate::nn::tape::{gauss_grads, mlp_grads, NodeId, Tape};
use crate::nn::tensor::Tensor;
use crate::rng::Stream;
use crate::sim::obs::{ObservationVec, PREF_CHANNELS};

/// Loss weight of the buffer one-hot group.
pub const W_BUFFER: f64 = 2.0 / 7.0;
/// Loss weight of the machine one-hot groups.
pub const W_MACHINES: f64 = 1.0 / 7.0;
/// Loss weight of the preference channels.
pub const W_PREFS: f64 = 4.0 / 7.0;
/// ε inside the preference log-MAE loss.
pub const PREF_EPS: f64 = 1e-6;

/// Batch-mean losses from one model-learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub l_s: f64,
    pub l_o: f64,
    pub bce_buffer: f64,
    pub bce_machines: f64,
    pub mse_prefs: f64,
    pub kl_prior: f64,
}

/// Parameter gradients for the three model networks, in `tensors()` order.
pub struct ModelGrads {
    pub encoder: Vec<Tensor>,
    pub transition: Vec<Tensor>,
    pub decoder: Vec<Tensor>,
}

/// Evaluation-level reconstruction loss (mirrors the tape computation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconLoss {
    pub bce_buffer: f64,
    pub bce_machines: f64,
    pub mse_prefs: f64,
    /// 2/7·bce_buffer + 1/7·bce_machines + 4/7·mse_prefs.
    pub weighted: f64,
}

/// Group-wise reconstruction loss of a decoded prediction against a target
/// observation: mean BCE over the buffer block, mean BCE over all machine
/// blocks, and the log-MAE preference loss.
pub fn reconstruction_loss(
    pred: &BernoulliVec,
    target: &ObservationVec,
    model: &GenerativeModel,
) -> Result<ReconLoss> {
    let layout = &model.layout;
    if pred.dim() != layout.dim() || target.len() != layout.dim() {
        return Err(Error::Shape(format!(
            "reconstruction: pred {} / target {} vs layout {}",
            pred.dim(),
            target.len(),
            layout.dim()
        )));
    }
    let bce = |range: std::ops::Range<usize>| -> f64 {
        let n = range.len() as f64;
        range
            .map(|i| {
                let p = pred.probs[i];
                let t = target.as_slice()[i];
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n
    };
    let bce_buffer = bce(layout.buffer_range());
    let bce_machines = bce(layout.machines_range());
    let pr = layout.pref_range();
    let mae = pr
        .clone()
        .map(|i| (pred.probs[i] - target.as_slice()[i]).abs())
        .sum::<f64>()
        / PREF_CHANNELS as f64;
    let mse_prefs = -(1.0 - mae + PREF_EPS).ln();
    Ok(ReconLoss {
        bce_buffer,
        bce_machines,
        mse_prefs,
        weighted: W_BUFFER * bce_buffer + W_MACHINES * bce_machines + W_PREFS * mse_prefs,
    })
}

/// Build the model-learning losses over a batch and return gradients routed
/// per network: transition from ∂L_s, decoder from ∂L_o, encoder from
/// ∂(L_s + L_o). Dropout is live; `dropout_rng`/`reparam_rng` supply the
/// noise.
pub fn model_losses(
    model: &GenerativeModel,
    batch: &[&Experience],
    beta: f64,
    dropout_rng: &mut Stream,
    reparam_rng: &mut Stream,
) -> Result<(LossReport, ModelGrads)> {
    if batch.is_empty() {
        return Err(Error::Input("model_losses: empty batch".into()));
    }
    let layout = &model.layout;
    let latent = model.arch.latent_dim;
    let pi_dim = model.pi_dim();
    for (k, e) in batch.iter().enumerate() {
        layout.validate(e.o_start.as_slice()).map_err(|err| {
            Error::Input(format!("batch[{k}].o_start invalid: {err}"))
        })?;
        layout.validate(e.o_end.as_slice()).map_err(|err| {
            Error::Input(format!("batch[{k}].o_end invalid: {err}"))
        })?;
        if e.pi_hat.len() != pi_dim {
            return Err(Error::Shape(format!(
                "batch[{k}].pi_hat dim {} vs expected {pi_dim}",
                e.pi_hat.len()
            )));
        }
    }

    let mut tape = Tape::new();
    let enc = tape.bind_gauss(&model.encoder, true);
    let trans = tape.bind_gauss(&model.transition, true);
    let dec = tape.bind_mlp(&model.decoder, true);
    let zeros = vec![0.0; latent];
    let ones = vec![1.0; latent];
    let prior_mean = tape.leaf_const(&zeros);
    let prior_var = tape.leaf_const(&ones);

    let mut ls_terms = Vec::with_capacity(batch.len());
    let mut klp_terms = Vec::with_capacity(batch.len());
    let mut bce_b_terms = Vec::with_capacity(batch.len());
    let mut bce_m_terms = Vec::with_capacity(batch.len());
    let mut mse_terms = Vec::with_capacity(batch.len());

    for e in batch {
        // Posterior at the window start, sampled with reparameterization.
        let o_start = tape.leaf_const(e.o_start.as_slice());
        let (m1, v1) = tape.forward_gauss(&model.encoder, &enc, o_start, false, None);
        let s_start = tape.reparam_sample(m1, v1, reparam_rng);

        // Prior over the end latent via the transition net (dropout live).
        let pi = tape.leaf_const(&e.pi_hat);
        let trans_in = tape.concat(&[s_start, pi]);
        let (pm, pv) =
            tape.forward_gauss(&model.transition, &trans, trans_in, true, Some(dropout_rng));

        // Posterior at the window end.
        let o_end = tape.leaf_const(e.o_end.as_slice());
        let (m2, v2) = tape.forward_gauss(&model.encoder, &enc, o_end, false, None);

        ls_terms.push(tape.gauss_kl(m2, v2, pm, pv));
        klp_terms.push(tape.gauss_kl(m2, v2, prior_mean, prior_var));

        // Reconstruction decodes a reparameterized posterior sample.
        let s_end = tape.reparam_sample(m2, v2, reparam_rng);
        let (pred, _) = tape.forward_mlp(&model.decoder, &dec, s_end, true, Some(dropout_rng));

        let br = layout.buffer_range();
        let pb = tape.slice(pred, br.start, br.len());
        bce_b_terms.push(tape.bce_mean(pb, &e.o_end.as_slice()[br]));
        let mr = layout.machines_range();
        let pmch = tape.slice(pred, mr.start, mr.len());
        bce_m_terms.push(tape.bce_mean(pmch, &e.o_end.as_slice()[mr]));
        let rr = layout.pref_range();
        let pprefs = tape.slice(pred, rr.start, rr.len());
        mse_terms.push(tape.pref_loss(pprefs, &e.o_end.as_slice()[rr], PREF_EPS));
    }

    let inv_b = 1.0 / batch.len() as f64;
    let mut mean = |terms: &[NodeId]| -> NodeId {
        let s = tape.add_n(terms);
        tape.scale(s, inv_b)
    };
    let l_s = mean(&ls_terms);
    let kl_prior = mean(&klp_terms);
    let bce_b = mean(&bce_b_terms);
    let bce_m = mean(&bce_m_terms);
    let mse_r = mean(&mse_terms);

    let wb = tape.scale(bce_b, W_BUFFER);
    let wm = tape.scale(bce_m, W_MACHINES);
    let wr = tape.scale(mse_r, W_PREFS);
    let wkl = tape.scale(kl_prior, beta);
    let l_o = tape.add_n(&[wb, wm, wr, wkl]);

    let report = LossReport {
        l_s: tape.scalar(l_s),
        l_o: tape.scalar(l_o),
        bce_buffer: tape.scalar(bce_b),
        bce_machines: tape.scalar(bce_m),
        mse_prefs: tape.scalar(mse_r),
        kl_prior: tape.scalar(kl_prior),
    };
    if !report.l_s.is_finite() || !report.l_o.is_finite() {
        return Err(Error::numerical(
            "model_losses",
            format!("L_s = {}, L_o = {}", report.l_s, report.l_o),
        ));
    }

    // Routing: the transition (θ_s) learns from L_s, the decoder (θ_o) from
    // L_o, and the encoder (φ_s) from both — L_o's reconstruction decodes a
    // posterior sample and its β-KL regularizes the posterior, so both terms
    // act on the encoder (a literal L_s-only encoder leaves the β-KL with no
    // parameter to influence, starves the posterior of reconstruction
    // pressure, and collapses the generative model). The actor is untouched
    // by any of this.
    let g_ls = tape.backward(l_s);
    let g_lo = tape.backward(l_o);
    let mut encoder = gauss_grads(&tape, &g_ls, &model.encoder, &enc);
    let enc_rec = gauss_grads(&tape, &g_lo, &model.encoder, &enc);
    for (a, b) in encoder.iter_mut().zip(&enc_rec) {
        for (x, y) in a.data.iter_mut().zip(&b.data) {
            *x += y;
        }
    }
    let grads = ModelGrads {
        encoder,
        transition: gauss_grads(&tape, &g_ls, &model.transition, &trans),
        decoder: mlp_grads(&tape, &g_lo, &model.decoder, &dec),
    };
    Ok((report, grads))
}

/// The three EFE terms and their sum, batch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfeBreakdown {
    pub extrinsic: f64,
    pub state_epistemic: f64,
    pub param_epistemic: f64,
    pub total: f64,
}

/// Estimate the expected free energy of the actor's policy over a batch of
/// observations and return ∂G/∂φ_a (actor parameters only; the generative
/// model is frozen).
///
/// `s1` outer prediction samples feed the extrinsic and state-epistemic
/// terms; `s2` inner MC-dropout samples per outer sample feed the
/// parameter-epistemic term.
pub fn efe_estimate(
    model: &GenerativeModel,
    actor: &Actor,
    observations: &[&ObservationVec],
    s1: usize,
    s2: usize,
    dropout_rng: &mut Stream,
    reparam_rng: &mut Stream,
) -> Result<(EfeBreakdown, Vec<Tensor>)> {
    if observations.is_empty() {
        return Err(Error::Input("efe_estimate: empty observation batch".into()));
    }
    if s1 == 0 || s2 == 0 {
        return Err(Error::Input("efe_estimate: s1 and s2 must be ≥ 1".into()));
    }
    let layout = &model.layout;
    for (k, o) in observations.iter().enumerate() {
        layout.validate(o.as_slice()).map_err(|err| {
            Error::Input(format!("observation[{k}] invalid: {err}"))
        })?;
    }

    let mut tape = Tape::new();
    let enc = tape.bind_gauss(&model.encoder, false);
    let trans = tape.bind_gauss(&model.transition, false);
    let dec = tape.bind_mlp(&model.decoder, false);
    let act = tape.bind_mlp(&actor.net, true);

    let pref_start = layout.pref_range().start;
    let comp_off = layout.composite_index() - pref_start;

    let mut ext_per_obs = Vec::with_capacity(observations.len());
    let mut sta_per_obs = Vec::with_capacity(observations.len());
    let mut par_per_obs = Vec::with_capacity(observations.len());

    for o in observations {
        // Current belief: evaluation-pass encode, then one posterior sample
        // as a constant (no actor dependence flows through it).
        let belief = model.encoder.forward(o.as_slice())?;
        let s_now = crate::nn::dist::GaussianDiag {
            mean: belief.mean,
            var: belief.var,
        }
        .sample(reparam_rng);
        let s_now = tape.leaf_const(&s_now);

        // Policy embedding with the actor live on the tape.
        let o_node = tape.leaf_const(o.as_slice());
        let (_, layer_outs) = tape.forward_mlp(&actor.net, &act, o_node, false, None);
        let h1 = layer_outs[0];
        let probs = *layer_outs.last().expect("actor layers");
        let pi = tape.concat(&[o_node, h1, probs]);
        let trans_in = tape.concat(&[s_now, pi]);

        let mut ext_terms = Vec::with_capacity(s1);
        let mut sta_terms = Vec::with_capacity(s1);
        let mut par_terms = Vec::with_capacity(s1 * s2);

        for _ in 0..s1 {
            // Outer sample: dropout-off prediction of the next latent and
            // its decoded observation distribution.
            let (pm, pv) = tape.forward_gauss(&model.transition, &trans, trans_in, false, None);
            let s_pred = tape.reparam_sample(pm, pv, reparam_rng);
            let (pred, _) = tape.forward_mlp(&model.decoder, &dec, s_pred, false, None);

            // Extrinsic: −ln Ψ on the composite-preference channel.
            let psi_slice = tape.slice(pred, pref_start + comp_off, 1);
            let psi_c = tape.clamp(psi_slice, PROB_EPS, 1.0);
            let lnp = tape.ln(psi_c);
            ext_terms.push(tape.scale(lnp, -1.0));

            // State epistemic: H(s''| imagined ô) − H(s'| s̃, π̂).
            // The imagined observation hardens one-hot groups to constants
            // but keeps the preference channels live so the actor feels how
            // its policy moves the predicted preferences.
            let mut hard = vec![0.0; pref_start];
            {
                let pv_vals = tape.value(pred);
                let mut harden = |range: std::ops::Range<usize>| {
                    let slice = &pv_vals[range.clone()];
                    let mut best = 0;
                    for (i, &p) in slice.iter().enumerate() {
                        if p > slice[best] {
                            best = i;
                        }
                    }
                    hard[range.start + best] = 1.0;
                };
                harden(layout.buffer_range());
                for i in 0..layout.machines {
                    harden(layout.machine_range(i));
                }
            }
            let hard_node = tape.leaf_const(&hard);
            let live_prefs = tape.slice(pred, pref_start, PREF_CHANNELS);
            let imagined = tape.concat(&[hard_node, live_prefs]);
            let (_, ev) = tape.forward_gauss(&model.encoder, &enc, imagined, false, None);
            let h_next = tape.gauss_entropy(ev);
            let h_pred = tape.gauss_entropy(pv);
            let neg_h_pred = tape.scale(h_pred, -1.0);
            sta_terms.push(tape.add_n(&[h_next, neg_h_pred]));

            // Parameter epistemic: MC-dropout ensemble spread.
            for _ in 0..s2 {
                let (pm2, pv2) = tape.forward_gauss(
                    &model.transition,
                    &trans,
                    trans_in,
                    true,
                    Some(dropout_rng),
                );
                let s_a = tape.reparam_sample(pm2, pv2, reparam_rng);
                let (pred_a, _) =
                    tape.forward_mlp(&model.decoder, &dec, s_a, true, Some(dropout_rng));
                let h_a = tape.bern_entropy(pred_a);

                let s_b = tape.reparam_sample(pm, pv, reparam_rng);
                let (pred_b, _) = tape.forward_mlp(&model.decoder, &dec, s_b, false, None);
                let h_b = tape.bern_entropy(pred_b);
                let neg_h_b = tape.scale(h_b, -1.0);
                par_terms.push(tape.add_n(&[h_a, neg_h_b]));
            }
        }

        let ext_sum = tape.add_n(&ext_terms);
        ext_per_obs.push(tape.scale(ext_sum, 1.0 / s1 as f64));
        let sta_sum = tape.add_n(&sta_terms);
        sta_per_obs.push(tape.scale(sta_sum, 1.0 / s1 as f64));
        let par_sum = tape.add_n(&par_terms);
        par_per_obs.push(tape.scale(par_sum, 1.0 / (s1 * s2) as f64));
    }

    let inv_n = 1.0 / observations.len() as f64;
    let ext_sum = tape.add_n(&ext_per_obs);
    let extrinsic = tape.scale(ext_sum, inv_n);
    let sta_sum = tape.add_n(&sta_per_obs);
    let state_ep = tape.scale(sta_sum, inv_n);
    let par_sum = tape.add_n(&par_per_obs);
    let param_ep = tape.scale(par_sum, inv_n);
    let total = tape.add_n(&[extrinsic, state_ep, param_ep]);

    let breakdown = EfeBreakdown {
        extrinsic: tape.scalar(extrinsic),
        state_epistemic: tape.scalar(state_ep),
        param_epistemic: tape.scalar(param_ep),
        total: tape.scalar(total),
    };
    if !breakdown.total.is_finite() {
        return Err(Error::numerical("efe_estimate", format!("G = {}", breakdown.total)));
    }

    let g = tape.backward(total);
    let actor_grads = mlp_grads(&tape, &g, &actor.net, &act);
    Ok((breakdown, actor_grads))
}

/// Map expected free energies of alternative policies to probabilities:
/// P(π_i) ∝ exp(−G_i). Lower G ⇒ higher probability. Diagnostic only.
pub fn policy_softmax(g: &[f64]) -> Vec<f64> {
    if g.is_empty() {
        return Vec::new();
    }
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out: Vec<f64> = g.iter().map(|&x| (-(x - min)).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}
