//! Diagonal Gaussians, Bernoulli vectors, and their closed-form information
//! quantities (KL divergence, differential and discrete entropies).
//!
//! Every closed form here has a Monte-Carlo twin in the tests; the autodiff
//! tape re-implements the same formulas as fused ops with hand-derived
//! gradients, and the acceptance suite cross-checks all three.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Numerical floor used when clamping probabilities before logs.
pub const PROB_EPS: f64 = 1e-6;

/// Diagonal Gaussian N(mean, diag(var)).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDiag {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianDiag {
    /// Standard normal of dimension `d`: N(0, I).
    pub fn standard(d: usize) -> Self {
        GaussianDiag { mean: vec![0.0; d], var: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw one sample: mean + sqrt(var) ⊙ z with z ~ N(0, I).
    pub fn sample(&self, rng: &mut Stream) -> Vec<f64> {
        self.mean
            .iter()
            .zip(self.var.iter())
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect()
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        const LN_2PI: f64 = 1.8378770664093453;
        self.mean
            .iter()
            .zip(self.var.iter())
            .zip(x.iter())
            .map(|((m, v), xi)| {
                let d = xi - m;
                -0.5 * (LN_2PI + v.ln() + d * d / v)
            })
            .sum()
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.mean.len() != self.var.len() {
            return Err(Error::Shape(format!(
                "{what}: mean dim {} != var dim {}",
                self.mean.len(),
                self.var.len()
            )));
        }
        for (i, &v) in self.var.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Numerical {
                    context: what.into(),
                    detail: format!("variance[{i}] = {v} must be finite and > 0"),
                });
            }
        }
        Ok(())
    }
}

/// KL(q ‖ p) between diagonal Gaussians:
/// 0.5 Σ [ ln(p.var/q.var) + (q.var + (q.mean − p.mean)²)/p.var − 1 ].
pub fn kl_gaussians(q: &GaussianDiag, p: &GaussianDiag) -> Result<f64> {
    q.check("kl q")?;
    p.check("kl p")?;
    if q.dim() != p.dim() {
        return Err(Error::Shape(format!("kl dims {} vs {}", q.dim(), p.dim())));
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let dm = q.mean[i] - p.mean[i];
        kl += 0.5 * ((p.var[i] / q.var[i]).ln() + (q.var[i] + dm * dm) / p.var[i] - 1.0);
    }
    Ok(kl)
}

/// Differential entropy of a diagonal Gaussian: 0.5 Σ ln(2πe·var).
pub fn entropy_gaussian(g: &GaussianDiag) -> Result<f64> {
    g.check("entropy")?;
    const LN_2PI_E: f64 = 2.837877066409345;
    Ok(g.var.iter().map(|v| 0.5 * (LN_2PI_E + v.ln())).sum())
}

/// A vector of independent Bernoulli success probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliVec {
    pub probs: Vec<f64>,
}

impl BernoulliVec {
    pub fn dim(&self) -> usize {
        self.probs.len()
    }
}

/// Total entropy (nats) of independent Bernoullis: Σ −p ln p − (1−p) ln(1−p).
/// Probabilities are clamped to [PROB_EPS, 1−PROB_EPS] before the logs.
pub fn entropy_bernoulli(b: &BernoulliVec) -> f64 {
    b.probs
        .iter()
        .map(|&p| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
        })
        .sum()
}
